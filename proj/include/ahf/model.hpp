#pragma once

#include <optional>
#include <vector>

#include "ahf/backbone.hpp"
#include "ahf/config.hpp"
#include "ahf/objectives.hpp"

namespace ahf {

/// Encoder(s) plus the shared identity classifier. With shared weights both
/// streams run through one encoder.
class ReidModel {
 public:
  ReidModel(const TrainConfig& cfg, int num_classes);

  backbone::VisionTransformer& encoder() { return encoder_; }
  const backbone::VisionTransformer& encoder() const { return encoder_; }
  backbone::VisionTransformer& hf_encoder() { return hf_encoder_ ? *hf_encoder_ : encoder_; }
  const backbone::VisionTransformer& hf_encoder() const { return hf_encoder_ ? *hf_encoder_ : encoder_; }
  objectives::Classifier& classifier() { return classifier_; }
  const objectives::Classifier& classifier() const { return classifier_; }
  int num_classes() const { return classifier_.num_classes(); }

  /// Every trainable array, with globally unique names.
  std::vector<backbone::Param*> parameters();
  std::vector<const backbone::Param*> parameters() const;
  void zero_grad();

 private:
  backbone::VisionTransformer encoder_;
  std::optional<backbone::VisionTransformer> hf_encoder_;
  objectives::Classifier classifier_;
};

}  // namespace ahf
