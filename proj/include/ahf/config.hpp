#pragma once

// Training configuration. Serialized as flat "key = value" text, one field
// per line; '#' starts a comment.

#include <cstdint>
#include <string>

#include "ahf/augment.hpp"
#include "ahf/backbone.hpp"
#include "ahf/evaluator.hpp"
#include "ahf/objectives.hpp"
#include "ahf/sampler.hpp"
#include "ahf/selection.hpp"

namespace ahf {

struct TrainConfig {
  // optimisation
  double lr = 0.001;
  int epochs = 150;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int warmup_epochs = 0;
  int batch_p = 8;
  int batch_k = 4;

  // objectives and selection
  double mu = 0.5;
  double lambda = 0.1;
  double margin = 0.3;
  double label_smoothing = 0.0;
  double classifier_init_std = 0.001;
  bool bn_neck = false;  // batch norm between class feature and classifier (ID loss only)
  std::string equilibrium_reduction = "mean_dim";  // mean_dim | sum_dim
  std::string head_aggregation = "per_head";       // per_head | average_first

  // pipeline switches
  bool dual_stream = true;    // false: single-stream ViT baseline
  bool fma_mix = true;        // false: pure high-pass second stream
  bool use_selection = true;  // false: all high-frequency tokens
  bool shared_weights = true;

  // frequency augmentation
  double cutoff_fraction = 0.05;

  // model
  int image_size = 64;
  int patch_size = 8;
  int channels = 3;
  int embed_dim = 128;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;

  // spatial augmentation
  double rotation_deg = 15.0;
  double brightness = 0.2;
  double contrast = 0.2;
  double brightness_prob = 0.5;
  double contrast_prob = 0.5;
  int pad = 10;
  bool horizontal_flip = false;

  // run control
  std::uint64_t seed = 0;
  int eval_every = 10;
  int checkpoint_every = 0;  // 0: final checkpoint only
  bool eval_train = false;   // also evaluate retrieval on the training set
  bool stop_at_train_rank1 = false;
  std::string metric = "normalized_euclidean";  // normalized_euclidean | euclidean
  std::string init_from;                         // optional checkpoint to warm-start from

  void validate() const;

  backbone::PatchConfig patch_config() const;
  data::AugmentConfig augment_config() const;
  data::BatchSpec batch_spec() const;
  objectives::LossOptions loss_options() const;
  selection::DualForwardOptions forward_options() const;
  eval::Metric eval_metric() const;

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig load(const std::string& path);
  void save(const std::string& path) const;
  /// Applies one "key=value" override.
  void set(const std::string& key, const std::string& value);

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace ahf
