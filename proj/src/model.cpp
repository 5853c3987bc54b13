#include "ahf/model.hpp"

#include "ahf/random.hpp"

namespace ahf {

ReidModel::ReidModel(const TrainConfig& cfg, int num_classes)
    : encoder_(cfg.patch_config(), derive_seed(cfg.seed, {0xe4c0de})),
      classifier_(cfg.embed_dim, num_classes, derive_seed(cfg.seed, {0xc1a55}), cfg.classifier_init_std, cfg.bn_neck) {
  if (!cfg.shared_weights) {
    hf_encoder_.emplace(cfg.patch_config(), derive_seed(cfg.seed, {0x4fe4c0de}));
    for (auto* p : hf_encoder_->parameters()) p->name = "hf_encoder." + p->name;
  }
}

std::vector<backbone::Param*> ReidModel::parameters() {
  std::vector<backbone::Param*> ps = encoder_.parameters();
  if (hf_encoder_) {
    for (auto* p : hf_encoder_->parameters()) ps.push_back(p);
  }
  for (auto* p : classifier_.parameters()) ps.push_back(p);
  return ps;
}

std::vector<const backbone::Param*> ReidModel::parameters() const {
  auto mut = const_cast<ReidModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void ReidModel::zero_grad() {
  for (auto* p : parameters()) p->grad.setZero();
}

}  // namespace ahf
