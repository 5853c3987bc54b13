#pragma once
// In-memory synthetic image sets and small model configs shared by tests.
#include <string>

#include "ahf/config.hpp"
#include "ahf/manifest.hpp"
#include "ahf/synthetic.hpp"

namespace fixture {

inline ahf::data::ImageSet to_image_set(const std::vector<ahf::data::SynthImage>& images, int identities) {
  ahf::data::ImageSet set;
  for (int i = 0; i < identities; ++i) set.identities.push_back(ahf::data::identity_name(i));
  for (const auto& im : images) {
    set.images.push_back(im.rgb);
    set.labels.push_back(im.identity_index);
    set.names.push_back(im.identity + "_" + std::to_string(set.names.size()));
  }
  return set;
}

inline ahf::data::ImageSet synthetic_set(int identities, int per_identity, int size, std::uint64_t seed,
                                         ahf::data::Background bg = ahf::data::Background::Clutter) {
  ahf::data::SynthConfig sc;
  sc.identities = identities;
  sc.images_per_identity = per_identity;
  sc.size = size;
  sc.seed = seed;
  sc.background = bg;
  return to_image_set(ahf::data::generate_synthetic(sc), identities);
}

/// A few-second model: 32x32 input, 16 patches, one block.
inline ahf::TrainConfig tiny_config() {
  ahf::TrainConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.embed_dim = 16;
  c.depth = 1;
  c.heads = 2;
  c.mlp_ratio = 2.0;
  c.batch_p = 2;
  c.batch_k = 2;
  c.epochs = 2;
  c.lr = 0.01;
  c.pad = 4;
  c.eval_every = 0;
  return c;
}

}  // namespace fixture
