#pragma once

// Identity-balanced (PK) batch sampling.

#include <cstdint>
#include <vector>

#include "ahf/random.hpp"

namespace ahf::data {

struct BatchSpec {
  int p = 8;  // identities per batch
  int k = 4;  // images per identity

  int batch_size() const { return p * k; }
  void validate() const;
};

struct BatchSlot {
  std::size_t image = 0;  // index into the image set
  int label = 0;
  std::uint64_t seed = 0;  // per-sample augmentation seed
};

class PkSampler {
 public:
  /// `labels[i]` is the dense identity label of image i.
  PkSampler(std::vector<int> labels, BatchSpec spec);

  const BatchSpec& spec() const { return spec_; }
  int num_identities() const { return static_cast<int>(by_label_.size()); }

  /// P identities without replacement; K images each, drawn with
  /// replacement only when the identity has fewer than K images.
  std::vector<BatchSlot> sample_batch(Rng& rng) const;

  /// max(1, images / (P K)).
  int batches_per_epoch() const;
  /// Batches of one epoch; a pure function of (seed, epoch).
  std::vector<std::vector<BatchSlot>> epoch(std::uint64_t seed, int epoch) const;

 private:
  BatchSpec spec_;
  std::size_t num_images_ = 0;
  std::vector<std::vector<std::size_t>> by_label_;
};

}  // namespace ahf::data
