#include "ahf/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "ahf/errors.hpp"

namespace ahf::data {

void BatchSpec::validate() const {
  if (p < 2 || k < 2) throw config_error("BatchSpec: P and K must both be >= 2");
}

PkSampler::PkSampler(std::vector<int> labels, BatchSpec spec) : spec_(spec), num_images_(labels.size()) {
  spec_.validate();
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw input_error("PkSampler: negative label");
    max_label = std::max(max_label, l);
  }
  by_label_.resize(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) by_label_[static_cast<std::size_t>(labels[i])].push_back(i);
  for (const auto& imgs : by_label_)
    if (imgs.empty()) throw input_error("PkSampler: labels must be dense (every identity needs an image)");
  if (num_identities() < spec_.p)
    throw config_error("PkSampler: " + std::to_string(num_identities()) + " identities, batch needs P = " +
                       std::to_string(spec_.p));
}

std::vector<BatchSlot> PkSampler::sample_batch(Rng& rng) const {
  std::vector<int> ids(by_label_.size());
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first P entries are a uniform draw without replacement.
  for (int i = 0; i < spec_.p; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + uniform_index(rng, ids.size() - static_cast<std::size_t>(i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  std::vector<BatchSlot> batch;
  batch.reserve(static_cast<std::size_t>(spec_.batch_size()));
  for (int i = 0; i < spec_.p; ++i) {
    const int label = ids[static_cast<std::size_t>(i)];
    std::vector<std::size_t> pool = by_label_[static_cast<std::size_t>(label)];
    const bool replace = pool.size() < static_cast<std::size_t>(spec_.k);
    for (int k = 0; k < spec_.k; ++k) {
      std::size_t pick;
      if (replace) {
        pick = pool[uniform_index(rng, pool.size())];
      } else {
        const std::size_t j = static_cast<std::size_t>(k) + uniform_index(rng, pool.size() - static_cast<std::size_t>(k));
        std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
        pick = pool[static_cast<std::size_t>(k)];
      }
      batch.push_back({pick, label, rng()});
    }
  }
  return batch;
}

int PkSampler::batches_per_epoch() const {
  return std::max(1, static_cast<int>(num_images_ / static_cast<std::size_t>(spec_.batch_size())));
}

std::vector<std::vector<BatchSlot>> PkSampler::epoch(std::uint64_t seed, int epoch) const {
  std::vector<std::vector<BatchSlot>> batches;
  const int n = batches_per_epoch();
  batches.reserve(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b)}));
    batches.push_back(sample_batch(rng));
  }
  return batches;
}

}  // namespace ahf::data
