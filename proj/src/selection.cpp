#include "ahf/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ahf/errors.hpp"

namespace ahf::selection {

AttentionSummary summarize_attention(std::span<const EncoderOutput> outs, HeadAggregation aggregation) {
  if (outs.empty()) throw input_error("summarize_attention: empty batch");
  const int n = static_cast<int>(outs.front().source_indices.size());
  AttentionSummary summary;
  summary.scores.resize(static_cast<Eigen::Index>(outs.size()), n);
  for (std::size_t b = 0; b < outs.size(); ++b) {
    const EncoderOutput& out = outs[b];
    if (out.attention.empty()) throw protocol_error("summarize_attention: output carries no attention");
    bool identity = static_cast<int>(out.source_indices.size()) == n;
    for (int i = 0; identity && i < n; ++i) identity = out.source_indices[static_cast<std::size_t>(i)] == i;
    if (!identity) throw protocol_error("summarize_attention: requires a full original-stream sequence");

    const int last = static_cast<int>(out.attention.size()) - 1;
    const int heads = static_cast<int>(out.attention.back().size());
    const bool per_head = aggregation == HeadAggregation::RenormalizePerHead;
    RowVector acc = RowVector::Zero(n);
    for (int m = 0; m < heads; ++m) {
      const auto s = backbone::class_attention(out, last, m, per_head);
      acc += Eigen::Map<const RowVector>(s.data(), n);
    }
    acc /= heads;
    const double total = acc.sum();
    if (total > 0.0) acc /= total;
    summary.scores.row(static_cast<Eigen::Index>(b)) = acc;
    summary.layer_index = last;
  }
  return summary;
}

int selection_count(double mu, int n) {
  if (!(mu > 0.0 && mu <= 1.0)) throw parameter_error("selection: mu must lie in (0, 1]");
  const int z = static_cast<int>(std::lround(mu * n));
  if (z < 1) throw parameter_error("selection: round(mu * n) is zero");
  return z;
}

std::vector<int> top_z(std::span<const double> scores, int z) {
  if (z < 0 || z > static_cast<int>(scores.size())) throw parameter_error("top_z: z out of range");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + z, idx.end(), better);
  idx.resize(static_cast<std::size_t>(z));
  return idx;
}

SelectionIndex select_top_z(const AttentionSummary& summary, double mu) {
  const int n = static_cast<int>(summary.scores.cols());
  SelectionIndex sel;
  sel.mu = mu;
  sel.z = selection_count(mu, n);
  sel.indices.reserve(static_cast<std::size_t>(summary.scores.rows()));
  for (Eigen::Index b = 0; b < summary.scores.rows(); ++b) {
    const RowVector row = summary.scores.row(b);
    sel.indices.push_back(top_z(std::span<const double>(row.data(), static_cast<std::size_t>(n)), sel.z));
  }
  return sel;
}

TokenSequence gather_hf_tokens(const TokenSequence& hf_full, std::span<const int> indices) {
  const int n = hf_full.length() - 1;
  TokenSequence out;
  out.stream = hf_full.stream;
  out.embeddings.resize(static_cast<Eigen::Index>(indices.size()) + 1, hf_full.embeddings.cols());
  out.patch_pixels.resize(static_cast<Eigen::Index>(indices.size()), hf_full.patch_pixels.cols());
  out.embeddings.row(0) = hf_full.embeddings.row(0);
  out.source_indices.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int i = indices[j];
    if (i < 0 || i >= n) throw structural_error("gather_hf_tokens: patch index " + std::to_string(i) + " >= n");
    // Rows of hf_full are in grid order when it comes straight from patchify.
    const int src = hf_full.source_indices[static_cast<std::size_t>(i)];
    out.embeddings.row(static_cast<Eigen::Index>(j) + 1) = hf_full.embeddings.row(i + 1);
    out.patch_pixels.row(static_cast<Eigen::Index>(j)) = hf_full.patch_pixels.row(i);
    out.source_indices.push_back(src);
  }
  return out;
}

void DynamicMemory::store(int sample, std::vector<int> indices) {
  if (!entries_.emplace(sample, std::move(indices)).second)
    throw protocol_error("DynamicMemory: sample " + std::to_string(sample) + " already populated this step");
}

std::vector<int> DynamicMemory::take(int sample) {
  auto it = entries_.find(sample);
  if (it == entries_.end()) throw protocol_error("DynamicMemory: no selection stored for sample " + std::to_string(sample));
  std::vector<int> v = std::move(it->second);
  entries_.erase(it);
  return v;
}

DualForwardResult dual_forward(const VisionTransformer& orig_encoder, const VisionTransformer& hf_encoder,
                               std::span<const ImageTensor> orig, std::span<const ImageTensor> hf,
                               const DualForwardOptions& opts) {
  if (orig.empty()) throw input_error("dual_forward: empty batch");
  if (!hf.empty() && hf.size() != orig.size())
    throw structural_error("dual_forward: stream batch sizes differ");
  const auto batch = static_cast<Eigen::Index>(orig.size());
  const int d = orig_encoder.config().embed_dim;
  const int n = orig_encoder.config().num_patches();

  DualForwardResult r;
  r.c_o.resize(batch, d);
  r.orig_tokens.reserve(orig.size());
  r.orig_outputs.reserve(orig.size());
  if (opts.keep_trace) r.orig_traces.resize(orig.size());
  for (std::size_t b = 0; b < orig.size(); ++b) {
    r.orig_tokens.push_back(orig_encoder.patchify(orig[b], backbone::Stream::Original));
    r.orig_outputs.push_back(
        orig_encoder.encode(r.orig_tokens.back(), opts.keep_trace ? &r.orig_traces[b] : nullptr));
    r.c_o.row(static_cast<Eigen::Index>(b)) = r.orig_outputs.back().class_feature;
  }
  if (hf.empty()) return r;

  std::vector<std::vector<int>> chosen;
  DynamicMemory memory;
  if (opts.select) {
    r.summary = summarize_attention(r.orig_outputs, opts.aggregation);
    r.selection = select_top_z(r.summary, opts.mu);
    for (std::size_t b = 0; b < orig.size(); ++b) memory.store(static_cast<int>(b), r.selection.indices[b]);
  } else {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    r.selection.mu = 1.0;
    r.selection.z = n;
    r.selection.indices.assign(orig.size(), all);
    for (std::size_t b = 0; b < orig.size(); ++b) memory.store(static_cast<int>(b), all);
  }

  r.c_h.resize(batch, d);
  r.hf_tokens.reserve(orig.size());
  if (opts.keep_trace) r.hf_traces.resize(orig.size());
  for (std::size_t b = 0; b < orig.size(); ++b) {
    std::vector<int> idx = memory.take(static_cast<int>(b));
    const TokenSequence full = hf_encoder.patchify(hf[b], backbone::Stream::HighFrequency);
    r.hf_tokens.push_back(gather_hf_tokens(full, idx));
    const EncoderOutput hf_out = hf_encoder.encode(r.hf_tokens.back(), opts.keep_trace ? &r.hf_traces[b] : nullptr);
    r.c_h.row(static_cast<Eigen::Index>(b)) = hf_out.class_feature;

    const auto z = static_cast<Eigen::Index>(idx.size());
    Matrix fo(z, d);
    for (Eigen::Index j = 0; j < z; ++j)
      fo.row(j) = r.orig_outputs[b].tokens.row(idx[static_cast<std::size_t>(j)] + 1);
    r.f_o.push_back(std::move(fo));
    r.f_h.push_back(hf_out.tokens.bottomRows(z));
    r.consumed.push_back(std::move(idx));
  }
  if (!memory.empty()) throw protocol_error("dual_forward: dynamic memory not fully consumed");
  return r;
}

void dual_backward(VisionTransformer& orig_encoder, VisionTransformer& hf_encoder, const DualForwardResult& fwd,
                   const DualGradients& grads) {
  const std::size_t batch = fwd.orig_tokens.size();
  if (fwd.orig_traces.size() != batch) throw protocol_error("dual_backward: forward pass was run without traces");
  const int d = orig_encoder.config().embed_dim;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    Matrix d_tokens = Matrix::Zero(fwd.orig_tokens[b].length(), d);
    if (grads.d_c_o.size() > 0) d_tokens.row(0) += grads.d_c_o.row(bi);
    if (fwd.dual() && b < grads.d_f_o.size() && grads.d_f_o[b].size() > 0) {
      const auto& idx = fwd.consumed[b];
      for (std::size_t j = 0; j < idx.size(); ++j)
        d_tokens.row(idx[j] + 1) += grads.d_f_o[b].row(static_cast<Eigen::Index>(j));
    }
    const Matrix d_emb = orig_encoder.backward_encode(fwd.orig_traces[b], d_tokens);
    orig_encoder.backward_patchify(fwd.orig_tokens[b], d_emb);
  }
  if (!fwd.dual()) return;
  if (fwd.hf_traces.size() != batch) throw protocol_error("dual_backward: missing high-frequency traces");
  for (std::size_t b = 0; b < batch; ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    const TokenSequence& seq = fwd.hf_tokens[b];
    Matrix d_tokens = Matrix::Zero(seq.length(), d);
    if (grads.d_c_h.size() > 0) d_tokens.row(0) += grads.d_c_h.row(bi);
    if (b < grads.d_f_h.size() && grads.d_f_h[b].size() > 0)
      d_tokens.bottomRows(seq.length() - 1) += grads.d_f_h[b];
    const Matrix d_emb = hf_encoder.backward_encode(fwd.hf_traces[b], d_tokens);
    hf_encoder.backward_patchify(seq, d_emb);
  }
}

}  // namespace ahf::selection
