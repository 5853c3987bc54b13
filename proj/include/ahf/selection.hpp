#pragma once

// Object-aware dynamic selection: rank patches by the head-averaged
// final-layer class-token attention of the original stream, keep the top
// Z = round(mu * n), and run the matching high-frequency tokens through the
// encoder as a shortened sequence.

#include <map>
#include <span>
#include <vector>

#include "ahf/backbone.hpp"

namespace ahf::selection {

using backbone::EncoderOutput;
using backbone::EncoderTrace;
using backbone::TokenSequence;
using backbone::VisionTransformer;

enum class HeadAggregation {
  RenormalizePerHead,      // drop class self-mass per head, renormalize, then average
  AverageThenRenormalize,  // average raw heads, then drop class self-mass and renormalize
};

struct AttentionSummary {
  Matrix scores;  // B x n, each row sums to 1
  int layer_index = 0;
};

struct SelectionIndex {
  std::vector<std::vector<int>> indices;  // per sample, descending score
  int z = 0;
  double mu = 0.0;
};

AttentionSummary summarize_attention(std::span<const EncoderOutput> outs,
                                     HeadAggregation aggregation = HeadAggregation::RenormalizePerHead);

/// round(mu * n); throws a parameter error for mu outside (0, 1] or Z == 0.
int selection_count(double mu, int n);

/// Indices of the z largest scores, descending, ties broken by lower index.
std::vector<int> top_z(std::span<const double> scores, int z);

SelectionIndex select_top_z(const AttentionSummary& summary, double mu);

/// [hf class token, hf patch tokens at `indices`] with their original
/// positional embeddings (already added by patchify).
TokenSequence gather_hf_tokens(const TokenSequence& hf_full, std::span<const int> indices);

/// Per-step store of selections keyed by sample position in the batch.
class DynamicMemory {
 public:
  void store(int sample, std::vector<int> indices);
  /// Removes and returns the entry; protocol error when absent.
  std::vector<int> take(int sample);
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::map<int, std::vector<int>> entries_;
};

struct DualForwardOptions {
  double mu = 0.5;
  bool select = true;  // false: every high-frequency token in grid order
  HeadAggregation aggregation = HeadAggregation::RenormalizePerHead;
  bool keep_trace = true;
};

struct DualForwardResult {
  Matrix c_o;                // B x D
  Matrix c_h;                // B x D (empty for a single-stream pass)
  std::vector<Matrix> f_o;   // B of Z x D
  std::vector<Matrix> f_h;   // B of Z x D
  AttentionSummary summary;
  SelectionIndex selection;
  std::vector<std::vector<int>> consumed;  // indices gathered from the memory

  std::vector<EncoderOutput> orig_outputs;
  std::vector<TokenSequence> orig_tokens;
  std::vector<TokenSequence> hf_tokens;
  std::vector<EncoderTrace> orig_traces;
  std::vector<EncoderTrace> hf_traces;

  bool dual() const { return c_h.size() > 0; }
};

/// Original stream pass over `orig`; when `hf` is non-empty, also selection
/// and the high-frequency pass. `hf_encoder` may alias `orig_encoder`.
DualForwardResult dual_forward(const VisionTransformer& orig_encoder, const VisionTransformer& hf_encoder,
                               std::span<const ImageTensor> orig, std::span<const ImageTensor> hf,
                               const DualForwardOptions& opts);

struct DualGradients {
  Matrix d_c_o;
  Matrix d_c_h;
  std::vector<Matrix> d_f_o;
  std::vector<Matrix> d_f_h;
};

/// Backpropagates through both passes. Selection indices are constants.
void dual_backward(VisionTransformer& orig_encoder, VisionTransformer& hf_encoder, const DualForwardResult& fwd,
                   const DualGradients& grads);

}  // namespace ahf::selection
