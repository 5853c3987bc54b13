#pragma once

// Compact pre-norm Vision Transformer with an explicit backward pass.
//
// Row-vector convention throughout: a linear layer computes y = x W + b with
// W of shape (in, out). Token sequences are (seq x D) matrices whose row 0 is
// the class token.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ahf/tensor.hpp"

namespace ahf::backbone {

struct PatchConfig {
  int image_height = 64;
  int image_width = 64;
  int patch_size = 8;
  int channels = 3;
  int embed_dim = 128;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;
  double init_std = 0.02;

  void validate() const;
  int grid_height() const { return image_height / patch_size; }
  int grid_width() const { return image_width / patch_size; }
  int num_patches() const { return grid_height() * grid_width(); }
  int seq_len() const { return num_patches() + 1; }
  int patch_dim() const { return channels * patch_size * patch_size; }
  int head_dim() const { return embed_dim / heads; }
  int hidden_dim() const;
};

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

enum class Stream { Original, HighFrequency };

/// One sample's embedded token sequence. Row 0 is the class token; row i+1
/// is the patch whose original grid index is source_indices[i].
struct TokenSequence {
  Matrix embeddings;
  Matrix patch_pixels;  // flattened pixels of the patch rows, same order
  std::vector<int> source_indices;
  Stream stream = Stream::Original;

  int length() const { return static_cast<int>(embeddings.rows()); }
};

struct TokenBatch {
  std::vector<TokenSequence> sequences;
};

struct EncoderOutput {
  Matrix tokens;              // final-layer (post-norm) tokens
  RowVector class_feature;    // == tokens.row(0)
  std::vector<std::vector<Matrix>> attention;  // [layer][head], seq x seq
  std::vector<int> source_indices;
};

struct LayerNormCache {
  Matrix normalized;
  Vector inv_std;
};

struct BlockTrace {
  Matrix input;
  LayerNormCache ln1;
  Matrix ln1_out;
  Matrix qkv;
  Matrix attn_concat;
  Matrix mid;
  LayerNormCache ln2;
  Matrix ln2_out;
  Matrix pre_activation;
  Matrix activation;
};

/// Intermediates kept by encode() for the backward pass.
struct EncoderTrace {
  std::vector<BlockTrace> blocks;
  std::vector<std::vector<Matrix>> attention;
  LayerNormCache final_ln;
};

class VisionTransformer {
 public:
  VisionTransformer(const PatchConfig& config, std::uint64_t seed);

  const PatchConfig& config() const { return config_; }

  /// n x patch_dim; patches in row-major grid order, pixels ordered (c, y, x).
  Matrix extract_patches(const ImageTensor& img) const;

  /// Linear projection + class token + positional embeddings. The
  /// high-frequency stream uses its own class token.
  TokenSequence patchify(const ImageTensor& img, Stream stream = Stream::Original) const;
  TokenBatch patchify(std::span<const ImageTensor> imgs, Stream stream = Stream::Original) const;

  /// Runs the transformer stack over any sequence length >= 1.
  EncoderOutput encode(const TokenSequence& tokens, EncoderTrace* trace = nullptr) const;
  std::vector<EncoderOutput> encode(const TokenBatch& batch) const;

  /// Accumulates weight gradients given dLoss/dtokens for a traced encode()
  /// and returns dLoss/dembeddings.
  Matrix backward_encode(const EncoderTrace& trace, const Matrix& d_tokens);
  /// Accumulates gradients of the embedding parameters for one sequence.
  void backward_patchify(const TokenSequence& seq, const Matrix& d_embeddings);

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  void zero_grad();

 private:
  struct Block {
    Param ln1_gamma, ln1_beta;
    Param qkv_weight, qkv_bias;
    Param proj_weight, proj_bias;
    Param ln2_gamma, ln2_beta;
    Param fc1_weight, fc1_bias;
    Param fc2_weight, fc2_bias;
  };

  PatchConfig config_;
  Param patch_weight_, patch_bias_;
  Param cls_token_, hf_cls_token_;
  Param pos_embed_;
  std::vector<Block> blocks_;
  Param norm_gamma_, norm_beta_;
};

/// Softmax-normalized attention of the class-token query over patch keys at
/// (layer, head). With exclude_self the class token's own mass is dropped and
/// the remainder renormalized; otherwise the raw patch entries are returned.
std::vector<double> class_attention(const EncoderOutput& out, int layer, int head, bool exclude_self = true);

}  // namespace ahf::backbone
