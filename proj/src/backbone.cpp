#include "ahf/backbone.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ahf/errors.hpp"
#include "ahf/random.hpp"

namespace ahf::backbone {

namespace {

constexpr double kLayerNormEps = 1e-6;

Param make_param(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return Param{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)};
}

void init_normal(Param& p, Rng& rng, double std) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = truncated_normal(rng, std);
}

Matrix layer_norm(const Matrix& x, const Param& gamma, const Param& beta, LayerNormCache& cache) {
  const Eigen::Index d = x.cols();
  cache.normalized.resize(x.rows(), d);
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(r) = inv_std;
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv_std;
  }
  Matrix y = cache.normalized.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, Param& gamma, Param& beta) {
  gamma.grad.row(0) += dy.cwiseProduct(cache.normalized).colwise().sum();
  beta.grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).cwiseProduct(cache.normalized.row(r)).mean();
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

Matrix add_bias(Matrix m, const Param& bias) {
  m.rowwise() += bias.value.row(0);
  return m;
}

void check_finite(const Matrix& m, int layer) {
  if (!m.allFinite()) {
    std::ostringstream os;
    os << "encode: non-finite activation at layer " << layer;
    throw numeric_error(os.str());
  }
}

}  // namespace

void PatchConfig::validate() const {
  if (patch_size <= 0 || image_height <= 0 || image_width <= 0)
    throw structural_error("PatchConfig: sizes must be positive");
  if (image_height % patch_size != 0 || image_width % patch_size != 0)
    throw structural_error("PatchConfig: image size must be divisible by the patch size");
  if (channels <= 0) throw structural_error("PatchConfig: channels must be positive");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
    throw structural_error("PatchConfig: embed_dim must be divisible by heads");
  if (depth <= 0) throw structural_error("PatchConfig: depth must be positive");
  if (!(mlp_ratio > 0.0)) throw parameter_error("PatchConfig: mlp_ratio must be positive");
}

int PatchConfig::hidden_dim() const {
  return std::max(1, static_cast<int>(std::lround(mlp_ratio * embed_dim)));
}

VisionTransformer::VisionTransformer(const PatchConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int d = config_.embed_dim;
  const int hidden = config_.hidden_dim();
  const double std = config_.init_std;
  Rng rng(seed);

  patch_weight_ = make_param("patch_embed.weight", config_.patch_dim(), d);
  patch_bias_ = make_param("patch_embed.bias", 1, d);
  cls_token_ = make_param("cls_token", 1, d);
  hf_cls_token_ = make_param("hf_cls_token", 1, d);
  pos_embed_ = make_param("pos_embed", config_.seq_len(), d);
  init_normal(patch_weight_, rng, std);
  init_normal(cls_token_, rng, std);
  init_normal(hf_cls_token_, rng, std);
  init_normal(pos_embed_, rng, std);

  blocks_.resize(static_cast<std::size_t>(config_.depth));
  for (int l = 0; l < config_.depth; ++l) {
    auto& b = blocks_[static_cast<std::size_t>(l)];
    const std::string p = "blocks." + std::to_string(l) + ".";
    b.ln1_gamma = make_param(p + "norm1.weight", 1, d);
    b.ln1_beta = make_param(p + "norm1.bias", 1, d);
    b.qkv_weight = make_param(p + "attn.qkv.weight", d, 3 * d);
    b.qkv_bias = make_param(p + "attn.qkv.bias", 1, 3 * d);
    b.proj_weight = make_param(p + "attn.proj.weight", d, d);
    b.proj_bias = make_param(p + "attn.proj.bias", 1, d);
    b.ln2_gamma = make_param(p + "norm2.weight", 1, d);
    b.ln2_beta = make_param(p + "norm2.bias", 1, d);
    b.fc1_weight = make_param(p + "mlp.fc1.weight", d, hidden);
    b.fc1_bias = make_param(p + "mlp.fc1.bias", 1, hidden);
    b.fc2_weight = make_param(p + "mlp.fc2.weight", hidden, d);
    b.fc2_bias = make_param(p + "mlp.fc2.bias", 1, d);
    b.ln1_gamma.value.setOnes();
    b.ln2_gamma.value.setOnes();
    init_normal(b.qkv_weight, rng, std);
    init_normal(b.proj_weight, rng, std);
    init_normal(b.fc1_weight, rng, std);
    init_normal(b.fc2_weight, rng, std);
  }
  norm_gamma_ = make_param("norm.weight", 1, d);
  norm_beta_ = make_param("norm.bias", 1, d);
  norm_gamma_.value.setOnes();
}

Matrix VisionTransformer::extract_patches(const ImageTensor& img) const {
  if (img.channels != config_.channels || img.height != config_.image_height || img.width != config_.image_width) {
    std::ostringstream os;
    os << "patchify: image is " << img.channels << "x" << img.height << "x" << img.width << ", model expects "
       << config_.channels << "x" << config_.image_height << "x" << config_.image_width;
    throw structural_error(os.str());
  }
  const int p = config_.patch_size;
  const int gw = config_.grid_width();
  Matrix patches(config_.num_patches(), config_.patch_dim());
  for (int idx = 0; idx < config_.num_patches(); ++idx) {
    const int y0 = (idx / gw) * p;
    const int x0 = (idx % gw) * p;
    int col = 0;
    for (int c = 0; c < config_.channels; ++c)
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) patches(idx, col++) = img.at(c, y0 + y, x0 + x);
  }
  return patches;
}

TokenSequence VisionTransformer::patchify(const ImageTensor& img, Stream stream) const {
  TokenSequence seq;
  seq.stream = stream;
  seq.patch_pixels = extract_patches(img);
  const int n = config_.num_patches();
  seq.embeddings.resize(n + 1, config_.embed_dim);
  seq.embeddings.row(0) = (stream == Stream::Original ? cls_token_ : hf_cls_token_).value.row(0);
  seq.embeddings.bottomRows(n).noalias() = seq.patch_pixels * patch_weight_.value;
  seq.embeddings.bottomRows(n).rowwise() += patch_bias_.value.row(0);
  seq.embeddings += pos_embed_.value;
  seq.source_indices.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) seq.source_indices[static_cast<std::size_t>(i)] = i;
  return seq;
}

TokenBatch VisionTransformer::patchify(std::span<const ImageTensor> imgs, Stream stream) const {
  TokenBatch batch;
  batch.sequences.reserve(imgs.size());
  for (const auto& img : imgs) batch.sequences.push_back(patchify(img, stream));
  return batch;
}

EncoderOutput VisionTransformer::encode(const TokenSequence& tokens, EncoderTrace* trace) const {
  const int d = config_.embed_dim;
  const int heads = config_.heads;
  const int dh = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (tokens.length() < 1 || tokens.embeddings.cols() != d)
    throw structural_error("encode: token sequence must be (seq >= 1) x embed_dim");
  if (static_cast<std::size_t>(tokens.length() - 1) != tokens.source_indices.size())
    throw structural_error("encode: source_indices do not match the sequence length");
  check_finite(tokens.embeddings, 0);

  EncoderOutput out;
  out.source_indices = tokens.source_indices;
  out.attention.resize(blocks_.size());
  if (trace) {
    trace->blocks.clear();
    trace->blocks.resize(blocks_.size());
  }

  Matrix x = tokens.embeddings;
  const Eigen::Index seq = x.rows();
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    BlockTrace local;
    BlockTrace& bt = trace ? trace->blocks[l] : local;
    bt.input = x;
    bt.ln1_out = layer_norm(x, b.ln1_gamma, b.ln1_beta, bt.ln1);
    bt.qkv = add_bias(bt.ln1_out * b.qkv_weight.value, b.qkv_bias);
    bt.attn_concat.resize(seq, d);
    auto& probs = out.attention[l];
    probs.resize(static_cast<std::size_t>(heads));
    for (int m = 0; m < heads; ++m) {
      const auto q = bt.qkv.middleCols(m * dh, dh);
      const auto k = bt.qkv.middleCols(d + m * dh, dh);
      const auto v = bt.qkv.middleCols(2 * d + m * dh, dh);
      Matrix s = (q * k.transpose()) * scale;
      softmax_rows(s);
      bt.attn_concat.middleCols(m * dh, dh).noalias() = s * v;
      probs[static_cast<std::size_t>(m)] = std::move(s);
    }
    bt.mid = x + add_bias(bt.attn_concat * b.proj_weight.value, b.proj_bias);
    bt.ln2_out = layer_norm(bt.mid, b.ln2_gamma, b.ln2_beta, bt.ln2);
    bt.pre_activation = add_bias(bt.ln2_out * b.fc1_weight.value, b.fc1_bias);
    bt.activation = bt.pre_activation.unaryExpr(&gelu);
    x = bt.mid + add_bias(bt.activation * b.fc2_weight.value, b.fc2_bias);
    check_finite(x, static_cast<int>(l) + 1);
  }
  LayerNormCache final_local;
  out.tokens = layer_norm(x, norm_gamma_, norm_beta_, trace ? trace->final_ln : final_local);
  out.class_feature = out.tokens.row(0);
  if (trace) trace->attention = out.attention;
  return out;
}

std::vector<EncoderOutput> VisionTransformer::encode(const TokenBatch& batch) const {
  std::vector<EncoderOutput> outs;
  outs.reserve(batch.sequences.size());
  for (const auto& s : batch.sequences) outs.push_back(encode(s));
  return outs;
}

Matrix VisionTransformer::backward_encode(const EncoderTrace& trace, const Matrix& d_tokens) {
  const int d = config_.embed_dim;
  const int heads = config_.heads;
  const int dh = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (trace.blocks.size() != blocks_.size()) throw protocol_error("backward_encode: trace does not match model depth");

  Matrix dx = layer_norm_backward(d_tokens, trace.final_ln, norm_gamma_, norm_beta_);
  for (std::size_t li = blocks_.size(); li-- > 0;) {
    Block& b = blocks_[li];
    const BlockTrace& bt = trace.blocks[li];

    // MLP branch
    b.fc2_weight.grad.noalias() += bt.activation.transpose() * dx;
    b.fc2_bias.grad.row(0) += dx.colwise().sum();
    Matrix d_pre = (dx * b.fc2_weight.value.transpose()).cwiseProduct(bt.pre_activation.unaryExpr(&gelu_grad));
    b.fc1_weight.grad.noalias() += bt.ln2_out.transpose() * d_pre;
    b.fc1_bias.grad.row(0) += d_pre.colwise().sum();
    Matrix d_mid = dx + layer_norm_backward(d_pre * b.fc1_weight.value.transpose(), bt.ln2, b.ln2_gamma, b.ln2_beta);

    // Attention branch
    b.proj_weight.grad.noalias() += bt.attn_concat.transpose() * d_mid;
    b.proj_bias.grad.row(0) += d_mid.colwise().sum();
    const Matrix d_concat = d_mid * b.proj_weight.value.transpose();
    Matrix d_qkv(bt.qkv.rows(), 3 * d);
    const auto& probs = trace.attention[li];
    for (int m = 0; m < heads; ++m) {
      const auto q = bt.qkv.middleCols(m * dh, dh);
      const auto k = bt.qkv.middleCols(d + m * dh, dh);
      const auto v = bt.qkv.middleCols(2 * d + m * dh, dh);
      const Matrix& p = probs[static_cast<std::size_t>(m)];
      const auto d_o = d_concat.middleCols(m * dh, dh);
      const Matrix d_p = d_o * v.transpose();
      d_qkv.middleCols(2 * d + m * dh, dh).noalias() = p.transpose() * d_o;
      const Vector row_dot = d_p.cwiseProduct(p).rowwise().sum();
      const Matrix d_s = p.cwiseProduct(d_p.colwise() - row_dot) * scale;
      d_qkv.middleCols(m * dh, dh).noalias() = d_s * k;
      d_qkv.middleCols(d + m * dh, dh).noalias() = d_s.transpose() * q;
    }
    b.qkv_weight.grad.noalias() += bt.ln1_out.transpose() * d_qkv;
    b.qkv_bias.grad.row(0) += d_qkv.colwise().sum();
    dx = d_mid + layer_norm_backward(d_qkv * b.qkv_weight.value.transpose(), bt.ln1, b.ln1_gamma, b.ln1_beta);
  }
  return dx;
}

void VisionTransformer::backward_patchify(const TokenSequence& seq, const Matrix& d_embeddings) {
  if (d_embeddings.rows() != seq.length() || d_embeddings.cols() != config_.embed_dim)
    throw structural_error("backward_patchify: gradient shape mismatch");
  const Eigen::Index k = seq.length() - 1;
  (seq.stream == Stream::Original ? cls_token_ : hf_cls_token_).grad.row(0) += d_embeddings.row(0);
  pos_embed_.grad.row(0) += d_embeddings.row(0);
  if (k == 0) return;
  const auto d_patches = d_embeddings.bottomRows(k);
  patch_weight_.grad.noalias() += seq.patch_pixels.transpose() * d_patches;
  patch_bias_.grad.row(0) += d_patches.colwise().sum();
  for (Eigen::Index i = 0; i < k; ++i)
    pos_embed_.grad.row(1 + seq.source_indices[static_cast<std::size_t>(i)]) += d_patches.row(i);
}

std::vector<Param*> VisionTransformer::parameters() {
  std::vector<Param*> ps{&patch_weight_, &patch_bias_, &cls_token_, &hf_cls_token_, &pos_embed_};
  for (auto& b : blocks_) {
    for (Param* p : {&b.ln1_gamma, &b.ln1_beta, &b.qkv_weight, &b.qkv_bias, &b.proj_weight, &b.proj_bias,
                     &b.ln2_gamma, &b.ln2_beta, &b.fc1_weight, &b.fc1_bias, &b.fc2_weight, &b.fc2_bias})
      ps.push_back(p);
  }
  ps.push_back(&norm_gamma_);
  ps.push_back(&norm_beta_);
  return ps;
}

std::vector<const Param*> VisionTransformer::parameters() const {
  auto mut = const_cast<VisionTransformer*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void VisionTransformer::zero_grad() {
  for (Param* p : parameters()) p->grad.setZero();
}

std::vector<double> class_attention(const EncoderOutput& out, int layer, int head, bool exclude_self) {
  if (layer < 0 || layer >= static_cast<int>(out.attention.size()))
    throw parameter_error("class_attention: layer index out of range");
  const auto& layer_maps = out.attention[static_cast<std::size_t>(layer)];
  if (head < 0 || head >= static_cast<int>(layer_maps.size()))
    throw parameter_error("class_attention: head index out of range");
  const Matrix& a = layer_maps[static_cast<std::size_t>(head)];
  const Eigen::Index n = a.cols() - 1;
  std::vector<double> scores(static_cast<std::size_t>(n));
  double mass = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    scores[static_cast<std::size_t>(i)] = a(0, i + 1);
    mass += a(0, i + 1);
  }
  if (exclude_self && mass > 0.0)
    for (double& s : scores) s /= mass;
  return scores;
}

}  // namespace ahf::backbone
