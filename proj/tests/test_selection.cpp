#include <cmath>
#include <set>

#include "ahf/selection.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ahf;
using namespace ahf::selection;
using backbone::PatchConfig;

namespace {

PatchConfig toy_config() {
  PatchConfig c;
  c.image_height = c.image_width = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

ImageTensor random_image(const PatchConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor t(c.channels, c.image_height, c.image_width);
  for (double& v : t.data) v = uniform(rng, -1.0, 1.0);
  return t;
}

// Final-layer attention whose class row is [self, (1 - self) * patch].
Matrix class_row_attention(double self, const std::vector<double>& patch) {
  const auto n = static_cast<Eigen::Index>(patch.size());
  Matrix a = Matrix::Constant(n + 1, n + 1, 1.0 / double(n + 1));
  a(0, 0) = self;
  for (Eigen::Index i = 0; i < n; ++i) a(0, i + 1) = (1.0 - self) * patch[static_cast<std::size_t>(i)];
  return a;
}

EncoderOutput fake_output(std::vector<Matrix> heads) {
  EncoderOutput out;
  const auto n = static_cast<int>(heads.front().cols()) - 1;
  out.attention = {heads, heads};
  out.tokens = Matrix::Zero(n + 1, 4);
  for (int i = 0; i < n; ++i) out.source_indices.push_back(i);
  return out;
}

}  // namespace

TEST_CASE("head average of final-layer class attention") {
  const EncoderOutput out = fake_output({class_row_attention(0.0, {0.7, 0.3}), class_row_attention(0.0, {0.1, 0.9})});
  const AttentionSummary s = summarize_attention(std::span(&out, 1));
  CHECK(s.layer_index == 1);
  CHECK(s.scores(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s.scores(0, 1) == doctest::Approx(0.6).epsilon(1e-12));

  const EncoderOutput same = fake_output({class_row_attention(0.2, {0.1, 0.2, 0.7}), class_row_attention(0.2, {0.1, 0.2, 0.7})});
  const AttentionSummary ss = summarize_attention(std::span(&same, 1));
  CHECK(ss.scores(0, 2) == doctest::Approx(0.7).epsilon(1e-12));

  const EncoderOutput one = fake_output({class_row_attention(0.5, {0.25, 0.75})});
  CHECK(summarize_attention(std::span(&one, 1)).scores(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("aggregation order matters only when self masses differ") {
  // Head 0 keeps 80% on itself, head 1 none. Renormalizing per head weights
  // the heads equally; averaging first lets head 1 dominate.
  const EncoderOutput out = fake_output({class_row_attention(0.8, {1.0, 0.0}), class_row_attention(0.0, {0.0, 1.0})});
  const auto per_head = summarize_attention(std::span(&out, 1), HeadAggregation::RenormalizePerHead);
  const auto avg_first = summarize_attention(std::span(&out, 1), HeadAggregation::AverageThenRenormalize);
  CHECK(per_head.scores(0, 0) == doctest::Approx(0.5));
  CHECK(avg_first.scores(0, 0) == doctest::Approx(0.1 / 0.6));
  CHECK(avg_first.scores.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("summaries of real encoder outputs sum to one") {
  const PatchConfig c = toy_config();
  const backbone::VisionTransformer vit(c, 2);
  std::vector<EncoderOutput> outs;
  for (std::uint64_t s = 0; s < 3; ++s) outs.push_back(vit.encode(vit.patchify(random_image(c, s))));
  const AttentionSummary sum = summarize_attention(outs);
  CHECK(sum.scores.rows() == 3);
  CHECK(sum.scores.cols() == 16);
  CHECK((sum.scores.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-5);
}

TEST_CASE("summaries reject subsequences") {
  const PatchConfig c = toy_config();
  const backbone::VisionTransformer vit(c, 2);
  const auto full = vit.patchify(random_image(c, 0));
  const std::vector<int> idx{3, 1};
  const EncoderOutput sub = vit.encode(gather_hf_tokens(full, idx));
  CHECK(error_kind([&] { summarize_attention(std::span(&sub, 1)); }) == ErrorKind::Protocol);
}

TEST_CASE("selection count") {
  CHECK(selection_count(0.5, 256) == 128);
  CHECK(selection_count(0.5, 4) == 2);
  CHECK(selection_count(1.0, 7) == 7);
  CHECK(selection_count(0.3, 5) == 2);
  CHECK(error_kind([] { selection_count(0.1, 4); }) == ErrorKind::Parameter);
  CHECK(error_kind([] { selection_count(0.0, 4); }) == ErrorKind::Parameter);
  CHECK(error_kind([] { selection_count(1.1, 4); }) == ErrorKind::Parameter);
}

TEST_CASE("top-z hand cases") {
  const std::vector<double> s{0.1, 0.4, 0.3, 0.2};
  CHECK(top_z(s, 2) == std::vector<int>{1, 2});
  CHECK(top_z(s, 4) == std::vector<int>{1, 2, 3, 0});
  const std::vector<double> tied{0.2, 0.3, 0.3, 0.2};
  CHECK(top_z(tied, 3) == std::vector<int>{1, 2, 0});

  AttentionSummary sum;
  sum.scores = Matrix(1, 4);
  sum.scores << 0.1, 0.4, 0.3, 0.2;
  const SelectionIndex sel = select_top_z(sum, 0.5);
  CHECK(sel.z == 2);
  CHECK(sel.indices[0] == std::vector<int>{1, 2});
  CHECK(select_top_z(sum, 1.0).indices[0] == std::vector<int>{1, 2, 3, 0});
}

TEST_CASE("top-z agrees with the full-sort oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 4 + static_cast<int>(uniform_index(rng, 253));
    const bool quantized = trial % 3 == 0;  // forces many ties
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (double& v : scores) v = quantized ? double(uniform_index(rng, 5)) : uniform01(rng);
    const double mu = uniform(rng, 0.05, 1.0);
    const int z = static_cast<int>(std::lround(mu * n));
    if (z < 1) continue;
    const auto got = top_z(scores, z);
    REQUIRE(got == oracle::brute_top_z(scores, z));
    CHECK(std::set<int>(got.begin(), got.end()).size() == got.size());
  }
}

TEST_CASE("selection is stable under perturbations that cross no tie") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 16 + static_cast<int>(uniform_index(rng, 100));
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (double& v : scores) v = uniform01(rng);
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    double gap = 1.0;
    for (std::size_t i = 1; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
    std::vector<double> perturbed = scores;
    for (double& v : perturbed) v += uniform(rng, -0.45, 0.45) * gap;
    const int z = n / 2;
    CHECK(top_z(scores, z) == top_z(perturbed, z));
  }
}

TEST_CASE("gather keeps the class token and original positions") {
  const PatchConfig c = toy_config();
  const backbone::VisionTransformer vit(c, 4);
  const auto full = vit.patchify(random_image(c, 1), backbone::Stream::HighFrequency);
  const std::vector<int> idx{1, 2};
  const auto g = gather_hf_tokens(full, idx);
  CHECK(g.length() == 3);
  CHECK(g.embeddings.row(0) == full.embeddings.row(0));
  CHECK(g.embeddings.row(1) == full.embeddings.row(2));
  CHECK(g.embeddings.row(2) == full.embeddings.row(3));
  CHECK(g.patch_pixels.row(0) == full.patch_pixels.row(1));
  CHECK(g.source_indices == idx);
  CHECK(g.stream == backbone::Stream::HighFrequency);
  const std::vector<int> bad{16};
  CHECK(error_kind([&] { gather_hf_tokens(full, bad); }) == ErrorKind::Structural);
}

TEST_CASE("full selection reordered by score leaves the class feature unchanged") {
  const PatchConfig c = toy_config();
  const backbone::VisionTransformer vit(c, 4);
  const auto img = random_image(c, 5);
  const auto full = vit.patchify(img, backbone::Stream::HighFrequency);
  const EncoderOutput orig = vit.encode(vit.patchify(img));
  const auto sel = select_top_z(summarize_attention(std::span(&orig, 1)), 1.0);
  const EncoderOutput a = vit.encode(full), b = vit.encode(gather_hf_tokens(full, sel.indices[0]));
  CHECK((a.class_feature - b.class_feature).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("dynamic memory") {
  DynamicMemory m;
  m.store(0, {3, 1});
  m.store(1, {2});
  CHECK(error_kind([&] { m.store(0, {5}); }) == ErrorKind::Protocol);
  CHECK(m.size() == 2);
  CHECK(m.take(0) == std::vector<int>{3, 1});
  CHECK(error_kind([&] { m.take(0); }) == ErrorKind::Protocol);
  m.clear();
  CHECK(m.empty());
}

TEST_CASE("dual forward shapes and memory round trip") {
  const PatchConfig c = toy_config();
  const backbone::VisionTransformer vit(c, 4);
  const std::vector<ImageTensor> o{random_image(c, 1)}, h{random_image(c, 2)};
  DualForwardOptions opts;
  const auto r = dual_forward(vit, vit, o, h, opts);
  const int z = selection_count(0.5, 16);
  CHECK(r.c_o.rows() == 1);
  CHECK(r.c_o.cols() == 16);
  CHECK(r.c_h.rows() == 1);
  CHECK(r.c_h.cols() == 16);
  REQUIRE(r.f_o.size() == 1);
  CHECK(r.f_o[0].rows() == z);
  CHECK(r.f_h[0].rows() == z);
  CHECK(r.f_o[0].cols() == 16);
  CHECK(r.consumed == r.selection.indices);
  for (int j = 0; j < z; ++j) CHECK(r.f_o[0].row(j) == r.orig_outputs[0].tokens.row(r.consumed[0][j] + 1));
  CHECK(r.hf_tokens[0].source_indices == r.consumed[0]);

  const auto single = dual_forward(vit, vit, o, {}, opts);
  CHECK_FALSE(single.dual());
  CHECK(single.c_o == r.c_o);
  CHECK(single.f_o.empty());
}

TEST_CASE("identical streams with shared weights give identical class features") {
  const PatchConfig c = toy_config();
  backbone::VisionTransformer vit(c, 4);
  Matrix cls;
  for (auto* p : vit.parameters())
    if (p->name == "cls_token") cls = p->value;
  for (auto* p : vit.parameters())
    if (p->name == "hf_cls_token") p->value = cls;
  const std::vector<ImageTensor> imgs{random_image(c, 9), random_image(c, 10)};
  DualForwardOptions opts;
  opts.mu = 1.0;
  const auto r = dual_forward(vit, vit, imgs, imgs, opts);
  CHECK((r.c_o - r.c_h).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gradients reach the weights from both streams") {
  const PatchConfig c = toy_config();
  backbone::VisionTransformer vit(c, 4);
  const std::vector<ImageTensor> o{random_image(c, 1), random_image(c, 2)}, h{random_image(c, 3), random_image(c, 4)};
  const auto r = dual_forward(vit, vit, o, h, {});

  auto grad_norm = [&](const DualGradients& g) {
    vit.zero_grad();
    dual_backward(vit, vit, r, g);
    double s = 0.0;
    for (auto* p : vit.parameters())
      if (p->name.rfind("blocks.0.", 0) == 0) s += p->grad.squaredNorm();
    return s;
  };
  DualGradients from_o, from_h;
  from_o.d_c_o = Matrix::Ones(2, 16);
  from_h.d_c_h = Matrix::Ones(2, 16);
  CHECK(grad_norm(from_o) > 0.0);
  CHECK(grad_norm(from_h) > 0.0);
}

TEST_CASE("dual backward matches central differences with the selection held fixed") {
  const PatchConfig c = toy_config();
  backbone::VisionTransformer vit(c, 12);
  const std::vector<ImageTensor> o{random_image(c, 1), random_image(c, 2)}, h{random_image(c, 3), random_image(c, 4)};
  Rng rng(3);
  auto rand_like = [&](Eigen::Index r, Eigen::Index cc) {
    Matrix m(r, cc);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
    return m;
  };
  const int z = selection_count(0.5, 16);
  DualGradients g;
  g.d_c_o = rand_like(2, 16);
  g.d_c_h = rand_like(2, 16);
  g.d_f_o = {rand_like(z, 16), rand_like(z, 16)};
  g.d_f_h = {rand_like(z, 16), rand_like(z, 16)};

  const auto r0 = dual_forward(vit, vit, o, h, {});
  auto loss = [&] {
    DualForwardOptions opts;
    opts.keep_trace = false;
    const auto r = dual_forward(vit, vit, o, h, opts);
    REQUIRE(r.consumed == r0.consumed);
    double v = (r.c_o.array() * g.d_c_o.array()).sum() + (r.c_h.array() * g.d_c_h.array()).sum();
    for (int b = 0; b < 2; ++b)
      v += (r.f_o[b].array() * g.d_f_o[b].array()).sum() + (r.f_h[b].array() * g.d_f_h[b].array()).sum();
    return v;
  };
  vit.zero_grad();
  dual_backward(vit, vit, r0, g);
  for (const auto& e : gradcheck::audit(vit.parameters(), loss, 8, 1e-5, 2)) {
    INFO(e.name);
    CHECK(e.rel_error < 1e-4);
  }
}
