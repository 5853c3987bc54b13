#include <cmath>
#include <numeric>

#include "ahf/backbone.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ahf;
using namespace ahf::backbone;

namespace {

PatchConfig small_config(int size = 16, int patch = 4, int dim = 32, int depth = 2, int heads = 4) {
  PatchConfig c;
  c.image_height = c.image_width = size;
  c.patch_size = patch;
  c.embed_dim = dim;
  c.depth = depth;
  c.heads = heads;
  return c;
}

ImageTensor random_image(const PatchConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor t(c.channels, c.image_height, c.image_width);
  for (double& v : t.data) v = uniform(rng, -1.0, 1.0);
  return t;
}

const Param& find(const VisionTransformer& m, const std::string& name) {
  for (const Param* p : m.parameters())
    if (p->name == name) return *p;
  FAIL("no parameter " << name);
  throw;
}

}  // namespace

TEST_CASE("patch config validation") {
  CHECK_NOTHROW(small_config().validate());
  CHECK(error_kind([] { small_config(18, 4).validate(); }) == ErrorKind::Structural);
  CHECK(error_kind([] { small_config(16, 4, 30, 2, 4).validate(); }) == ErrorKind::Structural);
}

TEST_CASE("sequence lengths") {
  PatchConfig paper = small_config(256, 16, 8, 1, 1);
  CHECK(paper.num_patches() == 256);
  CHECK(paper.seq_len() == 257);
  const VisionTransformer vit(paper, 1);
  CHECK(vit.patchify(ImageTensor(3, 256, 256)).length() == 257);

  const PatchConfig desk = small_config(64, 8, 8, 1, 1);
  CHECK(VisionTransformer(desk, 1).patchify(ImageTensor(3, 64, 64)).length() == 65);
}

TEST_CASE("patch extraction order is row-major with (c, y, x) pixels") {
  const PatchConfig c = small_config(8, 4, 8, 1, 1);
  const VisionTransformer vit(c, 0);
  ImageTensor img(3, 8, 8);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) img.at(ch, y, x) = ch * 100 + y * 10 + x;
  const Matrix p = vit.extract_patches(img);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 48);
  // Patch 1 is the top-right block; entry (c=2, y=3, x=1) of that patch.
  CHECK(p(1, 2 * 16 + 3 * 4 + 1) == 200 + 30 + 5);
  CHECK(p(2, 0) == 40);
}

TEST_CASE("zero image embeds every patch as the projection bias") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 3);
  const TokenSequence s = vit.patchify(ImageTensor(3, 16, 16));
  const Matrix& bias = find(vit, "patch_embed.bias").value;
  const Matrix& pos = find(vit, "pos_embed").value;
  for (int i = 1; i < s.length(); ++i) CHECK(((s.embeddings.row(i) - pos.row(i)) - bias.row(0)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(s.source_indices.size() == 16);
  for (int i = 0; i < 16; ++i) CHECK(s.source_indices[i] == i);
}

TEST_CASE("streams use separate class tokens") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 3);
  const ImageTensor img = random_image(c, 1);
  const TokenSequence o = vit.patchify(img, Stream::Original), h = vit.patchify(img, Stream::HighFrequency);
  CHECK(o.embeddings.bottomRows(16) == h.embeddings.bottomRows(16));
  CHECK(o.embeddings.row(0) != h.embeddings.row(0));
  CHECK(((h.embeddings.row(0) - find(vit, "pos_embed").value.row(0)) - find(vit, "hf_cls_token").value).norm() < 1e-15);
}

TEST_CASE("dimension mismatch is a structural error") {
  const VisionTransformer vit(small_config(), 1);
  CHECK(error_kind([&] { vit.patchify(ImageTensor(3, 16, 12)); }) == ErrorKind::Structural);
  CHECK(error_kind([&] { vit.patchify(ImageTensor(1, 16, 16)); }) == ErrorKind::Structural);
}

TEST_CASE("initialisation is a truncated normal with std 0.02") {
  const VisionTransformer vit(small_config(16, 4, 64, 2, 4), 9);
  const Matrix& w = find(vit, "blocks.0.mlp.fc1.weight").value;
  CHECK(w.cwiseAbs().maxCoeff() <= 0.04);
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().mean());
  CHECK(std::abs(mean) < 0.002);
  CHECK(sd == doctest::Approx(0.02 * 0.8796).epsilon(0.05));  // std of N(0,1) truncated at +-2
  CHECK(find(vit, "blocks.0.norm1.weight").value.minCoeff() == 1.0);
  CHECK(find(vit, "blocks.0.norm1.bias").value.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention rows are probability distributions") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 5);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const EncoderOutput out = vit.encode(vit.patchify(random_image(c, s)));
    REQUIRE(out.attention.size() == 2);
    for (const auto& layer : out.attention) {
      REQUIRE(layer.size() == 4);
      for (const Matrix& a : layer) {
        CHECK(a.minCoeff() >= 0.0);
        CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-5);
      }
    }
    CHECK(out.class_feature == out.tokens.row(0));
  }
}

TEST_CASE("class-token-only sequence") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 5);
  TokenSequence s = vit.patchify(random_image(c, 0));
  TokenSequence cls;
  cls.embeddings = s.embeddings.topRows(1);
  const EncoderOutput out = vit.encode(cls);
  CHECK(out.tokens.rows() == 1);
  for (const auto& layer : out.attention)
    for (const Matrix& a : layer) CHECK(a == Matrix::Ones(1, 1));
}

TEST_CASE("permuting patch tokens leaves the class feature unchanged") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 6);
  const TokenSequence s = vit.patchify(random_image(c, 2));
  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(1);
  shuffle(perm.begin(), perm.end(), rng);
  TokenSequence p = s;
  for (int i = 0; i < 16; ++i) {
    p.embeddings.row(i + 1) = s.embeddings.row(perm[i] + 1);
    p.patch_pixels.row(i) = s.patch_pixels.row(perm[i]);
    p.source_indices[i] = perm[i];
  }
  const EncoderOutput a = vit.encode(s), b = vit.encode(p);
  CHECK((a.class_feature - b.class_feature).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 16; ++i) CHECK((b.tokens.row(i + 1) - a.tokens.row(perm[i] + 1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode is deterministic and has no cross-sample leakage") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 7);
  const ImageTensor a = random_image(c, 1), b = random_image(c, 2);
  const std::vector<ImageTensor> single{a}, doubled{a, a, b};
  const auto one = vit.encode(vit.patchify(single));
  const auto three = vit.encode(vit.patchify(doubled));
  CHECK(one[0].tokens == three[0].tokens);
  CHECK(three[0].tokens == three[1].tokens);
  CHECK(vit.encode(vit.patchify(a)).tokens == one[0].tokens);
}

TEST_CASE("non-finite activations raise a numeric error naming the layer") {
  const PatchConfig c = small_config();
  const VisionTransformer vit(c, 7);
  TokenSequence s = vit.patchify(random_image(c, 1));
  s.embeddings(3, 2) = std::numeric_limits<double>::infinity();
  try {
    vit.encode(s);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

TEST_CASE("class attention excludes and renormalizes the self mass") {
  EncoderOutput out;
  Matrix a(5, 5);
  Eigen::RowVectorXd logits(5);
  logits << 2, 1, 1, 1, 1;
  const Eigen::RowVectorXd sm = logits.array().exp() / logits.array().exp().sum();
  for (int r = 0; r < 5; ++r) a.row(r) = sm;
  out.attention = {{a}};
  const auto scores = class_attention(out, 0, 0);
  for (double s : scores) CHECK(s == doctest::Approx(0.25).epsilon(1e-12));
  const auto raw = class_attention(out, 0, 0, false);
  CHECK(raw[0] == doctest::Approx(sm(1)));

  Matrix uniform = Matrix::Constant(9, 9, 1.0 / 9.0);
  out.attention = {{uniform}};
  const auto u = class_attention(out, 0, 0);
  for (double s : u) CHECK(s == doctest::Approx(1.0 / 8.0));
  CHECK(std::accumulate(u.begin(), u.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));

  CHECK(error_kind([&] { class_attention(out, 1, 0); }) == ErrorKind::Parameter);
  CHECK(error_kind([&] { class_attention(out, 0, 1); }) == ErrorKind::Parameter);
}

TEST_CASE("class-feature gradients match central differences") {
  const PatchConfig c = small_config(16, 4, 32, 2, 4);
  VisionTransformer vit(c, 11);
  const ImageTensor img = random_image(c, 3);
  Rng rng(4);
  RowVector r(32);
  for (int i = 0; i < 32; ++i) r(i) = standard_normal(rng);
  Matrix r_tokens(17, 32);
  for (int i = 0; i < r_tokens.size(); ++i) r_tokens.data()[i] = 0.1 * standard_normal(rng);

  auto loss = [&] {
    const EncoderOutput out = vit.encode(vit.patchify(img, Stream::HighFrequency));
    return out.class_feature.dot(r) + (out.tokens.array() * r_tokens.array()).sum();
  };

  vit.zero_grad();
  const TokenSequence seq = vit.patchify(img, Stream::HighFrequency);
  EncoderTrace trace;
  vit.encode(seq, &trace);
  Matrix d_tokens = r_tokens;
  d_tokens.row(0) += r;
  vit.backward_patchify(seq, vit.backward_encode(trace, d_tokens));

  const auto errors = gradcheck::audit(vit.parameters(), loss, 12, 1e-5, 1);
  for (const auto& e : errors) {
    INFO(e.name);
    CHECK(e.rel_error < 1e-4);
  }
}
