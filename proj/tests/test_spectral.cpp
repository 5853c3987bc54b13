#include <cmath>
#include <limits>
#include <set>

#include "ahf/spectral.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ahf;
using namespace ahf::spectral;

namespace {

RealGrid random_grid(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  RealGrid g(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g(y, x) = uniform01(rng);
  return g;
}

double max_abs(const RealGrid& a, const RealGrid& b) { return (a - b).cwiseAbs().maxCoeff(); }

double band_energy(const Spectrum& s, double radius) {
  const int h = static_cast<int>(s.coeffs.rows()), w = static_cast<int>(s.coeffs.cols());
  double e = 0.0;
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      const double d = std::hypot(u - h / 2, v - w / 2);
      if (d <= radius) e += std::norm(s.coeffs(u, v));
    }
  return e;
}

}  // namespace

TEST_CASE("gray image rejects non-finite and out-of-range pixels") {
  RealGrid g = RealGrid::Constant(4, 4, 0.5);
  g(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK(error_kind([&] { GrayImage{g}; }) == ErrorKind::Input);
  g(1, 2) = 1.5;
  CHECK(error_kind([&] { GrayImage{g}; }) == ErrorKind::Input);
  g(1, 2) = 1.0;
  CHECK_NOTHROW(GrayImage{g});
}

TEST_CASE("luminance weights") {
  const RealGrid one = RealGrid::Ones(2, 2), zero = RealGrid::Zero(2, 2);
  CHECK(luminance(one, zero, zero).pixels()(0, 0) == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(luminance(zero, one, zero).pixels()(0, 0) == doctest::Approx(0.587).epsilon(1e-15));
  CHECK(luminance(zero, zero, one).pixels()(0, 0) == doctest::Approx(0.114).epsilon(1e-15));
}

TEST_CASE("forward transform matches the direct DFT sum") {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{7, 5}, std::pair{1, 4}}) {
    const RealGrid img = random_grid(h, w, 17 + h * 31 + w);
    const Spectrum s = forward_transform(GrayImage(img));
    const Eigen::MatrixXcd ref = oracle::direct_dft_centered(img);
    CHECK((s.coeffs - ref).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("constant image has only a DC coefficient") {
  const double c = 0.37;
  const Spectrum s = forward_transform(GrayImage(RealGrid::Constant(16, 12, c)));
  for (int u = 0; u < 16; ++u)
    for (int v = 0; v < 12; ++v) {
      if (u == 8 && v == 6)
        CHECK(std::abs(s.coeffs(u, v) - std::complex<double>(c * 16 * 12, 0.0)) < 1e-9);
      else
        CHECK(std::abs(s.coeffs(u, v)) < 1e-9);
    }
}

TEST_CASE("impulse at the origin has unit magnitude everywhere") {
  RealGrid g = RealGrid::Zero(8, 6);
  g(0, 0) = 1.0;
  const Spectrum s = forward_transform(GrayImage(g));
  CHECK((s.coeffs.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("roundtrip reproduces the image") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int h = 4 + static_cast<int>(seed % 7) * 5, w = 3 + static_cast<int>(seed % 5) * 7;
    const RealGrid img = random_grid(h, w, seed);
    const SpatialGrid back = inverse_transform(forward_transform(GrayImage(img)));
    CHECK(max_abs(back.real, img) < 1e-6);
    CHECK(back.max_imag_residue < 1e-6);
  }
}

TEST_CASE("forward transform is linear") {
  const RealGrid a = random_grid(12, 10, 1), b = random_grid(12, 10, 2);
  const Spectrum fa = forward_transform(GrayImage(a)), fb = forward_transform(GrayImage(b));
  const Spectrum fab = forward_transform(GrayImage(0.3 * a + 0.5 * b));
  CHECK((fab.coeffs - (0.3 * fa.coeffs + 0.5 * fb.coeffs)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("high-pass gain invariants") {
  for (auto [h, w] : {std::pair{64, 64}, std::pair{31, 48}, std::pair{256, 256}}) {
    const HighPassFilter f(HighPassFilter::kDefaultCutoff, h, w);
    const RealGrid& g = f.gain();
    CHECK(g(h / 2, w / 2) == 0.0);
    CHECK(g.maxCoeff() < 1.0);
    CHECK(g.minCoeff() >= 0.0);
    std::vector<std::pair<double, double>> by_dist;
    for (int u = 0; u < h; ++u)
      for (int v = 0; v < w; ++v) by_dist.push_back({std::hypot(u - h / 2, v - w / 2), g(u, v)});
    std::sort(by_dist.begin(), by_dist.end());
    bool monotone = true;
    for (std::size_t i = 1; i < by_dist.size(); ++i)
      if (by_dist[i].first > by_dist[i - 1].first && by_dist[i].second < by_dist[i - 1].second) monotone = false;
    CHECK(monotone);
  }
}

TEST_CASE("gain follows the Gaussian closed form") {
  const HighPassFilter f(0.1, 40, 50);
  const double sigma = 0.1 * 40;
  for (int u : {0, 7, 20, 33})
    for (int v : {0, 11, 25, 49}) {
      const double d2 = std::pow(u - 20, 2) + std::pow(v - 25, 2);
      const double expected = std::min(1.0 - std::exp(-d2 / (2 * sigma * sigma)), std::nextafter(1.0, 0.0));
      CHECK(f.gain()(u, v) == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("filter parameter validation") {
  CHECK(error_kind([] { HighPassFilter(0.0, 8, 8); }) == ErrorKind::Parameter);
  CHECK(error_kind([] { HighPassFilter(1.0, 8, 8); }) == ErrorKind::Parameter);
  const Spectrum s = forward_transform(GrayImage(random_grid(8, 8, 3)));
  CHECK(error_kind([&] { apply_high_pass(s, HighPassFilter(0.05, 8, 6)); }) == ErrorKind::Structural);
}

TEST_CASE("high-pass of a constant image is zero") {
  const Spectrum s = forward_transform(GrayImage(RealGrid::Constant(16, 16, 0.8)));
  const Spectrum hp = apply_high_pass(s, HighPassFilter(0.05, 16, 16));
  CHECK(hp.coeffs.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("vanishing cutoff passes everything except DC") {
  const Spectrum s = forward_transform(GrayImage(random_grid(16, 16, 4)));
  const Spectrum hp = apply_high_pass(s, HighPassFilter(1e-6, 16, 16));
  CHECK(hp.coeffs(8, 8) == std::complex<double>(0.0, 0.0));
  Eigen::MatrixXcd diff = hp.coeffs - s.coeffs;
  diff(8, 8) = 0.0;
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-12 * s.coeffs.cwiseAbs().maxCoeff());
}

TEST_CASE("checkerboard keeps its AC energy under the default filter") {
  // A 0/1 checkerboard carries half its energy at DC; the retained fraction
  // is measured over the non-DC part, which is the checkerboard frequency.
  RealGrid g(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) g(y, x) = (x + y) % 2;
  const Spectrum s = forward_transform(GrayImage(g));
  const Spectrum hp = apply_high_pass(s, HighPassFilter(HighPassFilter::kDefaultCutoff, 64, 64));
  const double ac = energy(s) - std::norm(s.coeffs(32, 32));
  CHECK(energy(hp) / ac >= 0.99);
}

TEST_CASE("filtered image has zero mean before rescale") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RealGrid img = random_grid(20 + int(seed), 24, seed);
    const GrayImage gi(img);
    const SpatialGrid out =
        inverse_transform(apply_high_pass(forward_transform(gi), HighPassFilter(0.05, gi.height(), gi.width())));
    CHECK(std::abs(out.real.mean()) < 1e-6);
  }
}

TEST_CASE("mask side and area") {
  CHECK(mask_side(0.25, 256, 256) == 128);
  const MixMask m = make_mask(0.25, 256, 256, 3, 100);
  CHECK(m.side == 128);
  CHECK(m.count() == 16384);
  CHECK(m.grid.sum() == 16384.0);

  Rng rng(5);
  const MixMask z = sample_mask(0.0, 32, 32, rng);
  CHECK(z.side == 0);
  CHECK(z.grid.sum() == 0.0);

  CHECK(error_kind([&] { sample_mask(-0.01, 32, 32, rng); }) == ErrorKind::Parameter);
  CHECK(error_kind([&] { sample_mask(0.51, 32, 32, rng); }) == ErrorKind::Parameter);
  // The square must fit: alpha 0.5 on a 4 x 64 grid needs side 11 > 4.
  CHECK(error_kind([&] { sample_mask(0.5, 4, 64, rng); }) == ErrorKind::Parameter);
}

TEST_CASE("sampled masks form one in-bounds square of the stated area") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int h = 8 + static_cast<int>(uniform_index(rng, 60)), w = 8 + static_cast<int>(uniform_index(rng, 60));
    const double alpha = uniform(rng, 0.0, 0.5);
    const int side = static_cast<int>(std::lround(std::sqrt(alpha * h * w)));
    if (side > std::min(h, w)) continue;
    const MixMask m = sample_mask(alpha, h, w, rng);
    REQUIRE(m.side == side);
    CHECK(m.count() == side * side);
    CHECK(m.grid.sum() == double(side * side));
    CHECK(m.row >= 0);
    CHECK(m.col >= 0);
    CHECK(m.row + side <= h);
    CHECK(m.col + side <= w);
    if (side > 0) CHECK(m.grid.block(m.row, m.col, side, side).minCoeff() == 1.0);
  }
}

TEST_CASE("mask anchors reach every in-bounds position and are seed-deterministic") {
  Rng rng(3);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 2000; ++i) {
    const MixMask m = sample_mask(0.25, 8, 8, rng);  // side 4, 5 x 5 anchors
    seen.insert({m.row, m.col});
  }
  CHECK(seen.size() == 25);

  Rng a(99), b(99);
  const MixMask ma = sample_mask(0.3, 40, 30, a), mb = sample_mask(0.3, 40, 30, b);
  CHECK(ma.row == mb.row);
  CHECK(ma.col == mb.col);
  CHECK(ma.side == mb.side);
}

TEST_CASE("mix follows the masked selection") {
  Spectrum high{Eigen::MatrixXcd(2, 2)}, orig{Eigen::MatrixXcd(2, 2)};
  high.coeffs << 1, 2, 3, 4;
  orig.coeffs << 10, 20, 30, 40;
  MixMask m;
  m.grid = RealGrid::Zero(2, 2);
  m.grid(0, 0) = 1.0;
  m.side = 1;
  const Spectrum out = mix_spectra(high, orig, m);
  Eigen::MatrixXcd expected(2, 2);
  expected << 10, 2, 3, 4;
  CHECK(out.coeffs == expected);

  m.grid.setZero();
  CHECK(mix_spectra(high, orig, m).coeffs == high.coeffs);
  m.grid.setOnes();
  CHECK(mix_spectra(high, orig, m).coeffs == orig.coeffs);

  MixMask wrong;
  wrong.grid = RealGrid::Zero(3, 2);
  CHECK(error_kind([&] { mix_spectra(high, orig, wrong); }) == ErrorKind::Structural);
}

TEST_CASE("every mixed coefficient is exactly one of its sources") {
  const GrayImage img(random_grid(32, 32, 8));
  const Spectrum orig = forward_transform(img);
  const Spectrum high = apply_high_pass(orig, HighPassFilter(0.05, 32, 32));
  Rng rng(8);
  const MixMask m = sample_mask(0.4, 32, 32, rng);
  const Spectrum mixed = mix_spectra(high, orig, m);
  for (int u = 0; u < 32; ++u)
    for (int v = 0; v < 32; ++v) {
      const auto c = mixed.coeffs(u, v);
      CHECK((c == high.coeffs(u, v) || c == orig.coeffs(u, v)));
      CHECK(c == (m.grid(u, v) == 1.0 ? orig.coeffs(u, v) : high.coeffs(u, v)));
    }
}

TEST_CASE("inverse transform special cases") {
  const SpatialGrid zero = inverse_transform(Spectrum{Eigen::MatrixXcd::Zero(6, 8)});
  CHECK(zero.real.cwiseAbs().maxCoeff() == 0.0);
  Spectrum dc{Eigen::MatrixXcd::Zero(6, 8)};
  dc.coeffs(3, 4) = 6.0 * 8.0;
  CHECK((inverse_transform(dc).real.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("rescale to unit range") {
  CHECK(rescale_to_unit(RealGrid::Constant(3, 3, 0.4)).cwiseAbs().maxCoeff() == 0.0);
  RealGrid g(1, 3);
  g << -2.0, 0.0, 2.0;
  const RealGrid r = rescale_to_unit(g);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == doctest::Approx(0.5));
  CHECK(r(0, 2) == 1.0);
}

TEST_CASE("fma with alpha 0 equals the pure high-pass pipeline") {
  const GrayImage img(random_grid(32, 32, 21));
  FmaOptions opts;
  opts.alpha = 0.0;
  Rng rng(1);
  const GrayImage out = fma_augment(img, opts, rng);
  const RealGrid pure = rescale_to_unit(
      inverse_transform(apply_high_pass(forward_transform(img), HighPassFilter(opts.cutoff_fraction, 32, 32))).real);
  CHECK(max_abs(out.pixels(), pure) < 1e-12);

  FmaOptions no_mix;
  no_mix.mix = false;
  Rng rng2(1);
  CHECK(max_abs(fma_augment(img, no_mix, rng2).pixels(), pure) < 1e-12);
}

TEST_CASE("central mask at alpha 0.5 restores low frequencies") {
  // Smooth image: a vertical ramp plus faint texture.
  RealGrid g(64, 64);
  const RealGrid noise = random_grid(64, 64, 4);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) g(y, x) = 0.8 * y / 63.0 + 0.1 * noise(y, x);
  const GrayImage img(g);

  FmaOptions mixed_opts;
  mixed_opts.alpha = 0.5;
  mixed_opts.anchor = std::pair{10, 10};  // side 45 covers the centre (32, 32)
  mixed_opts.rescale = false;
  FmaOptions pure_opts;
  pure_opts.alpha = 0.0;
  pure_opts.rescale = false;
  Rng r1(0), r2(0);
  FmaTrace t_mixed, t_pure;
  fma_augment(img, mixed_opts, r1, &t_mixed);
  fma_augment(img, pure_opts, r2, &t_pure);
  REQUIRE(t_mixed.mask.grid(32, 32) == 1.0);

  // Low-band share of the non-DC energy; invariant to the affine rescale.
  auto low_share = [](const RealGrid& out) {
    const Spectrum s = forward_transform(GrayImage(rescale_to_unit(out)));
    const double dc = std::norm(s.coeffs(32, 32));
    return (band_energy(s, 0.05 * 64) - dc) / (energy(s) - dc);
  };
  CHECK(t_mixed.mixed.coeffs(32, 32) == t_mixed.original.coeffs(32, 32));
  CHECK(low_share(t_mixed.inverse.real) > 5.0 * low_share(t_pure.inverse.real));
}

TEST_CASE("fma is deterministic per seed and draws alpha in range") {
  const GrayImage img(random_grid(32, 32, 2));
  Rng a(42), b(42);
  FmaTrace ta, tb;
  const GrayImage oa = fma_augment(img, {}, a, &ta), ob = fma_augment(img, {}, b, &tb);
  CHECK(oa.pixels() == ob.pixels());
  CHECK(ta.mask.alpha == tb.mask.alpha);

  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 300; ++i) {
    FmaTrace t;
    const GrayImage o = fma_augment(img, {}, rng, &t);
    lo = std::min(lo, t.mask.alpha);
    hi = std::max(hi, t.mask.alpha);
    CHECK(o.pixels().minCoeff() >= 0.0);
    CHECK(o.pixels().maxCoeff() <= 1.0);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 0.5);
  CHECK(lo < 0.05);
  CHECK(hi > 0.45);
}

TEST_CASE("log magnitude is log1p of the modulus") {
  const Spectrum s = forward_transform(GrayImage(random_grid(8, 8, 6)));
  const RealGrid lm = log_magnitude(s);
  CHECK(lm(4, 4) == doctest::Approx(std::log1p(std::abs(s.coeffs(4, 4)))));
}
