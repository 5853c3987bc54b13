#include "ahf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <sstream>
#include <vector>

#include <fftw3.h>

#include "ahf/errors.hpp"

namespace ahf::spectral {

namespace {

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

enum class Direction { Forward, Inverse };

// Unnormalized DFT of a row-major buffer, in place.
void dft2d(std::vector<std::complex<double>>& buf, int h, int w, Direction dir) {
  auto* data = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_2d(h, w, data, data, dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                            FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
}

void check_same_dims(const Spectrum& a, int h, int w, const char* what) {
  if (a.height() != h || a.width() != w) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a.height() << "x" << a.width() << " vs " << h << "x" << w << ")";
    throw structural_error(os.str());
  }
}

}  // namespace

GrayImage::GrayImage(RealGrid pixels) : pixels_(std::move(pixels)) {
  if (pixels_.size() == 0) throw input_error("GrayImage: empty pixel grid");
  for (Eigen::Index i = 0; i < pixels_.size(); ++i) {
    const double v = pixels_.data()[i];
    if (!std::isfinite(v)) throw input_error("GrayImage: non-finite pixel value");
    if (v < 0.0 || v > 1.0) throw input_error("GrayImage: pixel value outside [0, 1]");
  }
}

GrayImage luminance(const RealGrid& r, const RealGrid& g, const RealGrid& b) {
  if (r.rows() != g.rows() || r.rows() != b.rows() || r.cols() != g.cols() || r.cols() != b.cols())
    throw structural_error("luminance: channel size mismatch");
  RealGrid y = 0.299 * r + 0.587 * g + 0.114 * b;
  return GrayImage(y.cwiseMax(0.0).cwiseMin(1.0));
}

Spectrum forward_transform(const GrayImage& img) {
  const int h = img.height();
  const int w = img.width();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) buf[static_cast<std::size_t>(y) * w + x] = img.pixels()(y, x);
  dft2d(buf, h, w, Direction::Forward);

  Spectrum out{ComplexGrid(h, w)};
  const int ch = h / 2;
  const int cw = w / 2;
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) out.coeffs((u + ch) % h, (v + cw) % w) = buf[static_cast<std::size_t>(u) * w + v];
  return out;
}

HighPassFilter::HighPassFilter(double cutoff_fraction, int height, int width) : cutoff_(cutoff_fraction) {
  if (!(cutoff_fraction > 0.0 && cutoff_fraction < 1.0))
    throw parameter_error("HighPassFilter: cutoff_fraction must lie in (0, 1)");
  if (height <= 0 || width <= 0) throw structural_error("HighPassFilter: empty grid");
  const double sigma = cutoff_fraction * std::min(height, width);
  const double two_sigma2 = 2.0 * sigma * sigma;
  // Far from DC exp() underflows; keep the realized gain strictly below 1.
  const double below_one = std::nextafter(1.0, 0.0);
  const int ch = height / 2;
  const int cw = width / 2;
  gain_.resize(height, width);
  for (int u = 0; u < height; ++u) {
    for (int v = 0; v < width; ++v) {
      const double du = u - ch;
      const double dv = v - cw;
      const double d2 = du * du + dv * dv;
      gain_(u, v) = std::min(1.0 - std::exp(-d2 / two_sigma2), below_one);
    }
  }
  gain_(ch, cw) = 0.0;
}

Spectrum apply_high_pass(const Spectrum& spec, const HighPassFilter& filt) {
  check_same_dims(spec, static_cast<int>(filt.gain().rows()), static_cast<int>(filt.gain().cols()),
                  "apply_high_pass");
  Spectrum out{spec.coeffs.cwiseProduct(filt.gain().cast<std::complex<double>>())};
  out.coeffs(spec.height() / 2, spec.width() / 2) = 0.0;
  return out;
}

int mask_side(double alpha, int height, int width) {
  if (!(alpha >= 0.0 && alpha <= 0.5)) throw parameter_error("mask: alpha must lie in [0, 0.5]");
  if (height <= 0 || width <= 0) throw structural_error("mask: empty grid");
  const int side = static_cast<int>(std::lround(std::sqrt(alpha * height * width)));
  if (side > std::min(height, width))
    throw parameter_error("mask: square of side " + std::to_string(side) + " does not fit a " +
                          std::to_string(height) + "x" + std::to_string(width) + " grid");
  return side;
}

MixMask make_mask(double alpha, int height, int width, int row, int col) {
  const int side = mask_side(alpha, height, width);
  if (row < 0 || col < 0 || row + side > height || col + side > width)
    throw parameter_error("mask: anchor places the square outside the grid");
  MixMask m;
  m.alpha = alpha;
  m.side = side;
  m.row = row;
  m.col = col;
  m.grid = RealGrid::Zero(height, width);
  if (side > 0) m.grid.block(row, col, side, side).setOnes();
  return m;
}

MixMask sample_mask(double alpha, int height, int width, Rng& rng) {
  const int side = mask_side(alpha, height, width);
  const int row = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(height - side + 1)));
  const int col = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(width - side + 1)));
  return make_mask(alpha, height, width, row, col);
}

Spectrum mix_spectra(const Spectrum& high, const Spectrum& orig, const MixMask& mask) {
  const int h = static_cast<int>(mask.grid.rows());
  const int w = static_cast<int>(mask.grid.cols());
  check_same_dims(high, h, w, "mix_spectra");
  check_same_dims(orig, h, w, "mix_spectra");
  Spectrum out{high.coeffs};
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v)
      if (mask.grid(u, v) != 0.0) out.coeffs(u, v) = orig.coeffs(u, v);
  return out;
}

SpatialGrid inverse_transform(const Spectrum& spec) {
  const int h = spec.height();
  const int w = spec.width();
  if (h == 0 || w == 0) throw structural_error("inverse_transform: empty spectrum");
  const int ch = h / 2;
  const int cw = w / 2;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(h) * w);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) buf[static_cast<std::size_t>(u) * w + v] = spec.coeffs((u + ch) % h, (v + cw) % w);
  dft2d(buf, h, w, Direction::Inverse);

  SpatialGrid out{RealGrid(h, w), 0.0};
  const double scale = 1.0 / (static_cast<double>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto c = buf[static_cast<std::size_t>(y) * w + x] * scale;
      out.real(y, x) = c.real();
      out.max_imag_residue = std::max(out.max_imag_residue, std::abs(c.imag()));
    }
  }
  return out;
}

RealGrid rescale_to_unit(const RealGrid& grid) {
  const double lo = grid.minCoeff();
  const double hi = grid.maxCoeff();
  if (!(hi > lo)) return RealGrid::Zero(grid.rows(), grid.cols());
  return ((grid.array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

double energy(const Spectrum& spec) { return spec.coeffs.cwiseAbs2().sum(); }

RealGrid log_magnitude(const Spectrum& spec) { return spec.coeffs.cwiseAbs().array().log1p().matrix(); }

GrayImage fma_augment(const GrayImage& img, const FmaOptions& opts, Rng& rng, FmaTrace* trace) {
  const int h = img.height();
  const int w = img.width();

  double alpha = 0.0;
  if (opts.mix) alpha = opts.alpha ? *opts.alpha : uniform(rng, 0.0, 0.5);
  MixMask mask;
  if (opts.mix && opts.anchor)
    mask = make_mask(alpha, h, w, opts.anchor->first, opts.anchor->second);
  else if (opts.mix)
    mask = sample_mask(alpha, h, w, rng);
  else
    mask = make_mask(0.0, h, w, 0, 0);

  Spectrum original = forward_transform(img);
  Spectrum filtered = opts.high_pass
                          ? apply_high_pass(original, HighPassFilter(opts.cutoff_fraction, h, w))
                          : original;
  Spectrum mixed = mix_spectra(filtered, original, mask);
  SpatialGrid inverse = inverse_transform(mixed);

  for (Eigen::Index i = 0; i < inverse.real.size(); ++i)
    if (!std::isfinite(inverse.real.data()[i])) throw numeric_error("fma_augment: non-finite output");

  RealGrid out = opts.rescale ? rescale_to_unit(inverse.real) : RealGrid(inverse.real.cwiseMax(0.0).cwiseMin(1.0));
  if (trace) {
    trace->original = std::move(original);
    trace->filtered = std::move(filtered);
    trace->mixed = std::move(mixed);
    trace->mask = std::move(mask);
    trace->inverse = std::move(inverse);
  }
  return GrayImage(std::move(out));
}

}  // namespace ahf::spectral
