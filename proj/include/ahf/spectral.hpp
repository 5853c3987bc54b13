#pragma once

// Frequency-domain mixed augmentation: forward/inverse 2-D DFT, Gaussian
// high-pass filtering and random square-mask mixing of spectra.
//
// Conventions: grids are indexed (row = y, col = x). The forward transform is
// unnormalized; the inverse carries the 1/(HW) factor. Spectra are stored in
// centered layout, with DC at (H/2, W/2) (integer division).

#include <optional>
#include <utility>

#include <Eigen/Core>

#include "ahf/random.hpp"

namespace ahf::spectral {

using RealGrid = Eigen::MatrixXd;
using ComplexGrid = Eigen::MatrixXcd;

/// Single-channel image with finite values in [0, 1].
class GrayImage {
 public:
  explicit GrayImage(RealGrid pixels);

  const RealGrid& pixels() const { return pixels_; }
  int height() const { return static_cast<int>(pixels_.rows()); }
  int width() const { return static_cast<int>(pixels_.cols()); }

 private:
  RealGrid pixels_;
};

/// 0.299 R + 0.587 G + 0.114 B.
GrayImage luminance(const RealGrid& r, const RealGrid& g, const RealGrid& b);

struct Spectrum {
  ComplexGrid coeffs;  // centered layout

  int height() const { return static_cast<int>(coeffs.rows()); }
  int width() const { return static_cast<int>(coeffs.cols()); }
};

/// Gaussian high-pass gain g = 1 - exp(-D^2 / (2 sigma^2)), sigma =
/// cutoff_fraction * min(H, W), D measured from the centered DC bin.
class HighPassFilter {
 public:
  static constexpr double kDefaultCutoff = 0.05;

  HighPassFilter(double cutoff_fraction, int height, int width);

  double cutoff_fraction() const { return cutoff_; }
  const RealGrid& gain() const { return gain_; }

 private:
  double cutoff_;
  RealGrid gain_;
};

struct MixMask {
  double alpha = 0.0;
  int side = 0;
  int row = 0;  // top-left anchor
  int col = 0;
  RealGrid grid;  // binary, 1 inside the square

  long count() const { return static_cast<long>(side) * side; }
};

struct SpatialGrid {
  RealGrid real;
  double max_imag_residue = 0.0;
};

Spectrum forward_transform(const GrayImage& img);
Spectrum apply_high_pass(const Spectrum& spec, const HighPassFilter& filt);

/// Square side used for a given alpha: round(sqrt(alpha * H * W)).
int mask_side(double alpha, int height, int width);
/// Draws the anchor uniformly over all in-bounds positions.
MixMask sample_mask(double alpha, int height, int width, Rng& rng);
/// Mask with an explicit anchor.
MixMask make_mask(double alpha, int height, int width, int row, int col);

/// (1 - M) * high + M * orig, elementwise.
Spectrum mix_spectra(const Spectrum& high, const Spectrum& orig, const MixMask& mask);

/// Real part of the inverse DFT with the 1/(HW) factor, and the largest
/// absolute imaginary component that was discarded.
SpatialGrid inverse_transform(const Spectrum& spec);

/// Min-max rescale to [0, 1]. Constant grids map to all zeros.
RealGrid rescale_to_unit(const RealGrid& grid);

double energy(const Spectrum& spec);
/// log(1 + |F|), for visualisation.
RealGrid log_magnitude(const Spectrum& spec);

struct FmaOptions {
  double cutoff_fraction = HighPassFilter::kDefaultCutoff;
  bool high_pass = true;  // false: identity gain (diagnostics only)
  bool mix = true;        // false: no mixing, pure high-pass output
  bool rescale = true;    // false: clamp to [0, 1] instead of min-max
  std::optional<double> alpha;                 // forced alpha
  std::optional<std::pair<int, int>> anchor;   // forced (row, col)
};

struct FmaTrace {
  Spectrum original;
  Spectrum filtered;
  Spectrum mixed;
  MixMask mask;
  SpatialGrid inverse;
};

/// forward -> high-pass -> mix with the unfiltered spectrum -> inverse ->
/// rescale. alpha ~ U(0, 0.5) unless forced.
GrayImage fma_augment(const GrayImage& img, const FmaOptions& opts, Rng& rng,
                      FmaTrace* trace = nullptr);

}  // namespace ahf::spectral
