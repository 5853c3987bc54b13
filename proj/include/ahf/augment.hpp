#pragma once

// Training-time spatial augmentation and construction of the pixel-aligned
// (original, high-frequency) input pair.

#include <optional>

#include <opencv2/core.hpp>

#include "ahf/image_io.hpp"
#include "ahf/random.hpp"
#include "ahf/spectral.hpp"

namespace ahf::data {

struct AugmentConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  double max_rotation_deg = 15.0;
  double brightness = 0.2;  // multiplicative factor drawn from 1 +- brightness
  double contrast = 0.2;
  double brightness_prob = 0.5;
  double contrast_prob = 0.5;
  int pad = 10;
  bool horizontal_flip = false;
  Normalization norm;
  spectral::FmaOptions fma;
};

struct AugmentParams {
  double angle_deg = 0.0;
  bool brightness_on = false;
  double brightness_factor = 1.0;
  bool contrast_on = false;
  double contrast_factor = 1.0;
  int crop_x = 0;
  int crop_y = 0;
  bool flip = false;
};

enum class Mode { Train, Eval };

/// Draw order is fixed: angle, brightness coin+factor, contrast coin+factor,
/// crop x, crop y, flip.
AugmentParams sample_augment_params(const AugmentConfig& cfg, Rng& rng);

cv::Mat resize_to(const cv::Mat& rgb, int height, int width);
/// Rotation, photometric jitter, pad-then-crop, optional flip. Input must
/// already be at the target size.
cv::Mat apply_spatial(const cv::Mat& rgb, const AugmentParams& params, const AugmentConfig& cfg);

struct AugmentedPair {
  cv::Mat spatial;  // geometry/photometry applied, before normalization
  ImageTensor original;
  std::optional<ImageTensor> high_freq;
  std::optional<spectral::GrayImage> high_freq_gray;  // I_h before normalization
};

/// Train: spatial augmentation, then both streams from the same pixels.
/// Eval: resize + normalize, no high-frequency input. `dual` = false skips
/// the high-frequency stream in training mode as well.
AugmentedPair augment_pair(const cv::Mat& rgb, const AugmentConfig& cfg, Mode mode, Rng& rng, bool dual = true);

}  // namespace ahf::data
