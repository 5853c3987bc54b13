#include "ahf/augment.hpp"

#include <cmath>

#include <opencv2/imgproc.hpp>

#include "ahf/errors.hpp"

namespace ahf::data {

AugmentParams sample_augment_params(const AugmentConfig& cfg, Rng& rng) {
  AugmentParams p;
  p.angle_deg = uniform(rng, -cfg.max_rotation_deg, cfg.max_rotation_deg);
  p.brightness_on = coin(rng, cfg.brightness_prob);
  p.brightness_factor = uniform(rng, 1.0 - cfg.brightness, 1.0 + cfg.brightness);
  p.contrast_on = coin(rng, cfg.contrast_prob);
  p.contrast_factor = uniform(rng, 1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const auto span = static_cast<std::size_t>(2 * cfg.pad + 1);
  p.crop_x = static_cast<int>(uniform_index(rng, span));
  p.crop_y = static_cast<int>(uniform_index(rng, span));
  p.flip = cfg.horizontal_flip && coin(rng, 0.5);
  return p;
}

cv::Mat resize_to(const cv::Mat& rgb, int height, int width) {
  if (rgb.empty()) throw input_error("resize: empty image");
  if (rgb.rows == height && rgb.cols == width) return rgb.clone();
  cv::Mat out;
  cv::resize(rgb, out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return out;
}

cv::Mat apply_spatial(const cv::Mat& rgb, const AugmentParams& params, const AugmentConfig& cfg) {
  if (rgb.rows != cfg.height || rgb.cols != cfg.width) throw structural_error("apply_spatial: image not at target size");
  cv::Mat img;
  const cv::Point2f center(static_cast<float>(cfg.width - 1) / 2.0f, static_cast<float>(cfg.height - 1) / 2.0f);
  const cv::Mat rot = cv::getRotationMatrix2D(center, params.angle_deg, 1.0);
  cv::warpAffine(rgb, img, rot, rgb.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(0));

  if (params.brightness_on) img *= params.brightness_factor;
  if (params.contrast_on) {
    const cv::Scalar m = cv::mean(img);
    const double mean = 0.299 * m[0] + 0.587 * m[1] + 0.114 * m[2];
    img = (img - cv::Scalar::all(mean)) * params.contrast_factor + cv::Scalar::all(mean);
  }
  img = cv::min(cv::max(img, 0.0), 1.0);

  if (cfg.pad > 0) {
    cv::Mat padded;
    cv::copyMakeBorder(img, padded, cfg.pad, cfg.pad, cfg.pad, cfg.pad, cv::BORDER_CONSTANT, cv::Scalar::all(0));
    img = padded(cv::Rect(params.crop_x, params.crop_y, cfg.width, cfg.height)).clone();
  }
  if (params.flip) cv::flip(img, img, 1);
  return img;
}

AugmentedPair augment_pair(const cv::Mat& rgb, const AugmentConfig& cfg, Mode mode, Rng& rng, bool dual) {
  AugmentedPair pair;
  const cv::Mat resized = resize_to(rgb, cfg.height, cfg.width);
  if (mode == Mode::Eval) {
    pair.spatial = resized;
    pair.original = to_input(resized, cfg.channels, cfg.norm);
    return pair;
  }
  pair.spatial = apply_spatial(resized, sample_augment_params(cfg, rng), cfg);
  pair.original = to_input(pair.spatial, cfg.channels, cfg.norm);
  if (dual) {
    spectral::GrayImage hf = spectral::fma_augment(to_gray(pair.spatial), cfg.fma, rng);
    pair.high_freq = gray_to_input(hf, cfg.channels, cfg.norm);
    pair.high_freq_gray = std::move(hf);
  }
  return pair;
}

}  // namespace ahf::data
