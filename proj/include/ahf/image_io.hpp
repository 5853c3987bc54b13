#pragma once

// Conversions between OpenCV rasters and the library's image types. Colour
// rasters are CV_64FC3 in RGB order with values in [0, 1].

#include <filesystem>

#include <opencv2/core.hpp>

#include "ahf/spectral.hpp"
#include "ahf/tensor.hpp"

namespace ahf {

struct Normalization {
  double mean = 0.5;
  double std = 0.5;
};

cv::Mat load_rgb(const std::filesystem::path& path);
/// Writes an RGB (CV_64FC3) or single-channel (CV_64FC1) raster in [0, 1].
void save_image(const std::filesystem::path& path, const cv::Mat& image);

spectral::GrayImage to_gray(const cv::Mat& rgb);
cv::Mat to_mat(const spectral::RealGrid& grid);
spectral::RealGrid to_grid(const cv::Mat& single_channel);

/// RGB raster -> normalized tensor. channels == 1 uses luminance.
ImageTensor to_input(const cv::Mat& rgb, int channels, const Normalization& norm = {});
/// Grayscale -> normalized tensor, replicated over `channels`.
ImageTensor gray_to_input(const spectral::GrayImage& gray, int channels, const Normalization& norm = {});

}  // namespace ahf
