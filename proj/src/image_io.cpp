#include "ahf/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ahf/errors.hpp"

namespace ahf {

cv::Mat load_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw io_error("cannot decode image '" + path.string() + "'");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat out;
  rgb.convertTo(out, CV_64FC3, 1.0 / 255.0);
  return out;
}

void save_image(const std::filesystem::path& path, const cv::Mat& image) {
  cv::Mat bytes;
  image.convertTo(bytes, image.channels() == 3 ? CV_8UC3 : CV_8UC1, 255.0);
  if (image.channels() == 3) cv::cvtColor(bytes, bytes, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bytes)) throw io_error("cannot write image '" + path.string() + "'");
}

spectral::GrayImage to_gray(const cv::Mat& rgb) {
  if (rgb.type() != CV_64FC3) throw structural_error("to_gray: expected a CV_64FC3 raster");
  spectral::RealGrid r(rgb.rows, rgb.cols), g(rgb.rows, rgb.cols), b(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3d>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      r(y, x) = row[x][0];
      g(y, x) = row[x][1];
      b(y, x) = row[x][2];
    }
  }
  return spectral::luminance(r, g, b);
}

cv::Mat to_mat(const spectral::RealGrid& grid) {
  cv::Mat m(static_cast<int>(grid.rows()), static_cast<int>(grid.cols()), CV_64FC1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) m.at<double>(y, x) = grid(y, x);
  return m;
}

spectral::RealGrid to_grid(const cv::Mat& single_channel) {
  cv::Mat m;
  single_channel.convertTo(m, CV_64FC1);
  spectral::RealGrid g(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) g(y, x) = m.at<double>(y, x);
  return g;
}

ImageTensor to_input(const cv::Mat& rgb, int channels, const Normalization& norm) {
  if (channels == 1) return gray_to_input(to_gray(rgb), 1, norm);
  if (channels != 3) throw structural_error("to_input: channels must be 1 or 3");
  if (rgb.type() != CV_64FC3) throw structural_error("to_input: expected a CV_64FC3 raster");
  ImageTensor t(3, rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3d>(y);
    for (int x = 0; x < rgb.cols; ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = (row[x][c] - norm.mean) / norm.std;
  }
  return t;
}

ImageTensor gray_to_input(const spectral::GrayImage& gray, int channels, const Normalization& norm) {
  ImageTensor t(channels, gray.height(), gray.width());
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < gray.height(); ++y)
      for (int x = 0; x < gray.width(); ++x) t.at(c, y, x) = (gray.pixels()(y, x) - norm.mean) / norm.std;
  return t;
}

}  // namespace ahf
