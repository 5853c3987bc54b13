#include "ahf/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgproc.hpp>

#include "ahf/errors.hpp"
#include "ahf/image_io.hpp"

namespace ahf {

cv::Mat colorize(const cv::Mat& unit_gray) {
  cv::Mat bytes, bgr, rgb, out;
  unit_gray.convertTo(bytes, CV_8UC1, 255.0);
  cv::applyColorMap(bytes, bgr, cv::COLORMAP_JET);
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(out, CV_64FC3, 1.0 / 255.0);
  return out;
}

cv::Mat selection_overlay(const cv::Mat& rgb, const std::vector<int>& selected, int patch_size) {
  cv::Mat out = rgb * 0.35;
  const int gw = rgb.cols / patch_size;
  for (int idx : selected) {
    const cv::Rect r((idx % gw) * patch_size, (idx / gw) * patch_size, patch_size, patch_size);
    rgb(r).copyTo(out(r));
    cv::rectangle(out, r, cv::Scalar(1.0, 0.85, 0.0), 1);
  }
  return out;
}

AttentionMap attention_map(const backbone::VisionTransformer& encoder, const cv::Mat& rgb,
                           const data::AugmentConfig& aug, double mu, selection::HeadAggregation aggregation) {
  const auto& pc = encoder.config();
  Rng unused(0);
  const data::AugmentedPair pair = data::augment_pair(rgb, aug, data::Mode::Eval, unused);
  const auto out = encoder.encode(encoder.patchify(pair.original));
  const auto summary = selection::summarize_attention(std::span<const backbone::EncoderOutput>(&out, 1), aggregation);
  const auto sel = selection::select_top_z(summary, mu);

  AttentionMap m;
  m.input = pair.spatial;
  m.patch_scores.assign(summary.scores.data(), summary.scores.data() + summary.scores.size());
  m.selected = sel.indices.front();

  cv::Mat grid(pc.grid_height(), pc.grid_width(), CV_64FC1);
  for (int i = 0; i < pc.num_patches(); ++i)
    grid.at<double>(i / pc.grid_width(), i % pc.grid_width()) = m.patch_scores[static_cast<std::size_t>(i)];
  cv::resize(grid, m.heat, cv::Size(pc.image_width, pc.image_height), 0, 0, cv::INTER_LINEAR);
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(m.heat, &lo, &hi);
  if (hi > lo)
    m.heat = (m.heat - lo) / (hi - lo);
  else
    m.heat.setTo(0.0);
  m.heat = cv::min(cv::max(m.heat, 0.0), 1.0);

  m.overlay = 0.5 * m.input + 0.5 * colorize(m.heat);
  m.selection_mask = cv::Mat::zeros(pc.image_height, pc.image_width, CV_64FC1);
  for (int idx : m.selected) {
    const cv::Rect r((idx % pc.grid_width()) * pc.patch_size, (idx / pc.grid_width()) * pc.patch_size, pc.patch_size,
                     pc.patch_size);
    m.selection_mask(r).setTo(1.0);
  }
  return m;
}

void write_attention_map(const AttentionMap& map, const std::filesystem::path& dir, const std::string& stem) {
  save_image(dir / (stem + "_heat.png"), colorize(map.heat));
  save_image(dir / (stem + "_overlay.png"), map.overlay);
  const int patch = map.input.cols / std::max(1, static_cast<int>(std::lround(std::sqrt(map.patch_scores.size()))));
  save_image(dir / (stem + "_selected.png"), selection_overlay(map.input, map.selected, patch));
}

void plot_series(const std::filesystem::path& path, const std::vector<double>& xs, const std::vector<double>& ys,
                 const std::vector<std::string>& tick_labels, const std::string& x_label, const std::string& y_label,
                 const std::string& title) {
  if (xs.size() != ys.size()) throw structural_error("plot_series: x/y size mismatch");
  constexpr int W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  cv::Mat img(H, W, CV_64FC3, cv::Scalar::all(1.0));
  const cv::Scalar ink(0.1, 0.1, 0.1);
  cv::rectangle(img, cv::Point(L, T), cv::Point(W - R, H - B), ink, 1);
  cv::putText(img, title, cv::Point(L, 25), cv::FONT_HERSHEY_SIMPLEX, 0.5, ink, 1, cv::LINE_AA);
  cv::putText(img, x_label, cv::Point(W / 2 - 30, H - 15), cv::FONT_HERSHEY_SIMPLEX, 0.45, ink, 1, cv::LINE_AA);
  cv::putText(img, y_label, cv::Point(5, T - 8), cv::FONT_HERSHEY_SIMPLEX, 0.45, ink, 1, cv::LINE_AA);
  if (!xs.empty()) {
    const auto [xmin_it, xmax_it] = std::minmax_element(xs.begin(), xs.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(ys.begin(), ys.end());
    const double x0 = *xmin_it, x1 = *xmax_it > *xmin_it ? *xmax_it : *xmin_it + 1.0;
    double y0 = std::min(0.0, *ymin_it), y1 = std::max(*ymax_it, y0 + 1e-6);
    y1 += 0.05 * (y1 - y0);
    auto px = [&](double x) { return L + static_cast<int>((x - x0) / (x1 - x0) * (W - L - R - 20)) + 10; };
    auto py = [&](double y) { return H - B - static_cast<int>((y - y0) / (y1 - y0) * (H - T - B)); };
    for (int i = 0; i <= 4; ++i) {
      const double y = y0 + (y1 - y0) * i / 4.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", y);
      cv::putText(img, buf, cv::Point(8, py(y) + 4), cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1, cv::LINE_AA);
      cv::line(img, cv::Point(L, py(y)), cv::Point(W - R, py(y)), cv::Scalar::all(0.85), 1);
    }
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < xs.size(); ++i) pts.emplace_back(px(xs[i]), py(ys[i]));
    cv::polylines(img, pts, false, cv::Scalar(0.1, 0.3, 0.8), 2, cv::LINE_AA);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cv::circle(img, pts[i], 4, cv::Scalar(0.8, 0.2, 0.1), cv::FILLED, cv::LINE_AA);
      if (i < tick_labels.size())
        cv::putText(img, tick_labels[i], cv::Point(pts[i].x - 20, H - B + 18), cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1,
                    cv::LINE_AA);
    }
  }
  save_image(path, img);
}

}  // namespace ahf
