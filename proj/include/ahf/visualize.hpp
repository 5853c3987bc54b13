#pragma once

// Class-token attention heatmaps, selected-patch overlays and simple line
// plots, all written as PNG.

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "ahf/augment.hpp"
#include "ahf/backbone.hpp"
#include "ahf/selection.hpp"

namespace ahf {

struct AttentionMap {
  std::vector<double> patch_scores;  // head-averaged final-layer scores, grid order
  std::vector<int> selected;         // top-Z patch indices
  cv::Mat input;                     // CV_64FC3, model-sized input
  cv::Mat heat;                      // CV_64FC1 upsampled scores, min-max normalized per image
  cv::Mat overlay;                   // CV_64FC3 heat blended over the input
  cv::Mat selection_mask;            // CV_64FC1, 1 inside selected patches
};

AttentionMap attention_map(const backbone::VisionTransformer& encoder, const cv::Mat& rgb,
                           const data::AugmentConfig& aug, double mu,
                           selection::HeadAggregation aggregation = selection::HeadAggregation::RenormalizePerHead);

/// Writes <stem>_heat.png, <stem>_overlay.png and <stem>_selected.png.
void write_attention_map(const AttentionMap& map, const std::filesystem::path& dir, const std::string& stem);

/// Input image with selected patches highlighted and the rest dimmed.
cv::Mat selection_overlay(const cv::Mat& rgb, const std::vector<int>& selected, int patch_size);

/// JET colour map of a [0, 1] single-channel raster, as RGB doubles.
cv::Mat colorize(const cv::Mat& unit_gray);

void plot_series(const std::filesystem::path& path, const std::vector<double>& xs, const std::vector<double>& ys,
                 const std::vector<std::string>& tick_labels, const std::string& x_label, const std::string& y_label,
                 const std::string& title);

}  // namespace ahf
