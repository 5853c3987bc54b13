#pragma once

// Procedural re-identification benchmark: each identity is a textured
// ellipse (stripe frequency/orientation/phase, spot layout, palette) placed
// with varying pose, scale and lighting over a per-image background.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "ahf/manifest.hpp"

namespace ahf::data {

enum class Background {
  Clutter,   // random lines, blobs and pixel noise
  Constant,  // flat grey
};

struct SynthConfig {
  int identities = 30;
  int images_per_identity = 10;
  int size = 64;
  std::uint64_t seed = 0;
  Background background = Background::Clutter;
  double min_area_fraction = 0.30;  // object ellipse area / image area
  double max_area_fraction = 0.45;
  int palette_size = 4;  // colour schemes shared across identities
};

struct IdentityTexture {
  double stripe_frequency = 0.0;  // cycles per object-local pixel
  double stripe_angle = 0.0;
  double stripe_phase = 0.0;
  int palette = 0;
  std::vector<cv::Point2d> spots;  // object-local unit-disk coordinates
  double spot_radius = 0.0;
};

struct SynthImage {
  cv::Mat rgb;   // CV_64FC3 in [0, 1]
  cv::Mat mask;  // CV_8UC1, 255 on the object
  std::string identity;
  int identity_index = 0;
};

IdentityTexture identity_texture(const SynthConfig& cfg, int identity);
SynthImage render_synthetic(const SynthConfig& cfg, int identity, int image);
std::vector<SynthImage> generate_synthetic(const SynthConfig& cfg);
std::string identity_name(int identity);

/// Writes images/, masks/, manifest.tsv and synth_config.txt under `dir`.
Manifest write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir);

std::string format_synth_config(const SynthConfig& cfg);

}  // namespace ahf::data
