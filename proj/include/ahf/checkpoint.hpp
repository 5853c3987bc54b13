#pragma once

// Checkpoint container (all integers little-endian):
//
//   char[8]  magic "AHFCKPT1"
//   u32      format version (1)
//   u64      config length L, then L bytes of TrainConfig text
//   u32      number of classes
//   u32      array count N, then N times:
//              u32 name length, name bytes (UTF-8)
//              u32 rows, u32 cols
//              rows*cols IEEE-754 f64, row-major
//
// Arrays are written in ReidModel::parameters() order; readers match by name.

#include <filesystem>
#include <memory>
#include <string>

#include "ahf/config.hpp"
#include "ahf/model.hpp"

namespace ahf {

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const ReidModel& model);

struct LoadedCheckpoint {
  TrainConfig config;
  std::unique_ptr<ReidModel> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies same-named, same-shaped arrays from a checkpoint into `model`;
/// returns how many were copied.
int load_weights_into(const std::filesystem::path& path, ReidModel& model);

}  // namespace ahf
