#pragma once

// Parameter sweeps and the component ablation ladder. Each (setting, seed)
// run trains from scratch on the same split and is scored by test mAP.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ahf/config.hpp"
#include "ahf/manifest.hpp"
#include "ahf/trainer.hpp"

namespace ahf {

enum class AblationStage { Baseline, PureHf, Fma, Ods, Full };

const char* stage_name(AblationStage s);
AblationStage parse_stage(const std::string& name);
const std::vector<AblationStage>& all_stages();

/// baseline: single stream. pure_hf: high-pass second stream, no mixing, all
/// tokens, lambda 0. +FMA: mixing. +ODS: top-Z selection. +L_F: lambda from
/// `base` (0.1 by default).
TrainConfig apply_stage(TrainConfig base, AblationStage stage);

struct RunScore {
  std::uint64_t seed = 0;
  eval::EvalReport report;
  PipelineCounters counters;
};

struct TableRow {
  std::string label;
  double value = 0.0;  // swept value; unused for ablation rows
  std::vector<RunScore> runs;

  double median_map() const;
  double median_minp() const;
  double median_rank1() const;
};

struct ExperimentTable {
  std::string title;
  std::vector<TableRow> rows;

  /// Tab-separated table: label, median mAP/Rank-1/mINP, per-seed mAP.
  std::string to_tsv() const;
};

using RunLogger = std::function<void(const std::string&)>;

ExperimentTable ablate(const TrainConfig& base, std::span<const AblationStage> stages,
                       std::span<const std::uint64_t> seeds, const data::ImageSet& train_set,
                       const data::ImageSet& test_set, const RunLogger& log = {});

enum class SweepParam { Mu, Lambda };
SweepParam parse_sweep_param(const std::string& name);

ExperimentTable sweep(const TrainConfig& base, SweepParam param, std::span<const double> values,
                      std::span<const std::uint64_t> seeds, const data::ImageSet& train_set,
                      const data::ImageSet& test_set, const RunLogger& log = {});

/// Writes table.tsv and a median-mAP line plot (plot.png) into `dir`.
void write_table(const ExperimentTable& table, const std::filesystem::path& dir, const std::string& x_label);

}  // namespace ahf
