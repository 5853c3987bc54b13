#include "ahf/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ahf/errors.hpp"
#include "ahf/visualize.hpp"

namespace ahf {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double median_of(const std::vector<RunScore>& runs, F&& field) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(field(r.report));
  return median(std::move(v));
}

RunScore run_once(TrainConfig cfg, std::uint64_t seed, const data::ImageSet& train_set,
                  const data::ImageSet& test_set) {
  cfg.seed = seed;
  cfg.eval_every = 0;
  TrainResult r = train(cfg, train_set, &test_set);
  return {seed, r.record.final_report, r.record.counters};
}

}  // namespace

const char* stage_name(AblationStage s) {
  switch (s) {
    case AblationStage::Baseline: return "baseline";
    case AblationStage::PureHf: return "pure_hf";
    case AblationStage::Fma: return "+FMA";
    case AblationStage::Ods: return "+ODS";
    case AblationStage::Full: return "+L_F";
  }
  return "?";
}

AblationStage parse_stage(const std::string& name) {
  for (AblationStage s : all_stages())
    if (name == stage_name(s)) return s;
  if (name == "fma") return AblationStage::Fma;
  if (name == "ods") return AblationStage::Ods;
  if (name == "full" || name == "lf") return AblationStage::Full;
  throw input_error("unknown ablation stage '" + name + "'");
}

const std::vector<AblationStage>& all_stages() {
  static const std::vector<AblationStage> s{AblationStage::Baseline, AblationStage::PureHf, AblationStage::Fma,
                                            AblationStage::Ods, AblationStage::Full};
  return s;
}

TrainConfig apply_stage(TrainConfig base, AblationStage stage) {
  const double full_lambda = base.lambda;
  base.dual_stream = stage != AblationStage::Baseline;
  base.fma_mix = stage >= AblationStage::Fma;
  base.use_selection = stage >= AblationStage::Ods;
  base.lambda = stage == AblationStage::Full ? full_lambda : 0.0;
  return base;
}

double TableRow::median_map() const { return median_of(runs, [](const eval::EvalReport& r) { return r.mAP; }); }
double TableRow::median_minp() const { return median_of(runs, [](const eval::EvalReport& r) { return r.mINP; }); }
double TableRow::median_rank1() const { return median_of(runs, [](const eval::EvalReport& r) { return r.rank1; }); }

std::string ExperimentTable::to_tsv() const {
  std::ostringstream os;
  os << "# " << title << '\n' << "setting\tmedian_mAP\tmedian_rank1\tmedian_mINP";
  const std::size_t seeds = rows.empty() ? 0 : rows.front().runs.size();
  for (std::size_t i = 0; i < seeds; ++i) os << "\tmAP_seed" << rows.front().runs[i].seed;
  os << '\n';
  for (const auto& row : rows) {
    os << row.label << '\t' << row.median_map() << '\t' << row.median_rank1() << '\t' << row.median_minp();
    for (const auto& r : row.runs) os << '\t' << r.report.mAP;
    os << '\n';
  }
  return os.str();
}

ExperimentTable ablate(const TrainConfig& base, std::span<const AblationStage> stages,
                       std::span<const std::uint64_t> seeds, const data::ImageSet& train_set,
                       const data::ImageSet& test_set, const RunLogger& log) {
  ExperimentTable table;
  table.title = "ablation (test mAP)";
  for (AblationStage stage : stages) {
    TableRow row;
    row.label = stage_name(stage);
    const TrainConfig cfg = apply_stage(base, stage);
    for (std::uint64_t seed : seeds) {
      row.runs.push_back(run_once(cfg, seed, train_set, test_set));
      if (log) log(row.label + " seed " + std::to_string(seed) + " mAP " + std::to_string(row.runs.back().report.mAP));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "mu") return SweepParam::Mu;
  if (name == "lambda") return SweepParam::Lambda;
  throw input_error("sweep: parameter must be mu or lambda, got '" + name + "'");
}

ExperimentTable sweep(const TrainConfig& base, SweepParam param, std::span<const double> values,
                      std::span<const std::uint64_t> seeds, const data::ImageSet& train_set,
                      const data::ImageSet& test_set, const RunLogger& log) {
  ExperimentTable table;
  const std::string name = param == SweepParam::Mu ? "mu" : "lambda";
  table.title = "sweep over " + name + " (test mAP)";
  for (double v : values) {
    TrainConfig cfg = base;
    (param == SweepParam::Mu ? cfg.mu : cfg.lambda) = v;
    TableRow row;
    std::ostringstream label;
    label << name << "=" << v;
    row.label = label.str();
    row.value = v;
    for (std::uint64_t seed : seeds) {
      row.runs.push_back(run_once(cfg, seed, train_set, test_set));
      if (log) log(row.label + " seed " + std::to_string(seed) + " mAP " + std::to_string(row.runs.back().report.mAP));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_table(const ExperimentTable& table, const std::filesystem::path& dir, const std::string& x_label) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "table.tsv") << table.to_tsv();
  std::vector<double> xs, ys;
  std::vector<std::string> ticks;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    xs.push_back(x_label.empty() ? static_cast<double>(i) : table.rows[i].value);
    ys.push_back(table.rows[i].median_map());
    ticks.push_back(table.rows[i].label);
  }
  plot_series(dir / "plot.png", xs, ys, ticks, x_label.empty() ? "setting" : x_label, "median mAP", table.title);
}

}  // namespace ahf
