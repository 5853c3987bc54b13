// Command-line front end: training, evaluation, experiments and diagnostics.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "CLI11.hpp"
#include "ahf/checkpoint.hpp"
#include "ahf/config.hpp"
#include "ahf/errors.hpp"
#include "ahf/experiments.hpp"
#include "ahf/image_io.hpp"
#include "ahf/manifest.hpp"
#include "ahf/random.hpp"
#include "ahf/spectral.hpp"
#include "ahf/synthetic.hpp"
#include "ahf/trainer.hpp"
#include "ahf/visualize.hpp"

namespace fs = std::filesystem;
using namespace ahf;

namespace {

constexpr const char* kOutputRootEnv = "AHF_OUTPUT_ROOT";

// Relative output paths are placed under $AHF_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) path = fs::path(root) / path;
  }
  return path;
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "Flat key = value config file");
    cmd->add_option("--set", overrides, "Override one field, key=value (repeatable)");
  }

  TrainConfig resolve() const {
    TrainConfig cfg = file.empty() ? TrainConfig{} : TrainConfig::load(file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

struct DataArgs {
  std::string manifest;
  std::string split;

  void attach(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "Dataset manifest (TSV)")->required();
    cmd->add_option("--split", split, "Split sidecar; computed from the config seed when omitted");
  }
};

struct LoadedData {
  data::Manifest manifest;
  data::SplitSpec split;
  data::ImageSet train;
  data::ImageSet test;
};

LoadedData load_data(const DataArgs& args, std::uint64_t seed, const fs::path& out_dir) {
  LoadedData d;
  d.manifest = data::load_manifest(args.manifest);
  d.split = args.split.empty() ? data::split_identities(d.manifest, seed) : data::read_split(args.split);
  data::validate_split(d.split, d.manifest);
  data::write_split(out_dir / "split.txt", d.split);
  d.train = data::load_images(d.manifest, d.split.train);
  d.test = data::load_images(d.manifest, d.split.test);
  return d;
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& seeds, std::uint64_t fallback) {
  return seeds.empty() ? std::vector<std::uint64_t>{fallback} : seeds;
}

int run_train(const ConfigArgs& ca, const DataArgs& da, const std::string& out, int dump_selection) {
  const TrainConfig cfg = ca.resolve();
  const fs::path dir = ensure_dir(output_path(out));
  cfg.save((dir / "config.txt").string());
  const LoadedData d = load_data(da, cfg.seed, dir);

  std::ofstream steps(dir / "steps.tsv");
  TrainHooks hooks;
  hooks.step_log = &steps;
  hooks.log = log_line;
  hooks.on_checkpoint = [&](int epoch, const ReidModel& model) {
    save_checkpoint(dir / ("checkpoint_epoch" + std::to_string(epoch) + ".ahf"), cfg, model);
  };
  const TrainResult result = train(cfg, d.train, &d.test, hooks);
  save_checkpoint(dir / "checkpoint.ahf", cfg, *result.model);
  write_text(dir / "run_record.json", result.record.to_json());
  if (result.record.has_final) write_text(dir / "report.json", eval::report_to_json(result.record.final_report));
  if (dump_selection > 0) {
    const fs::path sel_dir = ensure_dir(dir / "selection");
    const auto agg = cfg.forward_options().aggregation;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(dump_selection), d.train.size());
    for (std::size_t i = 0; i < count; ++i) {
      const AttentionMap map = attention_map(result.model->encoder(), d.train.images[i], cfg.augment_config(), cfg.mu, agg);
      write_attention_map(map, sel_dir, fs::path(d.train.names[i]).stem().string());
    }
  }
  std::printf("mAP %.4f  rank1 %.4f  mINP %.4f\n", result.record.final_report.mAP, result.record.final_report.rank1,
              result.record.final_report.mINP);
  return 0;
}

int run_eval(const std::string& checkpoint, const DataArgs& da, const std::string& out, const std::string& dist_dump) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const fs::path report_path = output_path(out);
  const fs::path dir = ensure_dir(report_path.has_parent_path() ? report_path.parent_path() : fs::path("."));
  ck.config.save((dir / "config.txt").string());
  const LoadedData d = load_data(da, ck.config.seed, dir);

  const eval::FeatureGallery gallery = extract_features(*ck.model, d.test, ck.config);
  const eval::EvalReport report = eval::evaluate(gallery, ck.config.eval_metric());
  write_text(report_path, eval::report_to_json(report));
  if (!dist_dump.empty()) {
    const Matrix dist = eval::distance_matrix(gallery, ck.config.eval_metric());
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < dist.rows(); ++i) {
      for (Eigen::Index j = 0; j < dist.cols(); ++j) os << (j ? "\t" : "") << dist(i, j);
      os << '\n';
    }
    write_text(output_path(dist_dump), os.str());
  }
  std::printf("mAP %.4f  rank1 %.4f  rank5 %.4f  rank10 %.4f  mINP %.4f  queries %d  skipped %d\n", report.mAP,
              report.rank1, report.rank5, report.rank10, report.mINP, report.num_queries, report.num_skipped);
  return 0;
}

int run_sweep(const ConfigArgs& ca, const DataArgs& da, const std::string& out, const std::string& param,
              const std::vector<double>& values, const std::vector<std::uint64_t>& seeds) {
  const TrainConfig cfg = ca.resolve();
  const fs::path dir = ensure_dir(output_path(out));
  cfg.save((dir / "config.txt").string());
  const LoadedData d = load_data(da, cfg.seed, dir);
  const SweepParam p = parse_sweep_param(param);
  const auto s = parse_seeds(seeds, cfg.seed);
  const ExperimentTable table = sweep(cfg, p, values, s, d.train, d.test, log_line);
  write_table(table, dir, param);
  std::cout << table.to_tsv();
  return 0;
}

int run_ablate(const ConfigArgs& ca, const DataArgs& da, const std::string& out,
               const std::vector<std::string>& stage_names, const std::vector<std::uint64_t>& seeds) {
  const TrainConfig cfg = ca.resolve();
  const fs::path dir = ensure_dir(output_path(out));
  cfg.save((dir / "config.txt").string());
  const LoadedData d = load_data(da, cfg.seed, dir);
  std::vector<AblationStage> stages;
  if (stage_names.empty()) stages = all_stages();
  for (const auto& n : stage_names) stages.push_back(parse_stage(n));
  const auto s = parse_seeds(seeds, cfg.seed);
  const ExperimentTable table = ablate(cfg, stages, s, d.train, d.test, log_line);
  write_table(table, dir, "stage");
  std::cout << table.to_tsv();
  return 0;
}

int run_attnmap(const std::string& checkpoint, const std::vector<std::string>& images, const std::string& out,
                double mu) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const fs::path dir = ensure_dir(output_path(out));
  ck.config.save((dir / "config.txt").string());
  const double m = mu > 0.0 ? mu : ck.config.mu;
  const auto agg = ck.config.forward_options().aggregation;
  for (const auto& img : images) {
    const AttentionMap map = attention_map(ck.model->encoder(), load_rgb(img), ck.config.augment_config(), m, agg);
    write_attention_map(map, dir, fs::path(img).stem().string());
  }
  return 0;
}

int run_augment_preview(const std::string& image, const std::string& alpha, double cutoff, std::uint64_t seed,
                        const std::string& out) {
  const fs::path dir = ensure_dir(output_path(out));
  spectral::FmaOptions opts;
  opts.cutoff_fraction = cutoff;
  if (alpha != "random") {
    try {
      opts.alpha = std::stod(alpha);
    } catch (const std::exception&) {
      throw input_error("--alpha expects a number or 'random', got '" + alpha + "'");
    }
  }
  write_text(dir / "config.txt", "image = " + image + "\nalpha = " + alpha + "\ncutoff_fraction = " +
                                     std::to_string(cutoff) + "\nseed = " + std::to_string(seed) + "\n");
  const spectral::GrayImage gray = to_gray(load_rgb(image));
  Rng rng(seed);
  spectral::FmaTrace trace;
  const spectral::GrayImage hf = spectral::fma_augment(gray, opts, rng, &trace);

  auto save_spec = [&](const spectral::Spectrum& s, const std::string& name) {
    save_image(dir / name, to_mat(spectral::rescale_to_unit(spectral::log_magnitude(s))));
  };
  save_image(dir / "gray.png", to_mat(gray.pixels()));
  save_spec(trace.original, "spectrum.png");
  save_spec(trace.filtered, "filtered_spectrum.png");
  save_spec(trace.mixed, "mixed_spectrum.png");
  save_image(dir / "mask.png", to_mat(trace.mask.grid));
  save_image(dir / "high_freq.png", to_mat(hf.pixels()));
  std::printf("alpha %.6f  side %d  anchor (%d, %d)\n", trace.mask.alpha, trace.mask.side, trace.mask.row,
              trace.mask.col);
  return 0;
}

int run_split(const std::string& manifest, std::uint64_t seed, double fraction, const std::string& out) {
  const data::Manifest m = data::load_manifest(manifest);
  const data::SplitSpec split = data::split_identities(m, seed, fraction);
  const fs::path path = output_path(out);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  data::write_split(path, split);
  std::printf("train %zu  test %zu\n", split.train.size(), split.test.size());
  return 0;
}

int run_synth(const data::SynthConfig& cfg, const std::string& out) {
  const fs::path dir = ensure_dir(output_path(out));
  const data::Manifest m = data::write_synthetic_dataset(cfg, dir);
  write_text(dir / "config.txt", data::format_synth_config(cfg));
  std::printf("%zu images, %zu identities -> %s\n", m.records.size(), m.identities().size(),
              (dir / "manifest.tsv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive high-frequency transformer for animal re-identification"};
  app.require_subcommand(1);

  ConfigArgs ca;
  DataArgs da;
  std::string out, checkpoint, dist_dump, param, alpha = "random";
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> stages, images;
  int dump_selection = 0;
  double mu = 0.0, cutoff = spectral::HighPassFilter::kDefaultCutoff, fraction = 0.7;
  std::uint64_t seed = 0;
  std::string image, background = "clutter";
  data::SynthConfig synth;

  auto* train_cmd = app.add_subcommand("train", "Train a model and evaluate it on the test split");
  ca.attach(train_cmd);
  da.attach(train_cmd);
  train_cmd->add_option("--out", out, "Output directory")->required();
  train_cmd->add_option("--dump-selection", dump_selection,
                        "Write attention and selected-patch overlays for the first N training images");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  da.attach(eval_cmd);
  eval_cmd->add_option("--out", out, "Report JSON path")->required();
  eval_cmd->add_option("--dump-distances", dist_dump, "Also write the query distance matrix (TSV)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a grid of mu or lambda");
  ca.attach(sweep_cmd);
  da.attach(sweep_cmd);
  sweep_cmd->add_option("--param", param, "mu | lambda")->required();
  sweep_cmd->add_option("--values", values)->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds)->delimiter(',');
  sweep_cmd->add_option("--out", out)->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the component ablation ladder");
  ca.attach(ablate_cmd);
  da.attach(ablate_cmd);
  ablate_cmd->add_option("--stages", stages, "baseline,pure_hf,+FMA,+ODS,+L_F (default: all)")->delimiter(',');
  ablate_cmd->add_option("--seeds", seeds)->delimiter(',');
  ablate_cmd->add_option("--out", out)->required();

  auto* attn_cmd = app.add_subcommand("attnmap", "Render final-layer class-token attention maps");
  attn_cmd->add_option("--checkpoint", checkpoint)->required();
  attn_cmd->add_option("--images", images)->required();
  attn_cmd->add_option("--mu", mu, "Selection ratio for the mask (default: from checkpoint)");
  attn_cmd->add_option("--out", out)->required();

  auto* prev_cmd = app.add_subcommand("augment-preview", "Dump the stages of the frequency augmentation");
  prev_cmd->add_option("--image", image)->required();
  prev_cmd->add_option("--alpha", alpha, "Mask ratio or 'random'");
  prev_cmd->add_option("--cutoff", cutoff, "High-pass cutoff as a fraction of min(H, W)");
  prev_cmd->add_option("--seed", seed);
  prev_cmd->add_option("--out", out)->required();

  auto* split_cmd = app.add_subcommand("split", "Identity-disjoint train/test split");
  split_cmd->add_option("--manifest", da.manifest)->required();
  split_cmd->add_option("--seed", seed);
  split_cmd->add_option("--train-fraction", fraction);
  split_cmd->add_option("--out", out)->required();

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic textured-identity dataset");
  synth_cmd->add_option("--ids", synth.identities);
  synth_cmd->add_option("--imgs-per-id", synth.images_per_identity);
  synth_cmd->add_option("--size", synth.size);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--background", background, "clutter | constant");
  synth_cmd->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return run_train(ca, da, out, dump_selection);
    if (*eval_cmd) return run_eval(checkpoint, da, out, dist_dump);
    if (*sweep_cmd) return run_sweep(ca, da, out, param, values, seeds);
    if (*ablate_cmd) return run_ablate(ca, da, out, stages, seeds);
    if (*attn_cmd) return run_attnmap(checkpoint, images, out, mu);
    if (*prev_cmd) return run_augment_preview(image, alpha, cutoff, seed, out);
    if (*split_cmd) return run_split(da.manifest, seed, fraction, out);
    if (*synth_cmd) {
      if (background == "clutter")
        synth.background = data::Background::Clutter;
      else if (background == "constant")
        synth.background = data::Background::Constant;
      else
        throw input_error("--background must be clutter or constant");
      return run_synth(synth, out);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
