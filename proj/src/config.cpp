#include "ahf/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "ahf/errors.hpp"

namespace ahf {

namespace {

template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("lr", c.lr);
  f("epochs", c.epochs);
  f("momentum", c.momentum);
  f("weight_decay", c.weight_decay);
  f("warmup_epochs", c.warmup_epochs);
  f("batch_p", c.batch_p);
  f("batch_k", c.batch_k);
  f("mu", c.mu);
  f("lambda", c.lambda);
  f("margin", c.margin);
  f("label_smoothing", c.label_smoothing);
  f("classifier_init_std", c.classifier_init_std);
  f("bn_neck", c.bn_neck);
  f("equilibrium_reduction", c.equilibrium_reduction);
  f("head_aggregation", c.head_aggregation);
  f("dual_stream", c.dual_stream);
  f("fma_mix", c.fma_mix);
  f("use_selection", c.use_selection);
  f("shared_weights", c.shared_weights);
  f("cutoff_fraction", c.cutoff_fraction);
  f("image_size", c.image_size);
  f("patch_size", c.patch_size);
  f("channels", c.channels);
  f("embed_dim", c.embed_dim);
  f("depth", c.depth);
  f("heads", c.heads);
  f("mlp_ratio", c.mlp_ratio);
  f("rotation_deg", c.rotation_deg);
  f("brightness", c.brightness);
  f("contrast", c.contrast);
  f("brightness_prob", c.brightness_prob);
  f("contrast_prob", c.contrast_prob);
  f("pad", c.pad);
  f("horizontal_flip", c.horizontal_flip);
  f("seed", c.seed);
  f("eval_every", c.eval_every);
  f("checkpoint_every", c.checkpoint_every);
  f("eval_train", c.eval_train);
  f("stop_at_train_rank1", c.stop_at_train_rank1);
  f("metric", c.metric);
  f("init_from", c.init_from);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
  }
}

template <typename T>
void parse_value(const std::string& key, const std::string& text, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") out = true;
    else if (text == "false" || text == "0") out = false;
    else throw config_error("config: '" + key + "' expects true/false, got '" + text + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = text;
  } else {
    T v{};
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size())
      throw config_error("config: cannot parse '" + text + "' for '" + key + "'");
    out = v;
  }
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(*this, [&](const char* name, auto& field) {
    if (key == name) {
      parse_value(key, value, field);
      found = true;
    }
  });
  if (!found) throw config_error("config: unknown key '" + key + "'");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  visit_fields(*this, [&](const char* name, const auto& field) { os << name << " = " << format_value(field) << '\n'; });
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return from_text(os.str());
}

void TrainConfig::save(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw io_error("cannot write config '" + path + "'");
  out << to_text();
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw config_error("config: lr must be positive");
  if (epochs < 1) throw config_error("config: epochs must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw config_error("config: momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw config_error("config: weight_decay must be >= 0");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw config_error("config: warmup_epochs must lie in [0, epochs)");
  if (!(mu > 0.0 && mu <= 1.0)) throw config_error("config: mu must lie in (0, 1]");
  if (lambda < 0.0) throw config_error("config: lambda must be >= 0");
  if (margin < 0.0) throw config_error("config: margin must be >= 0");
  if (!(classifier_init_std > 0.0)) throw config_error("config: classifier_init_std must be positive");
  if (!(cutoff_fraction > 0.0 && cutoff_fraction < 1.0)) throw config_error("config: cutoff_fraction in (0, 1)");
  if (equilibrium_reduction != "mean_dim" && equilibrium_reduction != "sum_dim")
    throw config_error("config: equilibrium_reduction must be mean_dim or sum_dim");
  if (head_aggregation != "per_head" && head_aggregation != "average_first")
    throw config_error("config: head_aggregation must be per_head or average_first");
  if (metric != "normalized_euclidean" && metric != "euclidean")
    throw config_error("config: metric must be normalized_euclidean or euclidean");
  if (eval_every < 0 || checkpoint_every < 0) throw config_error("config: cadences must be >= 0");
  batch_spec().validate();
  patch_config().validate();
}

backbone::PatchConfig TrainConfig::patch_config() const {
  backbone::PatchConfig p;
  p.image_height = image_size;
  p.image_width = image_size;
  p.patch_size = patch_size;
  p.channels = channels;
  p.embed_dim = embed_dim;
  p.depth = depth;
  p.heads = heads;
  p.mlp_ratio = mlp_ratio;
  return p;
}

data::AugmentConfig TrainConfig::augment_config() const {
  data::AugmentConfig a;
  a.height = image_size;
  a.width = image_size;
  a.channels = channels;
  a.max_rotation_deg = rotation_deg;
  a.brightness = brightness;
  a.contrast = contrast;
  a.brightness_prob = brightness_prob;
  a.contrast_prob = contrast_prob;
  a.pad = pad;
  a.horizontal_flip = horizontal_flip;
  a.fma.cutoff_fraction = cutoff_fraction;
  a.fma.mix = fma_mix;
  return a;
}

data::BatchSpec TrainConfig::batch_spec() const { return {batch_p, batch_k}; }

objectives::LossOptions TrainConfig::loss_options() const {
  objectives::LossOptions o;
  o.lambda = lambda;
  o.margin = margin;
  o.label_smoothing = label_smoothing;
  o.reduction = equilibrium_reduction == "sum_dim" ? objectives::EquilibriumReduction::SumOverDim
                                                   : objectives::EquilibriumReduction::MeanOverDim;
  return o;
}

selection::DualForwardOptions TrainConfig::forward_options() const {
  selection::DualForwardOptions o;
  o.mu = mu;
  o.select = use_selection;
  o.aggregation = head_aggregation == "average_first" ? selection::HeadAggregation::AverageThenRenormalize
                                                      : selection::HeadAggregation::RenormalizePerHead;
  return o;
}

eval::Metric TrainConfig::eval_metric() const {
  return metric == "euclidean" ? eval::Metric::Euclidean : eval::Metric::NormalizedEuclidean;
}

}  // namespace ahf
