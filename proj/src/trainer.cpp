#include "ahf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "ahf/augment.hpp"
#include "ahf/checkpoint.hpp"
#include "ahf/errors.hpp"
#include "ahf/sampler.hpp"

namespace ahf {

double cosine_lr(double base, int epoch, int total_epochs) {
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  if (epoch < cfg.warmup_epochs) return cfg.lr * (epoch + 1) / cfg.warmup_epochs;
  return cosine_lr(cfg.lr, epoch, cfg.epochs);
}

void Sgd::step(std::span<backbone::Param* const> params, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto* p : params) velocity_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  if (velocity_.size() != params.size()) throw protocol_error("Sgd: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    backbone::Param& p = *params[i];
    velocity_[i] = momentum_ * velocity_[i] + p.grad + weight_decay_ * p.value;
    p.value -= lr * velocity_[i];
  }
}

StepInputs prepare_batch(const TrainConfig& cfg, const data::ImageSet& images, std::span<const data::BatchSlot> slots,
                         PipelineCounters* counters) {
  const data::AugmentConfig aug = cfg.augment_config();
  StepInputs in;
  in.original.reserve(slots.size());
  for (const auto& slot : slots) {
    Rng rng(slot.seed);
    data::AugmentedPair pair = data::augment_pair(images.images[slot.image], aug, data::Mode::Train, rng, cfg.dual_stream);
    in.original.push_back(std::move(pair.original));
    if (pair.high_freq) {
      in.high_freq.push_back(std::move(*pair.high_freq));
      if (counters) ++counters->fma_calls;
    }
    in.labels.push_back(slot.label);
  }
  return in;
}

objectives::TotalLossResult forward_backward(ReidModel& model, const TrainConfig& cfg, const StepInputs& inputs,
                                             PipelineCounters* counters) {
  model.zero_grad();
  const auto fwd = selection::dual_forward(model.encoder(), model.hf_encoder(), inputs.original, inputs.high_freq,
                                           cfg.forward_options());
  if (counters && fwd.dual()) {
    ++counters->hf_passes;
    if (cfg.use_selection) ++counters->selection_calls;
  }
  auto loss = objectives::total_loss(fwd.c_o, fwd.c_h, fwd.f_o, fwd.f_h, inputs.labels, cfg.loss_options(),
                                     model.classifier());
  if (!std::isfinite(loss.breakdown.total)) return loss;
  selection::DualGradients grads{loss.d_c_o, loss.d_c_h, loss.d_f_o, loss.d_f_h};
  selection::dual_backward(model.encoder(), model.hf_encoder(), fwd, grads);
  return loss;
}

double forward_loss(ReidModel& model, const TrainConfig& cfg, const StepInputs& inputs) {
  auto opts = cfg.forward_options();
  opts.keep_trace = false;
  const auto fwd = selection::dual_forward(model.encoder(), model.hf_encoder(), inputs.original, inputs.high_freq, opts);
  objectives::Classifier scratch = model.classifier();  // keeps the model's gradients untouched
  return objectives::total_loss(fwd.c_o, fwd.c_h, fwd.f_o, fwd.f_h, inputs.labels, cfg.loss_options(), scratch)
      .breakdown.total;
}

eval::FeatureGallery extract_features(const ReidModel& model, const data::ImageSet& images, const TrainConfig& cfg) {
  const data::AugmentConfig aug = cfg.augment_config();
  eval::FeatureGallery g;
  g.features.resize(static_cast<Eigen::Index>(images.size()), cfg.embed_dim);
  g.labels = images.labels;
  g.ids = images.names;
  Rng unused(0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto pair = data::augment_pair(images.images[i], aug, data::Mode::Eval, unused);
    const auto tokens = model.encoder().patchify(pair.original);
    g.features.row(static_cast<Eigen::Index>(i)) = model.encoder().encode(tokens).class_feature;
  }
  return g;
}

eval::EvalReport evaluate_model(const ReidModel& model, const data::ImageSet& images, const TrainConfig& cfg) {
  return eval::evaluate(extract_features(model, images, cfg), cfg.eval_metric());
}

namespace {

nlohmann::json breakdown_json(const objectives::LossBreakdown& b) {
  return {{"id_o", b.id_o}, {"tri_o", b.tri_o}, {"id_h", b.id_h},         {"tri_h", b.tri_h},
          {"L_F", b.equilibrium}, {"total", b.total}, {"lambda", b.lambda}};
}

nlohmann::json report_json(const eval::EvalReport& r) { return nlohmann::json::parse(eval::report_to_json(r, -1)); }

void accumulate(objectives::LossBreakdown& acc, const objectives::LossBreakdown& b) {
  acc.id_o += b.id_o;
  acc.tri_o += b.tri_o;
  acc.id_h += b.id_h;
  acc.tri_h += b.tri_h;
  acc.equilibrium += b.equilibrium;
  acc.total += b.total;
  acc.lambda = b.lambda;
}

std::string describe(const objectives::LossBreakdown& b) {
  std::ostringstream os;
  os << "id_o=" << b.id_o << " tri_o=" << b.tri_o << " id_h=" << b.id_h << " tri_h=" << b.tri_h
     << " L_F=" << b.equilibrium << " total=" << b.total;
  return os.str();
}

}  // namespace

std::string RunRecord::to_json(bool include_timing) const {
  nlohmann::json j;
  j["config"] = config_text;
  auto& ep = j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs)
    ep.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"steps", e.steps}, {"mean_loss", breakdown_json(e.mean_loss)}});
  j["lr_trace"] = lr_trace;
  auto& ev = j["evals"] = nlohmann::json::array();
  for (const auto& s : evals) ev.push_back({{"epoch", s.epoch}, {"split", s.split}, {"report", report_json(s.report)}});
  j["final_report"] = has_final ? report_json(final_report) : nlohmann::json(nullptr);
  j["train_rank1_epoch"] = train_rank1_epoch;
  j["counters"] = {{"steps", counters.steps},
                   {"fma_calls", counters.fma_calls},
                   {"selection_calls", counters.selection_calls},
                   {"hf_passes", counters.hf_passes}};
  if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2);
}

TrainResult train(const TrainConfig& cfg, const data::ImageSet& train_set, const data::ImageSet* test_set,
                  const TrainHooks& hooks) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.model = std::make_unique<ReidModel>(cfg, static_cast<int>(train_set.identities.size()));
  ReidModel& model = *result.model;
  if (!cfg.init_from.empty()) load_weights_into(cfg.init_from, model);

  RunRecord& rec = result.record;
  rec.config_text = cfg.to_text();
  const data::PkSampler sampler(train_set.labels, cfg.batch_spec());
  Sgd opt(cfg.momentum, cfg.weight_decay);
  const auto params = model.parameters();

  if (hooks.step_log) *hooks.step_log << "step\tepoch\tid_o\ttri_o\tid_h\ttri_h\tL_F\ttotal\tlr\n";
  long step = 0;
  objectives::LossBreakdown last;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    rec.lr_trace.push_back(lr);
    EpochRecord er;
    er.epoch = epoch;
    er.lr = lr;
    for (const auto& batch : sampler.epoch(cfg.seed, epoch)) {
      const StepInputs inputs = prepare_batch(cfg, train_set, batch, &rec.counters);
      objectives::TotalLossResult loss;
      try {
        loss = forward_backward(model, cfg, inputs, &rec.counters);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        throw numeric_error("training diverged at step " + std::to_string(step) + " (" + e.what() +
                            "); last breakdown: " + describe(last));
      }
      if (!std::isfinite(loss.breakdown.total))
        throw numeric_error("training diverged at step " + std::to_string(step) + ": " + describe(loss.breakdown));
      last = loss.breakdown;
      opt.step(params, lr);
      ++rec.counters.steps;
      accumulate(er.mean_loss, loss.breakdown);
      ++er.steps;
      if (hooks.step_log) {
        const auto& b = loss.breakdown;
        *hooks.step_log << step << '\t' << epoch << '\t' << b.id_o << '\t' << b.tri_o << '\t' << b.id_h << '\t'
                        << b.tri_h << '\t' << b.equilibrium << '\t' << b.total << '\t' << lr << '\n';
      }
      ++step;
    }
    if (er.steps > 0) {
      auto& m = er.mean_loss;
      const double s = er.steps;
      m.id_o /= s, m.tri_o /= s, m.id_h /= s, m.tri_h /= s, m.equilibrium /= s, m.total /= s;
    }
    rec.epochs.push_back(er);

    const bool final_epoch = epoch + 1 == cfg.epochs;
    bool stop = false;
    if (cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || final_epoch)) {
      if (cfg.eval_train) {
        const auto rep = evaluate_model(model, train_set, cfg);
        rec.evals.push_back({epoch + 1, "train", rep});
        if (rep.rank1 == 1.0 && rec.train_rank1_epoch < 0) rec.train_rank1_epoch = epoch + 1;
        stop = cfg.stop_at_train_rank1 && rep.rank1 == 1.0;
      }
      if (test_set) rec.evals.push_back({epoch + 1, "test", evaluate_model(model, *test_set, cfg)});
      if (hooks.log) {
        std::ostringstream os;
        os << "epoch " << epoch + 1 << " lr " << lr << " loss " << er.mean_loss.total;
        for (auto it = rec.evals.rbegin(); it != rec.evals.rend() && it->epoch == epoch + 1; ++it)
          os << " | " << it->split << " mAP " << it->report.mAP << " R1 " << it->report.rank1;
        hooks.log(os.str());
      }
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(epoch + 1, model);
    if (stop) break;
  }
  if (test_set) {
    rec.final_report = evaluate_model(model, *test_set, cfg);
    rec.has_final = true;
  }
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace ahf
