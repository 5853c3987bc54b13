#pragma once

// Training loop: PK batches -> spatial + frequency augmentation -> dual
// forward with token selection -> total loss -> SGD with cosine decay.

#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ahf/config.hpp"
#include "ahf/evaluator.hpp"
#include "ahf/manifest.hpp"
#include "ahf/model.hpp"

namespace ahf {

/// base * 0.5 * (1 + cos(pi * epoch / total)).
double cosine_lr(double base, int epoch, int total_epochs);
/// Cosine decay with optional linear warmup over the first warmup_epochs.
double scheduled_lr(const TrainConfig& cfg, int epoch);

/// SGD with momentum and L2 weight decay (PyTorch semantics:
/// v = m v + (g + wd w); w -= lr v).
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(std::span<backbone::Param* const> params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix> velocity_;
};

struct PipelineCounters {
  long steps = 0;
  long fma_calls = 0;
  long selection_calls = 0;
  long hf_passes = 0;

  bool operator==(const PipelineCounters&) const = default;
};

struct StepInputs {
  std::vector<ImageTensor> original;
  std::vector<ImageTensor> high_freq;  // empty for single-stream training
  std::vector<int> labels;
};

/// Builds the step inputs for a sampled batch.
StepInputs prepare_batch(const TrainConfig& cfg, const data::ImageSet& images, std::span<const data::BatchSlot> slots,
                         PipelineCounters* counters = nullptr);

/// Zeroes gradients, runs forward + backward, leaves gradients in `model`.
objectives::TotalLossResult forward_backward(ReidModel& model, const TrainConfig& cfg, const StepInputs& inputs,
                                             PipelineCounters* counters = nullptr);
/// Loss value only; gradients are left untouched.
double forward_loss(ReidModel& model, const TrainConfig& cfg, const StepInputs& inputs);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  int steps = 0;
  objectives::LossBreakdown mean_loss;
};

struct EvalSnapshot {
  int epoch = 0;
  std::string split;  // "train" or "test"
  eval::EvalReport report;
};

struct RunRecord {
  std::string config_text;
  std::vector<EpochRecord> epochs;
  std::vector<double> lr_trace;
  std::vector<EvalSnapshot> evals;
  bool has_final = false;
  eval::EvalReport final_report;
  int train_rank1_epoch = -1;  // first evaluated epoch (1-based) with train Rank-1 == 1
  PipelineCounters counters;
  double wall_clock_seconds = 0.0;

  /// Timing is the only non-deterministic field; leave it out to compare runs.
  std::string to_json(bool include_timing = true) const;
};

struct TrainHooks {
  std::ostream* step_log = nullptr;  // TSV, one row per step
  std::function<void(int epoch, const ReidModel&)> on_checkpoint;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::unique_ptr<ReidModel> model;
  RunRecord record;
};

TrainResult train(const TrainConfig& cfg, const data::ImageSet& train_set, const data::ImageSet* test_set = nullptr,
                  const TrainHooks& hooks = {});

/// Class features of every image (evaluation mode: resize + normalize).
eval::FeatureGallery extract_features(const ReidModel& model, const data::ImageSet& images, const TrainConfig& cfg);
eval::EvalReport evaluate_model(const ReidModel& model, const data::ImageSet& images, const TrainConfig& cfg);

}  // namespace ahf
