#pragma once

// Training objectives: identity cross-entropy, batch-hard triplet, the
// smooth-L1 feature equilibrium term, and their weighted total. Each loss
// returns its value together with the gradient w.r.t. its feature inputs.

#include <cstdint>
#include <span>
#include <vector>

#include "ahf/backbone.hpp"

namespace ahf::objectives {

using backbone::Param;

/// Linear identity head shared by both streams. With the BN-neck enabled the
/// features are batch-normalized (batch statistics, learned affine) before
/// the linear layer; only the identity loss sees the normalized features.
class Classifier {
 public:
  Classifier(int dim, int num_classes, std::uint64_t seed, double init_std = 0.001, bool bn_neck = false);

  int dim() const { return static_cast<int>(weight_.value.rows()); }
  int num_classes() const { return static_cast<int>(weight_.value.cols()); }
  bool bn_neck() const { return bn_neck_; }
  Matrix logits(const Matrix& features) const;

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  void zero_grad();

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  Param& bn_weight() { return bn_weight_; }
  Param& bn_bias() { return bn_bias_; }

 private:
  Param weight_;     // dim x classes
  Param bias_;       // 1 x classes
  Param bn_weight_;  // 1 x dim, BN-neck only
  Param bn_bias_;    // 1 x dim, BN-neck only
  bool bn_neck_ = false;
};

struct LossResult {
  double value = 0.0;
  Matrix grad;  // dLoss / dfeatures
};

/// Mean softmax cross-entropy over rows of `logits`; fills d_logits if given.
double cross_entropy(const Matrix& logits, std::span<const int> labels, double label_smoothing,
                     Matrix* d_logits = nullptr);

/// Cross-entropy of the classifier's logits. Accumulates classifier
/// gradients when `classifier_grad` is set.
LossResult id_loss(const Matrix& features, std::span<const int> labels, Classifier& classifier,
                   double label_smoothing = 0.0, bool classifier_grad = true);

/// Batch-hard triplet loss with Euclidean distance, averaged over anchors
/// that have both a positive and a negative in the batch.
LossResult triplet_loss(const Matrix& features, std::span<const int> labels, double margin);

/// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
double smooth_l1(double d);
double smooth_l1_grad(double d);

enum class EquilibriumReduction {
  MeanOverDim,  // sum over batch, mean over tokens, mean over features
  SumOverDim,   // sum over batch, mean over tokens, sum over features
};

struct EquilibriumResult {
  double value = 0.0;
  std::vector<Matrix> d_f_o;
  std::vector<Matrix> d_f_h;
};

EquilibriumResult equilibrium_loss(std::span<const Matrix> f_o, std::span<const Matrix> f_h,
                                   EquilibriumReduction reduction = EquilibriumReduction::MeanOverDim);

struct LossBreakdown {
  double id_o = 0.0;
  double tri_o = 0.0;
  double id_h = 0.0;
  double tri_h = 0.0;
  double equilibrium = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct LossOptions {
  double lambda = 0.1;
  double margin = 0.3;
  double label_smoothing = 0.0;
  EquilibriumReduction reduction = EquilibriumReduction::MeanOverDim;
};

struct TotalLossResult {
  LossBreakdown breakdown;
  Matrix d_c_o;
  Matrix d_c_h;
  std::vector<Matrix> d_f_o;
  std::vector<Matrix> d_f_h;
};

/// id(c_o) + tri(c_o) + id(c_h) + tri(c_h) + lambda * equilibrium(f_o, f_h).
/// An empty c_h gives the single-stream objective id(c_o) + tri(c_o).
TotalLossResult total_loss(const Matrix& c_o, const Matrix& c_h, std::span<const Matrix> f_o,
                           std::span<const Matrix> f_h, std::span<const int> labels, const LossOptions& opts,
                           Classifier& classifier);

}  // namespace ahf::objectives
