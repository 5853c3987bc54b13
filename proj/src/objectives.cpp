#include "ahf/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ahf/errors.hpp"
#include "ahf/random.hpp"

namespace ahf::objectives {

Classifier::Classifier(int dim, int num_classes, std::uint64_t seed, double init_std, bool bn_neck)
    : bn_neck_(bn_neck) {
  if (dim <= 0 || num_classes <= 0) throw parameter_error("Classifier: dim and num_classes must be positive");
  weight_ = Param{"classifier.weight", Matrix::Zero(dim, num_classes), Matrix::Zero(dim, num_classes)};
  bias_ = Param{"classifier.bias", Matrix::Zero(1, num_classes), Matrix::Zero(1, num_classes)};
  if (bn_neck_) {
    bn_weight_ = Param{"classifier.bn.weight", Matrix::Ones(1, dim), Matrix::Zero(1, dim)};
    bn_bias_ = Param{"classifier.bn.bias", Matrix::Zero(1, dim), Matrix::Zero(1, dim)};
  }
  Rng rng(seed);
  for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = truncated_normal(rng, init_std);
}

std::vector<Param*> Classifier::parameters() {
  if (bn_neck_) return {&bn_weight_, &bn_bias_, &weight_, &bias_};
  return {&weight_, &bias_};
}

std::vector<const Param*> Classifier::parameters() const {
  auto mut = const_cast<Classifier*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Matrix Classifier::logits(const Matrix& features) const {
  if (features.cols() != weight_.value.rows()) throw structural_error("Classifier: feature width mismatch");
  Matrix z = features * weight_.value;
  z.rowwise() += bias_.value.row(0);
  return z;
}

void Classifier::zero_grad() {
  for (Param* p : parameters()) p->grad.setZero();
}

double cross_entropy(const Matrix& logits, std::span<const int> labels, double label_smoothing, Matrix* d_logits) {
  const Eigen::Index b = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<std::size_t>(b) != labels.size()) throw structural_error("cross_entropy: label count mismatch");
  if (b == 0) throw input_error("cross_entropy: empty batch");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw parameter_error("cross_entropy: smoothing in [0, 1)");
  if (d_logits) d_logits->resize(b, k);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k) throw input_error("id_loss: label " + std::to_string(y) + " outside classifier range");
    const double mx = logits.row(r).maxCoeff();
    const RowVector shifted = logits.row(r).array() - mx;
    const double log_z = std::log(shifted.array().exp().sum());
    const RowVector log_p = shifted.array() - log_z;
    const double off = label_smoothing / static_cast<double>(k);
    double row_loss = -(1.0 - label_smoothing) * log_p(y);
    if (label_smoothing > 0.0) row_loss -= off * log_p.sum();
    loss += row_loss;
    if (d_logits) {
      RowVector g = log_p.array().exp();
      g.array() -= off;
      g(y) -= 1.0 - label_smoothing;
      d_logits->row(r) = g / static_cast<double>(b);
    }
  }
  return loss / static_cast<double>(b);
}

LossResult id_loss(const Matrix& features, std::span<const int> labels, Classifier& classifier,
                   double label_smoothing, bool classifier_grad) {
  if (!classifier.bn_neck()) {
    Matrix d_logits;
    LossResult r;
    r.value = cross_entropy(classifier.logits(features), labels, label_smoothing, &d_logits);
    r.grad = d_logits * classifier.weight().value.transpose();
    if (classifier_grad) {
      classifier.weight().grad.noalias() += features.transpose() * d_logits;
      classifier.bias().grad.row(0) += d_logits.colwise().sum();
    }
    return r;
  }

  constexpr double kEps = 1e-5;
  const auto b = static_cast<double>(features.rows());
  if (features.rows() < 2) throw protocol_error("id_loss: BN-neck needs at least two samples");
  if (features.cols() != classifier.dim()) throw structural_error("Classifier: feature width mismatch");
  const RowVector mean = features.colwise().mean();
  const Matrix centered = features.rowwise() - mean;
  const RowVector inv_std = ((centered.array().square().colwise().sum() / b) + kEps).rsqrt();
  const Matrix xhat = centered.array().rowwise() * inv_std.array();
  const RowVector& gamma = classifier.bn_weight().value.row(0);
  Matrix y = xhat.array().rowwise() * gamma.array();
  y.rowwise() += classifier.bn_bias().value.row(0);

  Matrix d_logits;
  LossResult r;
  r.value = cross_entropy(classifier.logits(y), labels, label_smoothing, &d_logits);
  const Matrix dy = d_logits * classifier.weight().value.transpose();
  const Matrix dxhat = dy.array().rowwise() * gamma.array();
  const RowVector sum_dxhat = dxhat.colwise().sum();
  const RowVector sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum();
  Matrix dx = (b * dxhat).rowwise() - sum_dxhat;
  dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  r.grad = (dx.array().rowwise() * (inv_std.array() / b)).matrix();
  if (classifier_grad) {
    classifier.weight().grad.noalias() += y.transpose() * d_logits;
    classifier.bias().grad.row(0) += d_logits.colwise().sum();
    classifier.bn_weight().grad.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
    classifier.bn_bias().grad.row(0) += dy.colwise().sum();
  }
  return r;
}

LossResult triplet_loss(const Matrix& features, std::span<const int> labels, double margin) {
  const Eigen::Index b = features.rows();
  if (static_cast<std::size_t>(b) != labels.size()) throw structural_error("triplet_loss: label count mismatch");
  const std::set<int> ids(labels.begin(), labels.end());
  bool has_pair = false;
  for (std::size_t i = 0; i < labels.size() && !has_pair; ++i)
    for (std::size_t j = i + 1; j < labels.size() && !has_pair; ++j) has_pair = labels[i] == labels[j];
  if (ids.size() < 2 || !has_pair)
    throw protocol_error("triplet_loss: batch needs >= 2 identities and >= 2 samples of some identity");

  Matrix dist(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) dist(i, j) = (features.row(i) - features.row(j)).norm();

  LossResult r;
  r.grad = Matrix::Zero(b, features.cols());
  int anchors = 0;
  for (Eigen::Index a = 0; a < b; ++a) {
    Eigen::Index pos = -1;
    Eigen::Index neg = -1;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
        if (pos < 0 || dist(a, j) > dist(a, pos)) pos = j;
      } else if (neg < 0 || dist(a, j) < dist(a, neg)) {
        neg = j;
      }
    }
    if (pos < 0 || neg < 0) continue;
    ++anchors;
    const double hinge = dist(a, pos) - dist(a, neg) + margin;
    if (hinge <= 0.0) continue;
    r.value += hinge;
    if (dist(a, pos) > 0.0) {
      const RowVector g = (features.row(a) - features.row(pos)) / dist(a, pos);
      r.grad.row(a) += g;
      r.grad.row(pos) -= g;
    }
    if (dist(a, neg) > 0.0) {
      const RowVector g = (features.row(a) - features.row(neg)) / dist(a, neg);
      r.grad.row(a) -= g;
      r.grad.row(neg) += g;
    }
  }
  if (anchors > 0) {
    r.value /= anchors;
    r.grad /= anchors;
  }
  return r;
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_grad(double d) {
  if (std::abs(d) < 1.0) return d;
  return d > 0.0 ? 1.0 : -1.0;
}

EquilibriumResult equilibrium_loss(std::span<const Matrix> f_o, std::span<const Matrix> f_h,
                                   EquilibriumReduction reduction) {
  if (f_o.size() != f_h.size()) throw structural_error("equilibrium_loss: batch size mismatch");
  EquilibriumResult r;
  r.d_f_o.reserve(f_o.size());
  r.d_f_h.reserve(f_h.size());
  for (std::size_t b = 0; b < f_o.size(); ++b) {
    const Matrix& o = f_o[b];
    const Matrix& h = f_h[b];
    if (o.rows() != h.rows() || o.cols() != h.cols())
      throw structural_error("equilibrium_loss: token grids differ in shape");
    const Eigen::Index z = o.rows();
    const Eigen::Index d = o.cols();
    Matrix grad = Matrix::Zero(z, d);
    if (z > 0 && d > 0) {
      const double scale = 1.0 / static_cast<double>(z) /
                           (reduction == EquilibriumReduction::MeanOverDim ? static_cast<double>(d) : 1.0);
      double sum = 0.0;
      for (Eigen::Index i = 0; i < z; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          const double diff = o(i, j) - h(i, j);
          sum += smooth_l1(diff);
          grad(i, j) = smooth_l1_grad(diff) * scale;
        }
      }
      r.value += sum * scale;
    }
    r.d_f_h.push_back(-grad);
    r.d_f_o.push_back(std::move(grad));
  }
  return r;
}

TotalLossResult total_loss(const Matrix& c_o, const Matrix& c_h, std::span<const Matrix> f_o,
                           std::span<const Matrix> f_h, std::span<const int> labels, const LossOptions& opts,
                           Classifier& classifier) {
  if (opts.lambda < 0.0) throw parameter_error("total_loss: lambda must be non-negative");
  TotalLossResult r;
  LossBreakdown& br = r.breakdown;
  br.lambda = opts.lambda;

  const LossResult id_o = id_loss(c_o, labels, classifier, opts.label_smoothing);
  const LossResult tri_o = triplet_loss(c_o, labels, opts.margin);
  br.id_o = id_o.value;
  br.tri_o = tri_o.value;
  r.d_c_o = id_o.grad + tri_o.grad;

  if (c_h.size() > 0) {
    if (c_h.rows() != c_o.rows() || c_h.cols() != c_o.cols()) throw structural_error("total_loss: c_h shape");
    const LossResult id_h = id_loss(c_h, labels, classifier, opts.label_smoothing);
    const LossResult tri_h = triplet_loss(c_h, labels, opts.margin);
    br.id_h = id_h.value;
    br.tri_h = tri_h.value;
    r.d_c_h = id_h.grad + tri_h.grad;

    EquilibriumResult eq = equilibrium_loss(f_o, f_h, opts.reduction);
    br.equilibrium = eq.value;
    r.d_f_o = std::move(eq.d_f_o);
    r.d_f_h = std::move(eq.d_f_h);
    for (auto& g : r.d_f_o) g *= opts.lambda;
    for (auto& g : r.d_f_h) g *= opts.lambda;
  }
  br.total = br.id_o + br.tri_o + br.id_h + br.tri_h + opts.lambda * br.equilibrium;
  return r;
}

}  // namespace ahf::objectives
