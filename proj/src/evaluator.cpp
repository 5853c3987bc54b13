#include "ahf/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "ahf/errors.hpp"

namespace ahf::eval {

Matrix distance_matrix(const FeatureGallery& gallery, Metric metric) {
  const Eigen::Index n = gallery.features.rows();
  Matrix f = gallery.features;
  if (!f.allFinite()) throw input_error("gallery: non-finite features");
  if (metric == Metric::NormalizedEuclidean) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = f.row(i).norm();
      if (norm > 0.0) f.row(i) /= norm;
    }
  }
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (f.row(i) - f.row(j)).norm();
  return d;
}

std::vector<QueryRanking> rank_all(const FeatureGallery& gallery, Metric metric) {
  const auto n = static_cast<int>(gallery.features.rows());
  if (n < 2) throw input_error("rank_all: gallery needs at least 2 images");
  if (gallery.labels.size() != static_cast<std::size_t>(n)) throw structural_error("rank_all: label count mismatch");
  const Matrix d = distance_matrix(gallery, metric);
  std::vector<QueryRanking> out(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q) {
    QueryRanking& r = out[static_cast<std::size_t>(q)];
    r.query = q;
    r.order.reserve(static_cast<std::size_t>(n - 1));
    for (int g = 0; g < n; ++g)
      if (g != q) r.order.push_back(g);
    std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) { return d(q, a) < d(q, b); });
    r.matches.reserve(r.order.size());
    for (int g : r.order)
      r.matches.push_back(gallery.labels[static_cast<std::size_t>(g)] == gallery.labels[static_cast<std::size_t>(q)]);
  }
  return out;
}

int num_matches(std::span<const std::uint8_t> matches) {
  return static_cast<int>(std::count_if(matches.begin(), matches.end(), [](std::uint8_t m) { return m != 0; }));
}

double average_precision(std::span<const std::uint8_t> matches) {
  int hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    if (!matches[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return hits == 0 ? 0.0 : sum / hits;
}

double inverse_negative_penalty(std::span<const std::uint8_t> matches) {
  int hits = 0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    if (matches[k]) {
      ++hits;
      last = k + 1;
    }
  }
  return hits == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(last);
}

double cmc(std::span<const MatchVector> matches, int k) {
  if (matches.empty()) return 0.0;
  if (k < 1) throw parameter_error("cmc: k must be >= 1");
  int hits = 0;
  for (const auto& m : matches) {
    const auto limit = std::min<std::size_t>(static_cast<std::size_t>(k), m.size());
    if (std::any_of(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(limit), [](std::uint8_t v) { return v != 0; }))
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(matches.size());
}

double minp(std::span<const MatchVector> matches) {
  double sum = 0.0;
  int counted = 0;
  for (const auto& m : matches) {
    if (num_matches(m) == 0) continue;
    sum += inverse_negative_penalty(m);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / counted;
}

bool EvalReport::operator==(const EvalReport& o) const {
  auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) return false;
    return true;
  };
  return mAP == o.mAP && rank1 == o.rank1 && rank5 == o.rank5 && rank10 == o.rank10 && mINP == o.mINP &&
         num_queries == o.num_queries && num_skipped == o.num_skipped && same(per_query_ap, o.per_query_ap) &&
         same(per_query_inp, o.per_query_inp);
}

EvalReport evaluate(const FeatureGallery& gallery, Metric metric) {
  const auto rankings = rank_all(gallery, metric);
  EvalReport rep;
  rep.num_queries = static_cast<int>(rankings.size());
  std::vector<MatchVector> valid;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double ap_sum = 0.0;
  for (const auto& r : rankings) {
    if (num_matches(r.matches) == 0) {
      ++rep.num_skipped;
      rep.per_query_ap.push_back(nan);
      rep.per_query_inp.push_back(nan);
      continue;
    }
    const double ap = average_precision(r.matches);
    ap_sum += ap;
    rep.per_query_ap.push_back(ap);
    rep.per_query_inp.push_back(inverse_negative_penalty(r.matches));
    valid.push_back(r.matches);
  }
  if (valid.empty()) return rep;
  rep.mAP = ap_sum / static_cast<double>(valid.size());
  rep.rank1 = cmc(valid, 1);
  rep.rank5 = cmc(valid, 5);
  rep.rank10 = cmc(valid, 10);
  rep.mINP = minp(valid);
  return rep;
}

std::string report_to_json(const EvalReport& report, int indent) {
  auto arr = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
    return a;
  };
  nlohmann::json j;
  j["mAP"] = report.mAP;
  j["rank1"] = report.rank1;
  j["rank5"] = report.rank5;
  j["rank10"] = report.rank10;
  j["mINP"] = report.mINP;
  j["num_queries"] = report.num_queries;
  j["num_skipped"] = report.num_skipped;
  j["per_query_ap"] = arr(report.per_query_ap);
  j["per_query_inp"] = arr(report.per_query_inp);
  return j.dump(indent);
}

}  // namespace ahf::eval
