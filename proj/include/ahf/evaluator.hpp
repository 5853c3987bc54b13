#pragma once

// Query-vs-rest retrieval evaluation: every gallery image queries all the
// others; every same-identity image is a true match.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ahf/tensor.hpp"

namespace ahf::eval {

struct FeatureGallery {
  Matrix features;  // Nt x D
  std::vector<int> labels;
  std::vector<std::string> ids;  // optional image identifiers
};

enum class Metric {
  NormalizedEuclidean,  // Euclidean on L2-normalized rows
  Euclidean,
};

using MatchVector = std::vector<std::uint8_t>;

struct QueryRanking {
  int query = 0;
  std::vector<int> order;  // gallery indices by ascending distance, query excluded
  MatchVector matches;
};

Matrix distance_matrix(const FeatureGallery& gallery, Metric metric = Metric::NormalizedEuclidean);
std::vector<QueryRanking> rank_all(const FeatureGallery& gallery, Metric metric = Metric::NormalizedEuclidean);

/// Number of true matches in a ranked list.
int num_matches(std::span<const std::uint8_t> matches);
/// (1/R) sum_k precision@k * match_k; 0 when R == 0.
double average_precision(std::span<const std::uint8_t> matches);
/// R / (rank of the last true match); 0 when R == 0.
double inverse_negative_penalty(std::span<const std::uint8_t> matches);
/// Fraction of the given queries whose first match is at rank <= k.
double cmc(std::span<const MatchVector> matches, int k);
/// Mean INP over queries with at least one match.
double minp(std::span<const MatchVector> matches);

struct EvalReport {
  double mAP = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double mINP = 0.0;
  int num_queries = 0;
  int num_skipped = 0;
  std::vector<double> per_query_ap;   // NaN for skipped queries
  std::vector<double> per_query_inp;  // NaN for skipped queries

  bool operator==(const EvalReport&) const;
};

/// Metrics averaged over queries with at least one true match.
EvalReport evaluate(const FeatureGallery& gallery, Metric metric = Metric::NormalizedEuclidean);

std::string report_to_json(const EvalReport& report, int indent = 2);

}  // namespace ahf::eval
