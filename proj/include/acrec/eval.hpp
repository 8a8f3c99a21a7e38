#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/model.hpp"

namespace acrec::eval {

enum class Protocol { all_items, top1of20, val101 };

std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view s);
/// Sampled negatives per query; 0 for all_items.
int negatives_for(Protocol p);

struct RankedResult {
  std::string query_id;
  std::vector<int> candidates;  // book rows, best first
  std::vector<double> scores;   // non-increasing
  int ground_truth_rank = 0;    // 1-based; 0 = unranked
};

/// rank <= 0 means unranked.
int hit_ratio_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);

/// Orders candidates by descending score. The ground truth is placed after
/// every candidate with an equal score; other ties follow ascending row
/// (= ascending book id). Throws DataError on non-finite scores or when the
/// ground truth is not among the candidates exactly once.
RankedResult rank_scored(std::span<const int> candidates, std::span<const double> scores,
                         int ground_truth);

/// Scores every book not consumed before the step.
RankedResult rank_all_items(const Scorer& scorer, const Query& query, int n_books);

/// `n_negatives` distinct books the user never read, uniform without
/// replacement. Throws DataError when the pool is too small.
std::vector<int> sample_unread(const Query& query, int n_books, int n_negatives, Rng& rng);

/// Seed of the negative pool for (user, protocol).
std::uint64_t pool_seed(std::uint64_t seed, const std::string& user, Protocol protocol);

RankedResult rank_k_candidates(const Scorer& scorer, const Query& query, int n_books,
                               int n_negatives, Rng& rng);

struct MetricsReport {
  std::string protocol;
  std::map<std::string, double> metrics;  // percentages
  std::size_t n_queries = 0;
  std::string config_digest;
  std::uint64_t seed = 0;

  double at(const std::string& name) const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Aggregates per-query ranks into HR@{1,5,10,50,100}, NDCG@{5,10,50,100}
/// and Top1.
MetricsReport summarize(std::span<const int> ranks);

MetricsReport run_protocol(const Scorer& scorer, const std::vector<Query>& queries,
                           Protocol protocol, int n_books, std::uint64_t seed,
                           const std::string& config_digest = "",
                           std::vector<RankedResult>* details = nullptr);

}  // namespace acrec::eval
