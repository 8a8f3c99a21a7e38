#include "acrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace acrec::eval {

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::all_items: return "all_items";
    case Protocol::top1of20: return "top1of20";
    case Protocol::val101: return "val101";
  }
  return "?";
}

Protocol protocol_from_string(std::string_view s) {
  if (s == "all_items") return Protocol::all_items;
  if (s == "top1of20") return Protocol::top1of20;
  if (s == "val101") return Protocol::val101;
  throw ConfigError("unknown protocol: " + std::string(s));
}

int negatives_for(Protocol p) {
  switch (p) {
    case Protocol::all_items: return 0;
    case Protocol::top1of20: return 19;
    case Protocol::val101: return 100;
  }
  return 0;
}

int hit_ratio_at_k(int rank, int k) { return rank >= 1 && rank <= k ? 1 : 0; }

double ndcg_at_k(int rank, int k) {
  if (rank < 1 || rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

RankedResult rank_scored(std::span<const int> candidates, std::span<const double> scores,
                         int ground_truth) {
  if (candidates.size() != scores.size()) {
    throw ShapeError("ranking: " + std::to_string(candidates.size()) + " candidates but " +
                     std::to_string(scores.size()) + " scores");
  }
  std::size_t gt_pos = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("non-finite score for book row " + std::to_string(candidates[i]));
    if (candidates[i] == ground_truth) {
      if (gt_pos != candidates.size()) throw DataError("ground truth listed twice among candidates");
      gt_pos = i;
    }
  }
  if (gt_pos == candidates.size()) throw DataError("ground truth is not among the candidates");

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    const bool a_gt = candidates[a] == ground_truth, b_gt = candidates[b] == ground_truth;
    if (a_gt != b_gt) return b_gt;
    return candidates[a] < candidates[b];
  });
  RankedResult r;
  r.candidates.reserve(order.size());
  r.scores.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    r.candidates.push_back(candidates[order[i]]);
    r.scores.push_back(scores[order[i]]);
    if (order[i] == gt_pos) r.ground_truth_rank = static_cast<int>(i) + 1;
  }
  return r;
}

RankedResult rank_all_items(const Scorer& scorer, const Query& query, int n_books) {
  if (query.positive < 0 || query.positive >= n_books) throw DataError("ground truth missing from catalog");
  if (std::binary_search(query.consumed_before.begin(), query.consumed_before.end(), query.positive)) {
    throw DataError("ground truth was consumed before the step");
  }
  std::vector<int> cands;
  cands.reserve(static_cast<std::size_t>(n_books));
  for (int b = 0; b < n_books; ++b) {
    if (!std::binary_search(query.consumed_before.begin(), query.consumed_before.end(), b)) cands.push_back(b);
  }
  const auto s = scorer.score(query, cands);
  auto r = rank_scored(cands, s, query.positive);
  r.query_id = query.user + "#" + std::to_string(query.step_index);
  return r;
}

std::vector<int> sample_unread(const Query& query, int n_books, int n_negatives, Rng& rng) {
  std::vector<int> pool;
  pool.reserve(static_cast<std::size_t>(n_books));
  for (int b = 0; b < n_books; ++b) {
    if (!std::binary_search(query.consumed_all.begin(), query.consumed_all.end(), b) && b != query.positive) {
      pool.push_back(b);
    }
  }
  if (static_cast<int>(pool.size()) < n_negatives) {
    throw DataError("user " + query.user + " has " + std::to_string(pool.size()) +
                    " unread books, " + std::to_string(n_negatives) + " negatives requested");
  }
  // Partial Fisher-Yates.
  for (int i = 0; i < n_negatives; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.uniform_index(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(n_negatives));
  return pool;
}

std::uint64_t pool_seed(std::uint64_t seed, const std::string& user, Protocol protocol) {
  return mix_seed(seed ^ fnv1a64(user), fnv1a64(to_string(protocol)));
}

RankedResult rank_k_candidates(const Scorer& scorer, const Query& query, int n_books,
                               int n_negatives, Rng& rng) {
  if (query.positive < 0) throw DataError("query has no ground truth");
  auto cands = sample_unread(query, n_books, n_negatives, rng);
  cands.insert(cands.begin(), query.positive);
  const auto s = scorer.score(query, cands);
  auto r = rank_scored(cands, s, query.positive);
  r.query_id = query.user + "#" + std::to_string(query.step_index);
  return r;
}

double MetricsReport::at(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) throw NotFoundError("no metric " + name);
  return it->second;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"config_digest", config_digest},
          {"seed", seed},
          {"protocol", protocol},
          {"metrics", metrics},
          {"n_queries", n_queries}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.config_digest = j.value("config_digest", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.protocol = j.value("protocol", "");
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.n_queries = j.at("n_queries").get<std::size_t>();
  return r;
}

MetricsReport summarize(std::span<const int> ranks) {
  MetricsReport r;
  r.n_queries = ranks.size();
  const double n = ranks.empty() ? 1.0 : static_cast<double>(ranks.size());
  for (int k : {1, 5, 10, 50, 100}) {
    double hits = 0;
    for (int rank : ranks) hits += hit_ratio_at_k(rank, k);
    r.metrics["HR@" + std::to_string(k)] = 100.0 * hits / n;
  }
  for (int k : {5, 10, 50, 100}) {
    double gain = 0;
    for (int rank : ranks) gain += ndcg_at_k(rank, k);
    r.metrics["NDCG@" + std::to_string(k)] = 100.0 * gain / n;
  }
  r.metrics["Top1"] = r.metrics["HR@1"];
  return r;
}

MetricsReport run_protocol(const Scorer& scorer, const std::vector<Query>& queries,
                           Protocol protocol, int n_books, std::uint64_t seed,
                           const std::string& config_digest, std::vector<RankedResult>* details) {
  std::vector<int> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) {
    RankedResult r;
    if (protocol == Protocol::all_items) {
      r = rank_all_items(scorer, q, n_books);
    } else {
      Rng rng(pool_seed(seed, q.user, protocol));
      r = rank_k_candidates(scorer, q, n_books, negatives_for(protocol), rng);
    }
    ranks.push_back(r.ground_truth_rank);
    if (details) details->push_back(std::move(r));
  }
  auto report = summarize(ranks);
  report.protocol = std::string(to_string(protocol));
  report.seed = seed;
  report.config_digest = config_digest;
  return report;
}

}  // namespace acrec::eval
