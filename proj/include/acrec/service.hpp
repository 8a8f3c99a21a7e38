#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/pipeline.hpp"

namespace httplib {
class Server;
}

namespace acrec::service {

/// Maps to HTTP 503.
class UnavailableError : public Error {
 public:
  using Error::Error;
};

enum class RankProtocol { all_items, sampled };

struct RecommendRequest {
  UserId user_id;
  std::optional<std::string> free_text;
  std::vector<std::string> statement_ids;
  int k = 10;
  RankProtocol protocol = RankProtocol::all_items;

  /// Throws DataError on malformed bodies.
  static RecommendRequest from_json(const nlohmann::json& j);
};

struct RankedItem {
  BookId book_id;
  std::string title;
  double score = 0.0;
};

struct RecommendResponse {
  std::vector<RankedItem> items;
  std::string model_digest;
  double latency_ms = 0.0;
  ACDescription ac;

  nlohmann::json to_json() const;
};

/// A checkpoint ready for scoring. Immutable once built.
class LoadedModel {
 public:
  LoadedModel(train::Checkpoint checkpoint, const FeatureStore& store);

  static std::shared_ptr<const LoadedModel> load(const std::filesystem::path& ckpt_dir,
                                                 const FeatureStore& store);

  const std::string& digest() const { return checkpoint_.params_digest; }
  const ModelConfig& config() const { return checkpoint_.model_config; }
  const Scorer& scorer() const { return *scorer_; }

 private:
  train::Checkpoint checkpoint_;
  std::unique_ptr<Scorer> scorer_;
};

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

/// Transport-independent request handling over read-only shared state; the
/// loaded model can be swapped atomically while requests are in flight.
class RecommenderService {
 public:
  RecommenderService(pipeline::Workspace& workspace, pipeline::ServiceSettings settings,
                     std::uint64_t seed = 0);
  ~RecommenderService();

  void swap_model(std::shared_ptr<const LoadedModel> model);
  std::shared_ptr<const LoadedModel> model() const;

  RecommendResponse recommend(const RecommendRequest& request) const;

  /// Dispatches one request: method, path (no query string), query
  /// parameters, body.
  HttpResult handle(const std::string& method, const std::string& path,
                    const std::multimap<std::string, std::string>& params,
                    const std::string& body) const;

  /// Blocks serving HTTP until stop().
  void listen(const std::string& host, int port);
  /// Binds to an ephemeral port and serves from a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  /// Polls the checkpoint's params digest and swaps in changed models.
  void watch_checkpoint(const std::filesystem::path& ckpt_dir, int interval_ms);

 private:
  HttpResult get_statements(const std::multimap<std::string, std::string>& params) const;
  HttpResult get_history(const std::string& user) const;
  void install_routes();

  pipeline::Workspace& ws_;
  pipeline::ServiceSettings settings_;
  std::uint64_t seed_;
  std::set<UserId> known_users_;
  mutable std::mutex provider_mutex_;
  std::shared_ptr<const LoadedModel> model_;
  mutable std::mutex model_mutex_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  std::thread watcher_;
  std::atomic<bool> stopping_{false};
};

}  // namespace acrec::service
