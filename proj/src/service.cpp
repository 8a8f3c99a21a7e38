#include "acrec/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <iostream>
#include <numeric>

#include <httplib.h>

#include "acrec/io.hpp"
#include "acrec/text.hpp"

namespace acrec::service {

namespace {

HttpResult error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::optional<std::string> param(const std::multimap<std::string, std::string>& params,
                                 const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

int int_param(const std::multimap<std::string, std::string>& params, const std::string& name,
              int fallback, int lo, int hi) {
  auto v = param(params, name);
  if (!v) return fallback;
  int out = 0;
  const auto* end = v->data() + v->size();
  auto [ptr, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || ptr != end || out < lo || out > hi) {
    throw DataError("query parameter " + name + " must be an integer in [" + std::to_string(lo) +
                    ", " + std::to_string(hi) + "]");
  }
  return out;
}

}  // namespace

RecommendRequest RecommendRequest::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("request body must be an object");
  RecommendRequest r;
  try {
    r.user_id = j.at("user_id").get<std::string>();
    if (j.contains("ac")) {
      const auto& ac = j["ac"];
      if (!ac.is_object()) throw DataError("ac must be an object");
      if (ac.contains("free_text") && !ac["free_text"].is_null()) {
        r.free_text = ac["free_text"].get<std::string>();
      }
      if (ac.contains("statement_ids")) {
        r.statement_ids = ac["statement_ids"].get<std::vector<std::string>>();
      }
    }
    if (j.contains("k")) r.k = j["k"].get<int>();
    const std::string protocol = j.value("protocol", std::string("all_items"));
    if (protocol == "all_items") {
      r.protocol = RankProtocol::all_items;
    } else if (protocol == "sampled") {
      r.protocol = RankProtocol::sampled;
    } else {
      throw DataError("unknown protocol '" + protocol + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed request: ") + e.what());
  }
  if (r.k < 1) throw DataError("k must be at least 1");
  return r;
}

nlohmann::json RecommendResponse::to_json() const {
  nlohmann::json items_json = nlohmann::json::array();
  for (const auto& it : items) {
    items_json.push_back({{"book_id", it.book_id}, {"title", it.title}, {"score", it.score}});
  }
  return {{"items", items_json}, {"model_digest", model_digest}, {"latency_ms", latency_ms},
          {"ac", ac}};
}

LoadedModel::LoadedModel(train::Checkpoint checkpoint, const FeatureStore& store)
    : checkpoint_(std::move(checkpoint)) {
  if (checkpoint_.model && checkpoint_.model_config.d_raw != store.dim()) {
    throw ConfigError("checkpoint expects " + std::to_string(checkpoint_.model_config.d_raw) +
                      "-dim embeddings, the store holds " + std::to_string(store.dim()));
  }
  scorer_ = pipeline::make_scorer(checkpoint_.model.get(), store);
}

std::shared_ptr<const LoadedModel> LoadedModel::load(const std::filesystem::path& ckpt_dir,
                                                     const FeatureStore& store) {
  return std::make_shared<const LoadedModel>(train::load_checkpoint(ckpt_dir), store);
}

RecommenderService::RecommenderService(pipeline::Workspace& workspace,
                                       pipeline::ServiceSettings settings, std::uint64_t seed)
    : ws_(workspace), settings_(std::move(settings)), seed_(seed) {
  known_users_.insert(ws_.users.begin(), ws_.users.end());
}

RecommenderService::~RecommenderService() { stop(); }

void RecommenderService::swap_model(std::shared_ptr<const LoadedModel> model) {
  std::lock_guard lock(model_mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const LoadedModel> RecommenderService::model() const {
  std::lock_guard lock(model_mutex_);
  return model_;
}

RecommendResponse RecommenderService::recommend(const RecommendRequest& request) const {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = this->model();
  if (!model) throw UnavailableError("model not loaded");
  const auto* history = ws_.corpus.find_history(request.user_id);
  if (!history || !known_users_.count(request.user_id)) {
    throw NotFoundError("unknown user '" + request.user_id + "'");
  }
  if (request.k < 1) throw DataError("k must be at least 1");

  RecommendResponse resp;
  try {
    resp.ac = ws_.statements.compose(request.statement_ids, request.free_text);
  } catch (const NotFoundError& e) {
    throw DataError(e.what());
  }

  std::vector<float> ac_raw;
  {
    std::lock_guard lock(provider_mutex_);
    ac_raw = ws_.provider->embed_text(resp.ac.rendered).values;
  }
  const auto& store = ws_.store;
  const int step = static_cast<int>(history->interactions.size());
  const Query query = make_query(store, *history, step, std::move(ac_raw));

  std::vector<int> candidates;
  if (request.protocol == RankProtocol::all_items) {
    for (int b = 0; b < store.n_books(); ++b) {
      if (!std::binary_search(query.consumed_before.begin(), query.consumed_before.end(), b)) {
        candidates.push_back(b);
      }
    }
  } else {
    const int unread = store.n_books() - static_cast<int>(query.consumed_all.size());
    Rng rng(eval::pool_seed(seed_, request.user_id, eval::Protocol::val101));
    candidates = eval::sample_unread(query, store.n_books(),
                                     std::min(settings_.sampled_negatives, unread), rng);
  }

  const auto scores = model->scorer().score(query, candidates);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(request.k), order.size());
  for (std::size_t i = 0; i < k; ++i) {
    const BookId& id = store.book_ids()[static_cast<std::size_t>(candidates[order[i]])];
    const Book* b = ws_.corpus.find_book(id);
    resp.items.push_back({id, b ? b->title : std::string(), scores[order[i]]});
  }
  resp.model_digest = model->digest();
  resp.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (settings_.request_timeout_ms > 0 && resp.latency_ms > settings_.request_timeout_ms) {
    throw UnavailableError("request exceeded its time budget");
  }
  return resp;
}

HttpResult RecommenderService::get_statements(
    const std::multimap<std::string, std::string>& params) const {
  const int offset = int_param(params, "offset", 0, 0, 1 << 30);
  const int limit = int_param(params, "limit", 50, 1, 1000);
  const auto category = param(params, "category");
  auto intensity = param(params, "intensity");
  if (intensity && intensity->empty()) intensity.reset();
  std::vector<taxonomy::ACStatement> found;
  if (category && !category->empty()) {
    found = ws_.statements.by_category(*category, intensity);
  } else {
    if (intensity) throw DataError("intensity requires a category");
    found = ws_.statements.all();
  }
  nlohmann::json page = nlohmann::json::array();
  for (std::size_t i = static_cast<std::size_t>(offset);
       i < found.size() && i < static_cast<std::size_t>(offset) + static_cast<std::size_t>(limit); ++i) {
    page.push_back(found[i]);
  }
  nlohmann::json body = {{"total", found.size()}, {"offset", offset}, {"limit", limit},
                         {"statements", page}};
  body["category"] = category ? nlohmann::json(*category) : nlohmann::json(nullptr);
  body["intensity"] = intensity ? nlohmann::json(*intensity) : nlohmann::json(nullptr);
  return {200, body};
}

HttpResult RecommenderService::get_history(const std::string& user) const {
  const auto* h = ws_.corpus.find_history(user);
  if (!h) return error(404, "unknown user '" + user + "'");
  nlohmann::json items = nlohmann::json::array();
  for (const auto& x : h->interactions) {
    const Book* b = ws_.corpus.find_book(x.book);
    items.push_back({{"index", x.index},
                     {"book_id", x.book},
                     {"title", b ? b->title : std::string()},
                     {"rating", x.rating},
                     {"timestamp", x.timestamp},
                     {"review", x.review}});
  }
  return {200, {{"user_id", user}, {"interactions", items}}};
}

HttpResult RecommenderService::handle(const std::string& method, const std::string& path,
                                      const std::multimap<std::string, std::string>& params,
                                      const std::string& body) const {
  try {
    if (path == "/recommend") {
      if (method != "POST") return error(405, "use POST");
      const auto doc = nlohmann::json::parse(body, nullptr, false);
      if (doc.is_discarded()) return error(400, "request body is not valid JSON");
      return {200, recommend(RecommendRequest::from_json(doc)).to_json()};
    }
    if (method != "GET") return error(405, "use GET");
    if (path == "/health") {
      const auto m = model();
      return {200,
              {{"status", m ? "ok" : "degraded"},
               {"model_digest", m ? nlohmann::json(m->digest()) : nlohmann::json(nullptr)}}};
    }
    if (path == "/wheel") return {200, taxonomy::wheel_to_json()};
    if (path == "/statements") return get_statements(params);
    const std::string prefix = "/users/", suffix = "/history";
    if (path.size() > prefix.size() + suffix.size() && path.rfind(prefix, 0) == 0 &&
        path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0) {
      const std::string user = path.substr(prefix.size(), path.size() - prefix.size() - suffix.size());
      if (user.find('/') == std::string::npos) return get_history(user);
    }
    return error(404, "no route for " + path);
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const DataError& e) {
    return error(400, e.what());
  } catch (const UnavailableError& e) {
    return error(503, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

void RecommenderService::install_routes() {
  server_ = std::make_unique<httplib::Server>();
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
    const auto out = handle(req.method, req.path, params, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server_->Get(".*", dispatch);
  server_->Post(".*", dispatch);
  server_->Put(".*", dispatch);
  server_->Delete(".*", dispatch);
}

void RecommenderService::listen(const std::string& host, int port) {
  install_routes();
  if (!server_->listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

int RecommenderService::start_background(const std::string& host) {
  install_routes();
  const int port = server_->bind_to_any_port(host);
  if (port <= 0) throw Error("cannot bind " + host);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void RecommenderService::stop() {
  stopping_ = true;
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (watcher_.joinable()) watcher_.join();
}

void RecommenderService::watch_checkpoint(const std::filesystem::path& ckpt_dir, int interval_ms) {
  watcher_ = std::thread([this, ckpt_dir, interval_ms] {
    while (!stopping_) {
      for (int waited = 0; waited < interval_ms && !stopping_; waited += 50) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      if (stopping_) break;
      try {
        const auto manifest = io::read_json(ckpt_dir / "manifest.json");
        const auto digest = manifest.value("params_digest", std::string());
        const auto current = model();
        if (current && current->digest() == digest) continue;
        swap_model(LoadedModel::load(ckpt_dir, ws_.store));
        std::cerr << "loaded model " << digest << "\n";
      } catch (const std::exception& e) {
        std::cerr << "checkpoint reload failed: " << e.what() << "\n";
      }
    }
  });
}

}  // namespace acrec::service
