#include "acrec/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "acrec/digest.hpp"
#include "acrec/io.hpp"
#include "acrec/nn/blob.hpp"

namespace acrec::train {

void TrainConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (negative_pool_policy != "unread_with_descriptions") {
    throw ConfigError("unknown negative pool policy: " + negative_pool_policy);
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"lr", lr},
                      {"K", K},
                      {"max_epochs", max_epochs},
                      {"patience", patience},
                      {"seed", seed},
                      {"dropout", dropout},
                      {"negative_pool_policy", negative_pool_policy},
                      {"normalization", normalization == LossNormalization::per_user ? "per_user" : "per_step"},
                      {"max_updates", max_updates}};
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.K = j.value("K", c.K);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.dropout = j.value("dropout", c.dropout);
  c.negative_pool_policy = j.value("negative_pool_policy", c.negative_pool_policy);
  const std::string norm = j.value("normalization", std::string("per_user"));
  if (norm == "per_user") {
    c.normalization = LossNormalization::per_user;
  } else if (norm == "per_step") {
    c.normalization = LossNormalization::per_step;
  } else {
    throw ConfigError("unknown loss normalization: " + norm);
  }
  c.max_updates = j.value("max_updates", c.max_updates);
  return c;
}

std::vector<int> sample_negatives(const Query& query, int K, int n_books, Rng& rng) {
  return eval::sample_unread(query, n_books, K, rng);
}

template <typename T>
nn::Tensor<T> bpr_loss(const nn::Tensor<T>& scores) {
  if (scores.cols() != 1 || scores.rows() < 2) {
    throw ShapeError("bpr_loss expects [y_pos, y_1..y_K] as an n x 1 tensor, got " + scores.shape_string());
  }
  const int K = scores.rows() - 1;
  auto pos = nn::repeat_rows(nn::slice_rows(scores, 0, 1), K);
  auto diff = nn::sub(pos, nn::slice_rows(scores, 1, K));
  return nn::scale(nn::sum(nn::log_sigmoid(diff)), T(-1) / static_cast<T>(K));
}

double bpr_loss_value(double y_pos, std::span<const double> y_negs) {
  if (y_negs.empty()) throw ShapeError("bpr_loss needs at least one negative");
  double total = 0.0;
  for (double y : y_negs) {
    const double x = y_pos - y;
    total += x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  return -total / static_cast<double>(y_negs.size());
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},
          {"mean_loss", mean_loss},
          {"val_hr10", val_hr10},
          {"val_ndcg10", val_ndcg10},
          {"wall_ms", wall_ms}};
}

namespace {

std::vector<std::vector<float>> snapshot(const nn::ParamSet<float>& params) {
  std::vector<std::vector<float>> out;
  for (const auto& [_, t] : params.items()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(nn::ParamSet<float>& params, const std::vector<std::vector<float>>& values) {
  std::size_t i = 0;
  for (auto& [_, t] : params.items()) {
    std::copy(values[i].begin(), values[i].end(), t.data().begin());
    ++i;
  }
}

}  // namespace

FitResult fit(Model<float>& model, const FeatureStore& store, const std::vector<Query>& train,
              const std::vector<Query>& validation, const TrainConfig& config,
              const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (train.empty()) throw DataError("no training samples");
  nn::FlushDenormalsGuard flush;

  // Users in first-appearance order; steps chronological within a user.
  std::vector<std::string> users;
  std::map<std::string, std::vector<const Query*>> by_user;
  for (const auto& q : train) {
    auto& v = by_user[q.user];
    if (v.empty()) users.push_back(q.user);
    v.push_back(&q);
  }
  for (auto& [_, v] : by_user) {
    std::stable_sort(v.begin(), v.end(),
                     [](const Query* a, const Query* b) { return a->step_index < b->step_index; });
  }

  auto& params = model.params();
  auto adam = nn::AdamState<float>::for_params(params);
  Rng rng(mix_seed(config.seed, 0x747261696eULL));
  const int n_books = store.n_books();

  std::ofstream log;
  if (config.log_path) {
    log.open(*config.log_path, std::ios::trunc);
    if (!log) throw Error("cannot open training log " + config.log_path->string());
  }

  FitResult result;
  std::vector<std::vector<float>> best;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(std::span<std::string>(users));
    double loss_sum = 0.0;
    std::size_t steps = 0;
    bool budget_exhausted = false;
    for (const auto& user : users) {
      const auto& queries = by_user[user];
      const float weight = config.normalization == LossNormalization::per_user
                               ? 1.0f / static_cast<float>(queries.size())
                               : 1.0f;
      for (const Query* q : queries) {
        if (config.max_updates > 0 && result.updates >= config.max_updates) {
          budget_exhausted = true;
          break;
        }
        auto negs = sample_negatives(*q, config.K, n_books, rng);
        negs.insert(negs.begin(), q->positive);
        params.zero_grad();
        auto scores = model.forward(store, *q, negs, true, rng);
        auto loss = bpr_loss(scores);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss " + std::to_string(value) + " at epoch " +
                              std::to_string(epoch) + ", update " + std::to_string(result.updates) +
                              ", user " + q->user + ", step " + std::to_string(q->step_index));
        }
        nn::backward(weight == 1.0f ? loss : nn::scale(loss, weight));
        nn::adam_step(params, adam, config.lr);
        result.step_losses.push_back(value);
        loss_sum += value;
        ++steps;
        ++result.updates;
      }
      if (budget_exhausted) break;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    if (!validation.empty()) {
      ModelScorer scorer(model, store);
      const auto report =
          eval::run_protocol(scorer, validation, eval::Protocol::val101, n_books, config.seed);
      entry.val_hr10 = report.at("HR@10");
      entry.val_ndcg10 = report.at("NDCG@10");
    }
    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(entry);
    if (log) log << entry.to_json().dump() << '\n' << std::flush;
    if (on_epoch) on_epoch(entry);

    const bool improved = entry.val_hr10 > result.best_hr10 ||
                          (entry.val_hr10 == result.best_hr10 && entry.val_ndcg10 > result.best_ndcg10);
    if (improved || validation.empty()) {
      result.best_epoch = epoch;
      result.best_hr10 = entry.val_hr10;
      result.best_ndcg10 = entry.val_ndcg10;
      best = snapshot(params);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= config.patience || budget_exhausted) break;
  }
  restore(params, best);
  return result;
}

// Checkpoints -------------------------------------------------------------------

namespace {

constexpr const char* kFormat = "acrec-checkpoint-v1";

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  const std::string s = io::read_file(p);
  return {s.begin(), s.end()};
}

}  // namespace

std::string params_digest(const Model<float>& model) {
  return blob_digest(nn::pack(model.params()).bytes);
}

void save_checkpoint(const std::filesystem::path& dir, const Model<float>* model,
                     const ModelConfig& model_config, const nlohmann::json& train_config,
                     std::uint64_t seed, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nn::PackedParams packed;
  if (model) packed = nn::pack(model->params());
  const std::string bytes(packed.bytes.begin(), packed.bytes.end());
  io::write_file_atomic(dir / "params.bin", bytes);
  nlohmann::json manifest = {{"format", kFormat},
                             {"model", model_config.to_json()},
                             {"train", train_config},
                             {"seed", seed},
                             {"tensors", nn::to_json(packed.entries)},
                             {"params_bytes", packed.bytes.size()},
                             {"params_digest", blob_digest(packed.bytes)},
                             {"extra", extra}};
  io::write_json(dir / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<ModelConfig>& expected) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw NotFoundError("no checkpoint manifest in " + dir.string());
  }
  nlohmann::json manifest;
  try {
    manifest = io::read_json(dir / "manifest.json");
  } catch (const std::exception& e) {
    throw CorruptionError("unreadable checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat) {
    throw CorruptionError("checkpoint format is not " + std::string(kFormat));
  }
  Checkpoint ck;
  ck.model_config = ModelConfig::from_json(manifest.at("model"));
  if (expected && !(*expected == ck.model_config)) {
    throw ConfigError("checkpoint model config " + ck.model_config.to_json().dump() +
                      " disagrees with runtime config " + expected->to_json().dump());
  }
  ck.train_config = manifest.value("train", nlohmann::json::object());
  ck.seed = manifest.value("seed", std::uint64_t{0});
  ck.extra = manifest.value("extra", nlohmann::json::object());

  const auto bytes = read_bytes(dir / "params.bin");
  if (bytes.size() != manifest.at("params_bytes").get<std::size_t>()) {
    throw CorruptionError("params.bin holds " + std::to_string(bytes.size()) + " bytes, manifest says " +
                          manifest.at("params_bytes").dump());
  }
  ck.params_digest = blob_digest(bytes);
  if (ck.params_digest != manifest.at("params_digest").get<std::string>()) {
    throw CorruptionError("params.bin digest " + ck.params_digest + " does not match manifest");
  }
  if (ck.model_config.kind != ModelKind::cosine) {
    ck.model = make_model<float>(ck.model_config, ck.seed);
    nn::unpack(nn::entries_from_json(manifest.at("tensors")), bytes, ck.model->params());
  }
  return ck;
}

template nn::Tensor<float> bpr_loss<float>(const nn::Tensor<float>&);
template nn::Tensor<double> bpr_loss<double>(const nn::Tensor<double>&);

}  // namespace acrec::train
