#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/eval.hpp"
#include "acrec/model.hpp"
#include "acrec/nn/optim.hpp"

namespace acrec::train {

class TrainingError : public Error {
 public:
  using Error::Error;
};

enum class LossNormalization { per_user, per_step };

struct TrainConfig {
  double lr = 1e-4;
  int K = 10;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  double dropout = 0.2;
  /// Negatives come from books the user never read, restricted to books with
  /// both description embeddings.
  std::string negative_pool_policy = "unread_with_descriptions";
  LossNormalization normalization = LossNormalization::per_user;
  std::size_t max_updates = 0;  // 0 = unlimited
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::filesystem::path> log_path;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// K distinct books the user never read, uniform without replacement.
std::vector<int> sample_negatives(const Query& query, int K, int n_books, Rng& rng);

/// -(1/K) sum_k log sigmoid(y_pos - y_k) for scores laid out [y_pos, y_1..y_K]
/// as an n x 1 tensor.
template <typename T>
nn::Tensor<T> bpr_loss(const nn::Tensor<T>& scores);

/// Plain-double form.
double bpr_loss_value(double y_pos, std::span<const double> y_negs);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const;
};

struct FitResult {
  int best_epoch = 0;
  double best_hr10 = -1.0;
  double best_ndcg10 = -1.0;
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;  // per update, unnormalized
  std::size_t updates = 0;
};

/// BPR training with Adam at batch size 1. After each epoch the model is
/// scored on `validation` with the 101-candidate protocol; the best epoch's
/// parameters (HR@10, then NDCG@10) are restored into `model` on return.
FitResult fit(Model<float>& model, const FeatureStore& store, const std::vector<Query>& train,
              const std::vector<Query>& validation, const TrainConfig& config,
              const std::function<void(const EpochLog&)>& on_epoch = {});

struct Checkpoint {
  ModelConfig model_config;
  nlohmann::json train_config;
  std::uint64_t seed = 0;
  std::string params_digest;
  nlohmann::json extra;
  std::unique_ptr<Model<float>> model;  // null for the cosine baseline
};

/// Directory with manifest.json and params.bin.
void save_checkpoint(const std::filesystem::path& dir, const Model<float>* model,
                     const ModelConfig& model_config, const nlohmann::json& train_config,
                     std::uint64_t seed, const nlohmann::json& extra = nlohmann::json::object());

/// Throws CorruptionError on a digest or size mismatch and ConfigError when
/// `expected` disagrees with the stored model configuration.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<ModelConfig>& expected = std::nullopt);

std::string params_digest(const Model<float>& model);

}  // namespace acrec::train
