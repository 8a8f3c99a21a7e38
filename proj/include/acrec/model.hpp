#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/features.hpp"
#include "acrec/nn/layers.hpp"

namespace acrec {

enum class ModelKind { acrec, fcn, cosine };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::acrec;
  int d_raw = 768;
  int d_proj = 41;
  int d_rating = 5;
  int d_hidden = 128;
  int blocks = 4;
  int heads = 4;
  int ffn_inner = 128;
  int window = 30;  // m
  double dropout = 0.2;
  std::vector<int> fcn_hidden = {256, 128};
  bool use_cosine = false;
  int d_ac = 41;
  bool causal_attention = false;
  /// Raw embeddings are multiplied by this before projection; 0 means sqrt(d_raw).
  double raw_input_scale = 0.0;
  // FCN-n baseline
  int fcn_layers = 3;
  std::vector<int> fcn_proj = {42, 43, 43};
  int fcn_width = 128;

  /// Throws ConfigError.
  void validate() const;
  /// Length of [lp; sp; s_b; ac(; cos)].
  int fcn_input_dim() const;
  int candidate_dim() const { return 2 * d_proj + d_rating; }
  double effective_raw_scale() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Long-term weights alpha_k = 2k / (n (n + 1)), k = 1..n, oldest first.
std::vector<double> long_term_weights(int n);

template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  virtual const ModelConfig& config() const = 0;
  virtual nn::ParamSet<T>& params() = 0;
  virtual const nn::ParamSet<T>& params() const = 0;

  /// Scores of `candidates` (book rows) for the query, as an n x 1 tensor.
  virtual nn::Tensor<T> forward(const FeatureStore& store, const Query& query,
                                std::span<const int> candidates, bool training, Rng& rng) const = 0;
};

template <typename T>
struct UserState {
  nn::Tensor<T> lp;  // 1 x d_hidden
  nn::Tensor<T> sp;  // 1 x d_hidden
  nn::Tensor<T> ac;  // 1 x d_ac
};

template <typename T>
class AcrecModel final : public Model<T> {
 public:
  AcrecModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const override { return config_; }
  nn::ParamSet<T>& params() override { return params_; }
  const nn::ParamSet<T>& params() const override { return params_; }

  /// c = [d W_d; e W_e; r W_r; g[rating]] per row; raw inputs are n x d_raw.
  nn::Tensor<T> encode_steps(const nn::Tensor<T>& d_raw, const nn::Tensor<T>& e_raw,
                             const nn::Tensor<T>& r_raw, std::span<const int> ratings) const;
  /// s_b = [d W_d; e W_e; g[5]] per row.
  nn::Tensor<T> encode_candidates(const nn::Tensor<T>& d_raw, const nn::Tensor<T>& e_raw) const;
  nn::Tensor<T> encode_ac(const nn::Tensor<T>& ac_raw) const;

  /// `window` holds the last <= m step embeddings in chronological order.
  nn::Tensor<T> short_term(const nn::Tensor<T>& window, bool training, Rng& rng) const;
  /// Literal weighted sum over prefix step embeddings (chronological); zeros if empty.
  nn::Tensor<T> long_term(const nn::Tensor<T>& prefix) const;
  /// Same value from alpha-weighted raw sums (1 x d_raw each) and the
  /// alpha-weighted rating histogram (1 x 5). Zeros if `empty`.
  nn::Tensor<T> long_term_from_sums(const nn::Tensor<T>& d_sum, const nn::Tensor<T>& e_sum,
                                    const nn::Tensor<T>& r_sum, const nn::Tensor<T>& rating_mass,
                                    bool empty) const;

  /// y for each candidate row of `s_b`; `cosines` has one entry per row and is
  /// required iff use_cosine.
  nn::Tensor<T> score(const UserState<T>& user, const nn::Tensor<T>& s_b,
                      std::span<const T> cosines, bool training, Rng& rng) const;

  UserState<T> user_state(const FeatureStore& store, const Query& query, bool training,
                          Rng& rng) const;
  nn::Tensor<T> candidate_reps(const FeatureStore& store, std::span<const int> books) const;

  nn::Tensor<T> forward(const FeatureStore& store, const Query& query,
                        std::span<const int> candidates, bool training, Rng& rng) const override;

 private:
  nn::Tensor<T> head(const nn::Tensor<T>& x, bool training, Rng& rng) const;

  ModelConfig config_;
  nn::ParamSet<T> params_;
  nn::Linear<T> w_d_, w_e_, w_r_, w_a_;
  nn::Tensor<T> rating_table_;  // 5 x d_rating
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::Tensor<T> positional_;  // m x d_hidden
  std::vector<nn::Linear<T>> fcn_;
};

/// FCN-n: ramp projections of the candidate descriptions and the AC text to
/// 42/43/43, then n ramp layers of width 128 and a linear output.
template <typename T>
class FcnBaseline final : public Model<T> {
 public:
  FcnBaseline(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const override { return config_; }
  nn::ParamSet<T>& params() override { return params_; }
  const nn::ParamSet<T>& params() const override { return params_; }

  nn::Tensor<T> score(const nn::Tensor<T>& d_raw, const nn::Tensor<T>& e_raw,
                      const nn::Tensor<T>& ac_raw, bool training, Rng& rng) const;

  nn::Tensor<T> forward(const FeatureStore& store, const Query& query,
                        std::span<const int> candidates, bool training, Rng& rng) const override;

 private:
  ModelConfig config_;
  nn::ParamSet<T> params_;
  nn::Linear<T> p_d_, p_e_, p_ac_;
  std::vector<nn::Linear<T>> hidden_;
  nn::Linear<T> out_;
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& config, std::uint64_t seed);

/// Rows of a raw matrix as a constant tensor.
template <typename T>
nn::Tensor<T> gather_raw(const RawMatrix& m, std::span<const int> rows, double scale = 1.0);
template <typename T>
nn::Tensor<T> row_tensor(std::span<const float> v, double scale = 1.0);

/// cos(ac_raw, combined description) of each candidate.
std::vector<double> candidate_cosines(const FeatureStore& store, std::span<const float> ac_raw,
                                      std::span<const int> candidates);

/// Inference-only scoring over book rows.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<double> score(const Query& query, std::span<const int> candidates) const = 0;
};

class CosineScorer final : public Scorer {
 public:
  explicit CosineScorer(const FeatureStore& store) : store_(store) {}
  std::vector<double> score(const Query& query, std::span<const int> candidates) const override;

 private:
  const FeatureStore& store_;
};

/// Wraps a float model; ACRec candidate representations are computed once for
/// the whole catalog.
class ModelScorer final : public Scorer {
 public:
  ModelScorer(const Model<float>& model, const FeatureStore& store);
  std::vector<double> score(const Query& query, std::span<const int> candidates) const override;

 private:
  const Model<float>& model_;
  const FeatureStore& store_;
  nn::Tensor<float> all_candidates_;  // ACRec only
};

}  // namespace acrec
