#include "acrec/model.hpp"

#include <algorithm>
#include <cmath>

namespace acrec {

using nn::Tensor;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::acrec: return "acrec";
    case ModelKind::fcn: return "fcn";
    case ModelKind::cosine: return "cosine";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "acrec") return ModelKind::acrec;
  if (s == "fcn") return ModelKind::fcn;
  if (s == "cosine") return ModelKind::cosine;
  throw ConfigError("unknown model kind: " + std::string(s));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_raw <= 0 || d_proj <= 0 || d_rating <= 0 || d_ac <= 0) fail("dimensions must be positive");
  if (3 * d_proj + d_rating != d_hidden) {
    fail("3 * d_proj + d_rating = " + std::to_string(3 * d_proj + d_rating) +
         " differs from d_hidden = " + std::to_string(d_hidden));
  }
  if (d_hidden % 2 != 0) fail("d_hidden must be even");
  if (heads <= 0 || d_hidden % heads != 0) fail("d_hidden must be divisible by heads");
  if (window < 1) fail("window must be >= 1");
  if (blocks < 1) fail("blocks must be >= 1");
  if (ffn_inner < 1) fail("ffn_inner must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  for (int w : fcn_hidden) {
    if (w < 1) fail("fcn_hidden widths must be positive");
  }
  if (fcn_layers < 0 || fcn_layers > 4) fail("fcn_layers must be in [0, 4]");
  if (fcn_proj.size() != 3) fail("fcn_proj needs three widths");
  for (int w : fcn_proj) {
    if (w < 1) fail("fcn_proj widths must be positive");
  }
  if (fcn_width < 1) fail("fcn_width must be positive");
  if (raw_input_scale < 0.0) fail("raw_input_scale must be >= 0");
}

double ModelConfig::effective_raw_scale() const {
  return raw_input_scale > 0.0 ? raw_input_scale : std::sqrt(static_cast<double>(d_raw));
}

int ModelConfig::fcn_input_dim() const {
  return 2 * d_hidden + candidate_dim() + d_ac + (use_cosine ? 1 : 0);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"d_raw", d_raw},
          {"d_proj", d_proj},
          {"d_rating", d_rating},
          {"d_hidden", d_hidden},
          {"blocks", blocks},
          {"heads", heads},
          {"ffn_inner", ffn_inner},
          {"window", window},
          {"dropout", dropout},
          {"fcn_hidden", fcn_hidden},
          {"use_cosine", use_cosine},
          {"d_ac", d_ac},
          {"causal_attention", causal_attention},
          {"raw_input_scale", raw_input_scale},
          {"fcn_layers", fcn_layers},
          {"fcn_proj", fcn_proj},
          {"fcn_width", fcn_width}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("kind")) c.kind = model_kind_from_string(j.at("kind").get<std::string>());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d_raw", c.d_raw);
  get("d_proj", c.d_proj);
  get("d_rating", c.d_rating);
  get("d_hidden", c.d_hidden);
  get("blocks", c.blocks);
  get("heads", c.heads);
  get("ffn_inner", c.ffn_inner);
  get("window", c.window);
  get("dropout", c.dropout);
  get("fcn_hidden", c.fcn_hidden);
  get("use_cosine", c.use_cosine);
  get("d_ac", c.d_ac);
  get("causal_attention", c.causal_attention);
  get("raw_input_scale", c.raw_input_scale);
  get("fcn_layers", c.fcn_layers);
  get("fcn_proj", c.fcn_proj);
  get("fcn_width", c.fcn_width);
  for (const auto& [key, _] : j.items()) {
    if (!c.to_json().contains(key)) throw ConfigError("model config: unknown key " + key);
  }
  return c;
}

std::vector<double> long_term_weights(int n) {
  std::vector<double> alpha(static_cast<std::size_t>(std::max(n, 0)));
  const double denom = static_cast<double>(n) * (static_cast<double>(n) + 1.0);
  for (int k = 1; k <= n; ++k) alpha[static_cast<std::size_t>(k - 1)] = 2.0 * k / denom;
  return alpha;
}

template <typename T>
Tensor<T> gather_raw(const RawMatrix& m, std::span<const int> rows, double scale) {
  std::vector<T> v;
  v.reserve(rows.size() * static_cast<std::size_t>(m.dim));
  for (int r : rows) {
    if (r < 0 || r >= m.rows) throw NotFoundError("raw embedding row " + std::to_string(r) + " missing");
    for (float x : m.row(r)) v.push_back(static_cast<T>(x * scale));
  }
  return Tensor<T>::from(static_cast<int>(rows.size()), m.dim, std::move(v));
}

template <typename T>
Tensor<T> row_tensor(std::span<const float> v, double scale) {
  std::vector<T> out;
  out.reserve(v.size());
  for (float x : v) out.push_back(static_cast<T>(x * scale));
  return Tensor<T>::from(1, static_cast<int>(v.size()), std::move(out));
}

std::vector<double> candidate_cosines(const FeatureStore& store, std::span<const float> ac_raw,
                                      std::span<const int> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (int b : candidates) out.push_back(embed::cosine(ac_raw, store.combined().row(b)));
  return out;
}

// ACRec -----------------------------------------------------------------------

template <typename T>
AcrecModel<T>::AcrecModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  const auto& c = config_;
  w_d_ = nn::Linear<T>(params_, "proj.d", c.d_raw, c.d_proj, false, rng);
  w_e_ = nn::Linear<T>(params_, "proj.e", c.d_raw, c.d_proj, false, rng);
  w_r_ = nn::Linear<T>(params_, "proj.r", c.d_raw, c.d_proj, false, rng);
  w_a_ = nn::Linear<T>(params_, "proj.a", c.d_raw, c.d_ac, false, rng);
  rating_table_ = params_.add_uniform("rating_table", 5, c.d_rating,
                                      std::sqrt(6.0 / (5 + c.d_rating)), rng);
  for (int b = 0; b < c.blocks; ++b) {
    blocks_.emplace_back(params_, "block" + std::to_string(b), c.d_hidden, c.heads, c.ffn_inner,
                         c.dropout, rng);
  }
  const auto pe = nn::sinusoidal_positional_encoding(c.window, c.d_hidden);
  positional_ = Tensor<T>::from(c.window, c.d_hidden, std::vector<T>(pe.begin(), pe.end()));
  int in = c.fcn_input_dim();
  for (std::size_t i = 0; i < c.fcn_hidden.size(); ++i) {
    fcn_.emplace_back(params_, "fcn" + std::to_string(i + 1), in, c.fcn_hidden[i], true, rng);
    in = c.fcn_hidden[i];
  }
  fcn_.emplace_back(params_, "fcn_out", in, 1, true, rng);
}

template <typename T>
Tensor<T> AcrecModel<T>::encode_steps(const Tensor<T>& d_raw, const Tensor<T>& e_raw,
                                      const Tensor<T>& r_raw, std::span<const int> ratings) const {
  std::vector<int> idx;
  idx.reserve(ratings.size());
  for (int r : ratings) {
    if (r < 1 || r > 5) throw DataError("rating " + std::to_string(r) + " outside [1, 5]");
    idx.push_back(r - 1);
  }
  return nn::concat_cols<T>({w_d_(d_raw), w_e_(e_raw), w_r_(r_raw), nn::gather_rows(rating_table_, std::span<const int>(idx))});
}

template <typename T>
Tensor<T> AcrecModel<T>::encode_candidates(const Tensor<T>& d_raw, const Tensor<T>& e_raw) const {
  auto g5 = nn::repeat_rows(nn::slice_rows(rating_table_, 4, 1), d_raw.rows());
  return nn::concat_cols<T>({w_d_(d_raw), w_e_(e_raw), g5});
}

template <typename T>
Tensor<T> AcrecModel<T>::encode_ac(const Tensor<T>& ac_raw) const {
  return w_a_(ac_raw);
}

template <typename T>
Tensor<T> AcrecModel<T>::short_term(const Tensor<T>& window, bool training, Rng& rng) const {
  const int w = window.rows();
  const int m = config_.window;
  if (w < 1) throw DataError("short-term window is empty");
  if (w > m) {
    throw ShapeError("short-term window of " + std::to_string(w) + " exceeds m = " + std::to_string(m));
  }
  std::vector<int> reversed(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) reversed[static_cast<std::size_t>(i)] = w - 1 - i;
  auto x = nn::gather_rows(window, std::span<const int>(reversed));
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(m), 0);
  std::fill_n(keep.begin(), w, 1);
  if (w < m) x = nn::concat_rows<T>({x, Tensor<T>::zeros(m - w, config_.d_hidden)});
  x = nn::add(x, positional_);
  for (const auto& block : blocks_) x = block(x, keep, config_.causal_attention, training, rng);
  return nn::slice_rows(x, 0, 1);
}

template <typename T>
Tensor<T> AcrecModel<T>::long_term(const Tensor<T>& prefix) const {
  const int n = prefix.defined() ? prefix.rows() : 0;
  if (n == 0) return Tensor<T>::zeros(1, config_.d_hidden);
  const auto alpha = long_term_weights(n);
  return nn::matmul(Tensor<T>::from(1, n, std::vector<T>(alpha.begin(), alpha.end())), prefix);
}

template <typename T>
Tensor<T> AcrecModel<T>::long_term_from_sums(const Tensor<T>& d_sum, const Tensor<T>& e_sum,
                                             const Tensor<T>& r_sum, const Tensor<T>& rating_mass,
                                             bool empty) const {
  if (empty) return Tensor<T>::zeros(1, config_.d_hidden);
  return nn::concat_cols<T>(
      {w_d_(d_sum), w_e_(e_sum), w_r_(r_sum), nn::matmul(rating_mass, rating_table_)});
}

template <typename T>
Tensor<T> AcrecModel<T>::head(const Tensor<T>& x, bool training, Rng& rng) const {
  auto h = x;
  for (std::size_t i = 0; i + 1 < fcn_.size(); ++i) {
    h = nn::dropout(nn::ramp(fcn_[i](h)), config_.dropout, training, rng);
  }
  return fcn_.back()(h);
}

template <typename T>
Tensor<T> AcrecModel<T>::score(const UserState<T>& user, const Tensor<T>& s_b,
                               std::span<const T> cosines, bool training, Rng& rng) const {
  const int n = s_b.rows();
  if (s_b.cols() != config_.candidate_dim()) {
    throw ShapeError("candidate representation " + s_b.shape_string() + " expected " +
                     std::to_string(config_.candidate_dim()) + " columns");
  }
  std::vector<Tensor<T>> parts{nn::repeat_rows(user.lp, n), nn::repeat_rows(user.sp, n), s_b,
                               nn::repeat_rows(user.ac, n)};
  if (config_.use_cosine) {
    if (static_cast<int>(cosines.size()) != n) {
      throw ShapeError("expected " + std::to_string(n) + " cosine features, got " +
                       std::to_string(cosines.size()));
    }
    parts.push_back(Tensor<T>::from(n, 1, std::vector<T>(cosines.begin(), cosines.end())));
  } else if (!cosines.empty()) {
    throw ShapeError("cosine features given to a model without the cosine input");
  }
  return head(nn::concat_cols(parts), training, rng);
}

template <typename T>
UserState<T> AcrecModel<T>::user_state(const FeatureStore& store, const Query& query,
                                       bool training, Rng& rng) const {
  const int t = static_cast<int>(query.books.size());
  if (t == 0) throw DataError("user " + query.user + " has no history before the step");
  const int w = std::min(config_.window, t);
  const int p = t - w;
  std::span<const int> books(query.books), reviews(query.reviews), ratings(query.ratings);

  const double scale = config_.effective_raw_scale();
  auto window = encode_steps(gather_raw<T>(store.original(), books.subspan(p), scale),
                             gather_raw<T>(store.extended(), books.subspan(p), scale),
                             gather_raw<T>(store.reviews(), reviews.subspan(p), scale),
                             ratings.subspan(p));
  UserState<T> us;
  us.sp = short_term(window, training, rng);

  const auto alpha = long_term_weights(p);
  const auto D = static_cast<std::size_t>(store.dim());
  std::vector<double> d(D, 0.0), e(D, 0.0), r(D, 0.0), mass(5, 0.0);
  for (int k = 0; k < p; ++k) {
    const double a = alpha[static_cast<std::size_t>(k)] * scale;
    const auto od = store.original().row(books[k]);
    const auto oe = store.extended().row(books[k]);
    const auto rv = store.reviews().row(reviews[k]);
    for (std::size_t i = 0; i < D; ++i) {
      d[i] += a * od[i];
      e[i] += a * oe[i];
      r[i] += a * rv[i];
    }
    mass[static_cast<std::size_t>(ratings[k] - 1)] += alpha[static_cast<std::size_t>(k)];
  }
  auto as_row = [](const std::vector<double>& v) {
    return Tensor<T>::from(1, static_cast<int>(v.size()), std::vector<T>(v.begin(), v.end()));
  };
  us.lp = long_term_from_sums(as_row(d), as_row(e), as_row(r), as_row(mass), p == 0);
  us.ac = encode_ac(row_tensor<T>(query.ac_raw, scale));
  return us;
}

template <typename T>
Tensor<T> AcrecModel<T>::candidate_reps(const FeatureStore& store, std::span<const int> books) const {
  const double scale = config_.effective_raw_scale();
  return encode_candidates(gather_raw<T>(store.original(), books, scale),
                           gather_raw<T>(store.extended(), books, scale));
}

template <typename T>
Tensor<T> AcrecModel<T>::forward(const FeatureStore& store, const Query& query,
                                 std::span<const int> candidates, bool training, Rng& rng) const {
  auto us = user_state(store, query, training, rng);
  auto sb = candidate_reps(store, candidates);
  std::vector<T> cos;
  if (config_.use_cosine) {
    for (double c : candidate_cosines(store, query.ac_raw, candidates)) cos.push_back(static_cast<T>(c));
  }
  return score(us, sb, cos, training, rng);
}

// FCN-n -----------------------------------------------------------------------

template <typename T>
FcnBaseline<T>::FcnBaseline(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x66636eULL));
  const auto& c = config_;
  p_d_ = nn::Linear<T>(params_, "fcn.proj.d", c.d_raw, c.fcn_proj[0], true, rng);
  p_e_ = nn::Linear<T>(params_, "fcn.proj.e", c.d_raw, c.fcn_proj[1], true, rng);
  p_ac_ = nn::Linear<T>(params_, "fcn.proj.a", c.d_raw, c.fcn_proj[2], true, rng);
  int in = c.fcn_proj[0] + c.fcn_proj[1] + c.fcn_proj[2];
  for (int i = 0; i < c.fcn_layers; ++i) {
    hidden_.emplace_back(params_, "fcn.hidden" + std::to_string(i + 1), in, c.fcn_width, true, rng);
    in = c.fcn_width;
  }
  out_ = nn::Linear<T>(params_, "fcn.out", in, 1, true, rng);
}

template <typename T>
Tensor<T> FcnBaseline<T>::score(const Tensor<T>& d_raw, const Tensor<T>& e_raw,
                                const Tensor<T>& ac_raw, bool training, Rng& rng) const {
  const int n = d_raw.rows();
  auto ac = nn::ramp(p_ac_(ac_raw));
  if (ac.rows() == 1 && n != 1) ac = nn::repeat_rows(ac, n);
  auto h = nn::concat_cols<T>({nn::ramp(p_d_(d_raw)), nn::ramp(p_e_(e_raw)), ac});
  for (const auto& layer : hidden_) h = nn::dropout(nn::ramp(layer(h)), config_.dropout, training, rng);
  return out_(h);
}

template <typename T>
Tensor<T> FcnBaseline<T>::forward(const FeatureStore& store, const Query& query,
                                  std::span<const int> candidates, bool training, Rng& rng) const {
  const double scale = config_.effective_raw_scale();
  return score(gather_raw<T>(store.original(), candidates, scale),
               gather_raw<T>(store.extended(), candidates, scale),
               row_tensor<T>(query.ac_raw, scale), training, rng);
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& config, std::uint64_t seed) {
  switch (config.kind) {
    case ModelKind::acrec: return std::make_unique<AcrecModel<T>>(config, seed);
    case ModelKind::fcn: return std::make_unique<FcnBaseline<T>>(config, seed);
    case ModelKind::cosine: break;
  }
  throw ConfigError("the cosine baseline has no trainable model");
}

// Scorers ---------------------------------------------------------------------

std::vector<double> CosineScorer::score(const Query& query, std::span<const int> candidates) const {
  return candidate_cosines(store_, query.ac_raw, candidates);
}

ModelScorer::ModelScorer(const Model<float>& model, const FeatureStore& store)
    : model_(model), store_(store) {
  if (const auto* acrec = dynamic_cast<const AcrecModel<float>*>(&model_)) {
    nn::NoGradGuard no_grad;
    nn::FlushDenormalsGuard flush;
    std::vector<int> all(static_cast<std::size_t>(store.n_books()));
    for (int i = 0; i < store.n_books(); ++i) all[static_cast<std::size_t>(i)] = i;
    all_candidates_ = acrec->candidate_reps(store, all);
  }
}

std::vector<double> ModelScorer::score(const Query& query, std::span<const int> candidates) const {
  nn::NoGradGuard no_grad;
  nn::FlushDenormalsGuard flush;
  Rng unused(0);
  Tensor<float> y;
  if (const auto* acrec = dynamic_cast<const AcrecModel<float>*>(&model_)) {
    auto us = acrec->user_state(store_, query, false, unused);
    auto sb = nn::gather_rows(all_candidates_, candidates);
    std::vector<float> cos;
    if (model_.config().use_cosine) {
      for (double c : candidate_cosines(store_, query.ac_raw, candidates)) cos.push_back(static_cast<float>(c));
    }
    y = acrec->score(us, sb, cos, false, unused);
  } else {
    y = model_.forward(store_, query, candidates, false, unused);
  }
  return std::vector<double>(y.data().begin(), y.data().end());
}

template class AcrecModel<float>;
template class AcrecModel<double>;
template class FcnBaseline<float>;
template class FcnBaseline<double>;
template std::unique_ptr<Model<float>> make_model<float>(const ModelConfig&, std::uint64_t);
template std::unique_ptr<Model<double>> make_model<double>(const ModelConfig&, std::uint64_t);
template Tensor<float> gather_raw<float>(const RawMatrix&, std::span<const int>, double);
template Tensor<double> gather_raw<double>(const RawMatrix&, std::span<const int>, double);
template Tensor<float> row_tensor<float>(std::span<const float>, double);
template Tensor<double> row_tensor<double>(std::span<const float>, double);

}  // namespace acrec
