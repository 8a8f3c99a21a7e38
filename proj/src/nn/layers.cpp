#include "acrec/nn/layers.hpp"

#include <cmath>

namespace acrec::nn {

template <typename T>
Tensor<T> ParamSet<T>::add(const std::string& name, int rows, int cols, std::vector<T> init) {
  for (const auto& [n, _] : items_) {
    if (n == name) throw ConfigError("duplicate parameter name: " + name);
  }
  auto t = Tensor<T>::from(rows, cols, std::move(init), true);
  items_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParamSet<T>::add_uniform(const std::string& name, int rows, int cols, double limit,
                                   Rng& rng) {
  std::vector<T> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = static_cast<T>((2.0 * rng.uniform01() - 1.0) * limit);
  return add(name, rows, cols, std::move(v));
}

template <typename T>
Tensor<T> ParamSet<T>::add_zeros(const std::string& name, int rows, int cols) {
  return add(name, rows, cols, std::vector<T>(static_cast<std::size_t>(rows) * cols, T(0)));
}

template <typename T>
Tensor<T> ParamSet<T>::add_ones(const std::string& name, int rows, int cols) {
  return add(name, rows, cols, std::vector<T>(static_cast<std::size_t>(rows) * cols, T(1)));
}

template <typename T>
Tensor<T> ParamSet<T>::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw NotFoundError("no parameter named " + name);
}

template <typename T>
std::size_t ParamSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.size();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

template <typename T>
template <typename U>
void ParamSet<T>::copy_values_from(const ParamSet<U>& other) {
  if (other.size() != size()) throw ShapeError("parameter sets differ in size");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& [name, dst] = items_[i];
    const auto& [oname, src] = other.items()[i];
    if (name != oname || dst.rows() != src.rows() || dst.cols() != src.cols()) {
      throw ShapeError("parameter " + name + dst.shape_string() + " does not match " + oname +
                       src.shape_string());
    }
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(s[k]);
  }
}

template <typename T>
Linear<T>::Linear(ParamSet<T>& params, const std::string& name, int in, int out, bool bias,
                  Rng& rng)
    : in_(in), out_(out) {
  const double limit = std::sqrt(6.0 / (in + out));
  weight_ = params.add_uniform(name + ".W", in, out, limit, rng);
  if (bias) bias_ = params.add_zeros(name + ".b", 1, out);
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  auto y = matmul(x, weight_);
  return bias_.defined() ? add_row(y, bias_) : y;
}

template <typename T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(ParamSet<T>& params, const std::string& name,
                                                  int hidden, int heads, Rng& rng)
    : hidden_(hidden), heads_(heads) {
  if (heads <= 0 || hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  q_ = Linear<T>(params, name + ".q", hidden, hidden, true, rng);
  k_ = Linear<T>(params, name + ".k", hidden, hidden, false, rng);
  v_ = Linear<T>(params, name + ".v", hidden, hidden, true, rng);
  o_ = Linear<T>(params, name + ".o", hidden, hidden, true, rng);
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::operator()(const Tensor<T>& x,
                                                std::span<const std::uint8_t> key_keep,
                                                bool causal) const {
  if (x.cols() != hidden_) {
    throw ShapeError("attention input " + x.shape_string() + " does not have " +
                     std::to_string(hidden_) + " columns");
  }
  const int dk = hidden_ / heads_;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
  auto q = q_(x);
  auto k = k_(x);
  auto v = v_(x);
  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    auto qh = slice_cols(q, h * dk, dk);
    auto kh = slice_cols(k, h * dk, dk);
    auto vh = slice_cols(v, h * dk, dk);
    auto weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_keep, causal);
    outs.push_back(matmul(weights, vh));
  }
  return o_(heads_ == 1 ? outs.front() : concat_cols(outs));
}

template <typename T>
TransformerBlock<T>::TransformerBlock(ParamSet<T>& params, const std::string& name, int hidden,
                                      int heads, int ffn_inner, double dropout, Rng& rng)
    : dropout_(dropout) {
  attention_ = MultiHeadSelfAttention<T>(params, name + ".attn", hidden, heads, rng);
  ln1_gain_ = params.add_ones(name + ".ln1.g", 1, hidden);
  ln1_bias_ = params.add_zeros(name + ".ln1.b", 1, hidden);
  ffn_in_ = Linear<T>(params, name + ".ffn1", hidden, ffn_inner, true, rng);
  ffn_out_ = Linear<T>(params, name + ".ffn2", ffn_inner, hidden, true, rng);
  ln2_gain_ = params.add_ones(name + ".ln2.g", 1, hidden);
  ln2_bias_ = params.add_zeros(name + ".ln2.b", 1, hidden);
}

template <typename T>
Tensor<T> TransformerBlock<T>::operator()(const Tensor<T>& x,
                                          std::span<const std::uint8_t> key_keep, bool causal,
                                          bool training, Rng& rng) const {
  auto a = dropout(attention_(x, key_keep, causal), dropout_, training, rng);
  auto h = layer_norm_rows(add(x, a), ln1_gain_, ln1_bias_);
  auto f = dropout(ffn_out_(ramp(ffn_in_(h))), dropout_, training, rng);
  return layer_norm_rows(add(h, f), ln2_gain_, ln2_bias_);
}

std::vector<double> sinusoidal_positional_encoding(int m, int h) {
  if (h <= 0 || h % 2 != 0) throw ConfigError("positional encoding width must be even");
  std::vector<double> pe(static_cast<std::size_t>(m) * h);
  for (int pos = 0; pos < m; ++pos) {
    for (int i = 0; i < h / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / h);
      pe[static_cast<std::size_t>(pos) * h + 2 * i] = std::sin(angle);
      pe[static_cast<std::size_t>(pos) * h + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

template class ParamSet<float>;
template class ParamSet<double>;
template void ParamSet<float>::copy_values_from<double>(const ParamSet<double>&);
template void ParamSet<double>::copy_values_from<float>(const ParamSet<float>&);
template void ParamSet<float>::copy_values_from<float>(const ParamSet<float>&);
template void ParamSet<double>::copy_values_from<double>(const ParamSet<double>&);
template class Linear<float>;
template class Linear<double>;
template class MultiHeadSelfAttention<float>;
template class MultiHeadSelfAttention<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;

}  // namespace acrec::nn
