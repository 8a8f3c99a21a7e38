#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acrec/nn/ops.hpp"
#include "acrec/rng.hpp"

namespace acrec::nn {

/// Named trainable tensors in registration order.
template <typename T>
class ParamSet {
 public:
  /// Registers a rows x cols parameter. Throws ConfigError on a duplicate name.
  Tensor<T> add(const std::string& name, int rows, int cols, std::vector<T> init);
  Tensor<T> add_uniform(const std::string& name, int rows, int cols, double limit, Rng& rng);
  Tensor<T> add_zeros(const std::string& name, int rows, int cols);
  Tensor<T> add_ones(const std::string& name, int rows, int cols);

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
  Tensor<T> get(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t count() const;

  void zero_grad();

  /// Copies values by name (and shape) from another set, converting precision.
  template <typename U>
  void copy_values_from(const ParamSet<U>& other);

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

/// y = x W (+ b). W is in x out.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<T>& params, const std::string& name, int in, int out, bool bias, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;

  int in() const { return in_; }
  int out() const { return out_; }
  const Tensor<T>& weight() const { return weight_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  /// Throws ConfigError when `hidden` is not divisible by `heads`.
  MultiHeadSelfAttention(ParamSet<T>& params, const std::string& name, int hidden, int heads,
                         Rng& rng);

  /// X is m x hidden. `key_keep[j] == 0` hides position j from every query.
  Tensor<T> operator()(const Tensor<T>& x, std::span<const std::uint8_t> key_keep = {},
                       bool causal = false) const;

  int heads() const { return heads_; }

 private:
  int hidden_ = 0;
  int heads_ = 0;
  Linear<T> q_, k_, v_, o_;
};

/// Post-LN encoder block: LN(x + Drop(MHSA(x))), then LN(h + Drop(FFN(h))).
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParamSet<T>& params, const std::string& name, int hidden, int heads,
                   int ffn_inner, double dropout, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x, std::span<const std::uint8_t> key_keep, bool causal,
                       bool training, Rng& rng) const;

 private:
  double dropout_ = 0.0;
  MultiHeadSelfAttention<T> attention_;
  Linear<T> ffn_in_, ffn_out_;
  Tensor<T> ln1_gain_, ln1_bias_, ln2_gain_, ln2_bias_;
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/h)), PE[pos, 2i+1] = cos(same). Row-major m x h.
/// Throws ConfigError for odd h.
std::vector<double> sinusoidal_positional_encoding(int m, int h);

}  // namespace acrec::nn
