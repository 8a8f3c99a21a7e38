#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acrec/nn/tensor.hpp"
#include "acrec/rng.hpp"

namespace acrec::nn {

template <typename T> Tensor<T> constant(int rows, int cols, std::vector<T> values);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a * b^T
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// a (n x c) + row (1 x c) broadcast over rows.
template <typename T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);
/// Repeats a 1 x c row n times.
template <typename T> Tensor<T> repeat_rows(const Tensor<T>& row, int n);

/// max(0, x); subgradient 0 at exactly 0.
template <typename T> Tensor<T> ramp(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
/// log(sigmoid(x)), evaluated without overflow.
template <typename T> Tensor<T> log_sigmoid(const Tensor<T>& a);

/// Row-wise softmax. `key_keep` (length cols, optional) masks columns; with
/// `causal`, row i only sees columns <= i. Fully masked rows produce zeros.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, std::span<const std::uint8_t> key_keep = {},
                       bool causal = false);

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5));

/// Inverted dropout; identity when !training or p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& a, double p, bool training, Rng& rng);

template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, int start, int count);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, int start, int count);

/// Rows of `table` selected by `indices` (embedding lookup).
template <typename T> Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> indices);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

}  // namespace acrec::nn
