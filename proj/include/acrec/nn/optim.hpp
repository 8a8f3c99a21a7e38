#pragma once

#include <cstdint>
#include <vector>

#include "acrec/nn/layers.hpp"

namespace acrec::nn {

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zeroed moments shaped like `params`.
  static AdamState for_params(const ParamSet<T>& params, double beta1 = 0.9, double beta2 = 0.999,
                              double epsilon = 1e-8);
};

/// One bias-corrected Adam update from the gradients currently held by
/// `params`. Throws ShapeError when the state does not match.
template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state, double lr);

/// Raw-buffer form used by tests and the parameter-free paths.
template <typename T>
void adam_step(std::vector<std::vector<T>*>& values, const std::vector<const std::vector<T>*>& grads,
               AdamState<T>& state, double lr);

}  // namespace acrec::nn
