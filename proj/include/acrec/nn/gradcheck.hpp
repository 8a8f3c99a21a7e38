#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "acrec/nn/layers.hpp"

namespace acrec::nn {

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t samples_per_param = 16;  // 0 checks every coordinate
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::map<std::string, double> per_param;  // max relative error per tensor
  double global_max = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose perturbation flipped a ramp input sign.
  std::size_t excluded = 0;
  /// Coordinates where analytic and numeric gradients are both below the
  /// central-difference rounding noise; counted as exact.
  std::size_t at_noise_floor = 0;
  std::string notes;
};

/// Central finite differences against backward() for a scalar function of
/// `params`. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8),
/// except where both sit under 16 * eps_machine * (|f| + 1) / epsilon.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, ParamSet<double>& params,
                           const GradCheckOptions& options = {});

}  // namespace acrec::nn
