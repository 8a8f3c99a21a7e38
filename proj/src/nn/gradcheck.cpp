#include "acrec/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace acrec::nn {

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, ParamSet<double>& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  params.zero_grad();
  std::uint64_t base_signs = 0;
  double base_value = 0.0;
  {
    RampSignProbe probe;
    auto l = loss();
    base_value = l.item();
    backward(l);
    base_signs = probe.fingerprint();
  }
  // Central-difference rounding noise for a loss of this magnitude.
  const double noise_floor =
      16.0 * std::numeric_limits<double>::epsilon() * (std::abs(base_value) + 1.0) / options.epsilon;

  auto evaluate = [&](std::uint64_t& signs) {
    NoGradGuard no_grad;
    RampSignProbe probe;
    const double v = loss().item();
    signs = probe.fingerprint();
    return v;
  };

  Rng rng(options.seed);
  for (auto& [name, tensor] : params.items()) {
    const std::vector<double> analytic(tensor.grad().begin(), tensor.grad().end());
    std::vector<std::size_t> coords(tensor.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.samples_per_param > 0 && coords.size() > options.samples_per_param) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.samples_per_param);
      std::sort(coords.begin(), coords.end());
    }
    double worst = 0.0;
    auto values = tensor.data();
    for (std::size_t c : coords) {
      const double saved = values[c];
      std::uint64_t s_plus = 0, s_minus = 0;
      values[c] = saved + options.epsilon;
      const double f_plus = evaluate(s_plus);
      values[c] = saved - options.epsilon;
      const double f_minus = evaluate(s_minus);
      values[c] = saved;
      if (s_plus != base_signs || s_minus != base_signs) {
        ++report.excluded;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * options.epsilon);
      const double a = analytic[c];
      if (std::abs(a) <= noise_floor && std::abs(numeric) <= noise_floor) {
        ++report.at_noise_floor;
        continue;
      }
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, err);
      ++report.checked;
    }
    report.per_param[name] = worst;
    report.global_max = std::max(report.global_max, worst);
  }
  if (report.excluded > 0) {
    report.notes = std::to_string(report.excluded) +
                   " coordinates excluded: perturbation crossed a ramp kink";
  }
  if (report.at_noise_floor > 0) {
    if (!report.notes.empty()) report.notes += "; ";
    report.notes += std::to_string(report.at_noise_floor) + " coordinates with zero gradient at rounding level";
  }
  return report;
}

}  // namespace acrec::nn
