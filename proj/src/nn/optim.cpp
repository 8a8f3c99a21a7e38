#include "acrec/nn/optim.hpp"

#include <cmath>

namespace acrec::nn {

template <typename T>
AdamState<T> AdamState<T>::for_params(const ParamSet<T>& params, double beta1, double beta2,
                                      double epsilon) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const auto& [_, t] : params.items()) {
    s.first_moment.emplace_back(t.size(), T(0));
    s.second_moment.emplace_back(t.size(), T(0));
  }
  return s;
}

namespace {

template <typename T>
void update(std::span<T> value, std::span<const T> grad, std::vector<T>& m, std::vector<T>& v,
            const AdamState<T>& s, double lr) {
  if (value.size() != grad.size() || value.size() != m.size() || value.size() != v.size()) {
    throw ShapeError("adam: buffer of " + std::to_string(value.size()) +
                     " values does not match gradient/moments of " + std::to_string(grad.size()) +
                     "/" + std::to_string(m.size()));
  }
  const double t = static_cast<double>(s.step_count);
  const T b1 = static_cast<T>(s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(s.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(s.beta2, t));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(s.epsilon);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    value[i] -= step * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state, double lr) {
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, parameter set has " + std::to_string(params.size()));
  }
  ++state.step_count;
  std::size_t i = 0;
  for (auto& [_, t] : params.items()) {
    update<T>(t.data(), t.grad(), state.first_moment[i], state.second_moment[i], state, lr);
    ++i;
  }
}

template <typename T>
void adam_step(std::vector<std::vector<T>*>& values, const std::vector<const std::vector<T>*>& grads,
               AdamState<T>& state, double lr) {
  if (values.size() != grads.size()) throw ShapeError("adam: values and gradients differ in count");
  if (state.first_moment.empty()) {
    for (auto* v : values) {
      state.first_moment.emplace_back(v->size(), T(0));
      state.second_moment.emplace_back(v->size(), T(0));
    }
  }
  if (state.first_moment.size() != values.size()) throw ShapeError("adam: state size mismatch");
  ++state.step_count;
  for (std::size_t i = 0; i < values.size(); ++i) {
    update<T>(std::span<T>(*values[i]), std::span<const T>(*grads[i]), state.first_moment[i],
              state.second_moment[i], state, lr);
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParamSet<float>&, AdamState<float>&, double);
template void adam_step<double>(ParamSet<double>&, AdamState<double>&, double);
template void adam_step<float>(std::vector<std::vector<float>*>&,
                               const std::vector<const std::vector<float>*>&, AdamState<float>&,
                               double);
template void adam_step<double>(std::vector<std::vector<double>*>&,
                                const std::vector<const std::vector<double>*>&, AdamState<double>&,
                                double);

}  // namespace acrec::nn
