#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acrec/error.hpp"

namespace acrec::nn {

template <typename T>
struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Row-major matrix with an optional gradient and a link into the graph that
/// produced it. Vectors are 1 x n. Copies share the underlying node.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<int> shape() const { return {node_->rows, node_->cols}; }
  std::string shape_string() const;

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * cols() + c]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient buffer; zeros when nothing has flowed into this tensor yet.
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

/// Flushes subnormal floats to zero on this thread while alive (x86 only;
/// a no-op elsewhere).
class FlushDenormalsGuard {
 public:
  FlushDenormalsGuard();
  ~FlushDenormalsGuard();
  FlushDenormalsGuard(const FlushDenormalsGuard&) = delete;
  FlushDenormalsGuard& operator=(const FlushDenormalsGuard&) = delete;

 private:
  unsigned int saved_ = 0;
};

/// Fingerprint of every ramp input sign seen while a probe is active on this
/// thread. The gradient checker uses it to detect perturbations that cross
/// the ramp kink.
class RampSignProbe {
 public:
  RampSignProbe();
  ~RampSignProbe();
  RampSignProbe(const RampSignProbe&) = delete;
  RampSignProbe& operator=(const RampSignProbe&) = delete;

  std::uint64_t fingerprint() const;
  static void record(bool positive);

 private:
  RampSignProbe* previous_;
  std::uint64_t hash_ = 1469598103934665603ULL;
};

/// Reverse-mode sweep from a 1 x 1 loss. Gradients accumulate into every
/// reachable tensor that requires them. Throws if called twice on the same
/// loss.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace acrec::nn
