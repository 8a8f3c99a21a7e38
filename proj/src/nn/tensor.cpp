#include "acrec/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <Eigen/Core>

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define ACREC_HAVE_MXCSR 1
#endif

#include "acrec/nn/ops.hpp"

namespace acrec::nn {

// Tensor ------------------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(int rows, int cols, bool requires_grad) {
  return from(rows, cols, std::vector<T>(static_cast<std::size_t>(rows) * cols, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(int rows, int cols, std::vector<T> values, bool requires_grad) {
  if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill [" +
                     std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

template <typename T>
std::string Tensor<T>::shape_string() const {
  return "[" + std::to_string(rows()) + ", " + std::to_string(cols()) + "]";
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
  return node_->value[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->value.size(), T(0));
  node_->backward_done = false;
}

// Thread-local switches -----------------------------------------------------------

namespace {
thread_local bool g_no_grad = false;
thread_local RampSignProbe* g_probe = nullptr;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

#ifdef ACREC_HAVE_MXCSR
FlushDenormalsGuard::FlushDenormalsGuard() : saved_(_mm_getcsr()) {
  _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
}
FlushDenormalsGuard::~FlushDenormalsGuard() { _mm_setcsr(saved_); }
#else
FlushDenormalsGuard::FlushDenormalsGuard() = default;
FlushDenormalsGuard::~FlushDenormalsGuard() = default;
#endif

RampSignProbe::RampSignProbe() : previous_(g_probe) { g_probe = this; }
RampSignProbe::~RampSignProbe() { g_probe = previous_; }
std::uint64_t RampSignProbe::fingerprint() const { return hash_; }
void RampSignProbe::record(bool positive) {
  if (!g_probe) return;
  g_probe->hash_ ^= positive ? 0x9E3779B97F4A7C15ULL : 0x2545F4914F6CDD1DULL;
  g_probe->hash_ *= 1099511628211ULL;
}

// Backward -------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss");
  }
  Node<T>* root = loss.node();
  if (root->backward_done) throw Error("backward() called twice on the same graph");
  if (!root->requires_grad) {
    root->backward_done = true;
    return;
  }
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), T(0));
  }
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward(*n);
  }
  root->backward_done = true;
}

// Ops ----------------------------------------------------------------------------

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;

template <typename T>
CMap<T> view(const Node<T>& n) {
  return CMap<T>(n.value.data(), n.rows, n.cols);
}
template <typename T>
Map<T> grad_view(Node<T>& n) {
  return Map<T>(n.grad.data(), n.rows, n.cols);
}

template <typename T>
std::shared_ptr<Node<T>> result(int rows, int cols, std::initializer_list<const Tensor<T>*> inputs) {
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(static_cast<std::size_t>(rows) * cols, T(0));
  if (!NoGradGuard::active()) {
    for (const auto* in : inputs) {
      if (in->requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
      for (const auto* in : inputs) n->parents.push_back(in->ptr());
    }
  }
  return n;
}

template <typename T>
std::shared_ptr<Node<T>> result(int rows, int cols, const std::vector<Tensor<T>>& inputs) {
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(static_cast<std::size_t>(rows) * cols, T(0));
  if (!NoGradGuard::active()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
      for (const auto& in : inputs) n->parents.push_back(in.ptr());
    }
  }
  return n;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() +
                     " differ");
  }
}

template <typename T>
bool wants(const std::shared_ptr<Node<T>>& p) {
  return p->requires_grad;
}

}  // namespace

template <typename T>
Tensor<T> constant(int rows, int cols, std::vector<T> values) {
  return Tensor<T>::from(rows, cols, std::move(values), false);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shapes " + a.shape_string() + " and " + b.shape_string() +
                     " are incompatible");
  }
  auto n = result<T>(a.rows(), b.cols(), {&a, &b});
  Map<T>(n->value.data(), n->rows, n->cols).noalias() = view(*a.node()) * view(*b.node());
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      auto dC = CMap<T>(self.grad.data(), self.rows, self.cols);
      if (wants(self.parents[0])) grad_view(A).noalias() += dC * view(B).transpose();
      if (wants(self.parents[1])) grad_view(B).noalias() += view(A).transpose() * dC;
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: shapes " + a.shape_string() + " and " + b.shape_string() +
                     " are incompatible");
  }
  auto n = result<T>(a.rows(), b.rows(), {&a, &b});
  Map<T>(n->value.data(), n->rows, n->cols).noalias() = view(*a.node()) * view(*b.node()).transpose();
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      auto dC = CMap<T>(self.grad.data(), self.rows, self.cols);
      if (wants(self.parents[0])) grad_view(A).noalias() += dC * view(B);
      if (wants(self.parents[1])) grad_view(B).noalias() += dC.transpose() * view(A);
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  auto n = result<T>(a.rows(), a.cols(), {&a, &b});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] + b.data()[i];
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      for (auto& p : self.parents) {
        if (!wants(p)) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  auto n = result<T>(a.rows(), a.cols(), {&a, &b});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] - b.data()[i];
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      if (wants(self.parents[0])) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
      }
      if (wants(self.parents[1])) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[1]->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  auto n = result<T>(a.rows(), a.cols(), {&a, &b});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * b.data()[i];
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * B.value[i];
      }
      if (B.requires_grad) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i] += self.grad[i] * A.value[i];
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto n = result<T>(a.rows(), a.cols(), {&a});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * factor;
  if (n->requires_grad) {
    n->backward = [factor](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * factor;
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: shapes " + a.shape_string() + " and " + row.shape_string() +
                     " are incompatible");
  }
  auto n = result<T>(a.rows(), a.cols(), {&a, &row});
  const auto c = static_cast<std::size_t>(a.cols());
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] + row.data()[i % c];
  if (n->requires_grad) {
    n->backward = [c](Node<T>& self) {
      if (wants(self.parents[0])) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
      }
      if (wants(self.parents[1])) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[1]->grad[i % c] += self.grad[i];
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& row, int count) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected a row, got " + row.shape_string());
  auto n = result<T>(count, row.cols(), {&row});
  const auto c = static_cast<std::size_t>(row.cols());
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = row.data()[i % c];
  if (n->requires_grad) {
    n->backward = [c](Node<T>& self) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i % c] += self.grad[i];
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> ramp(const Tensor<T>& a) {
  auto n = result<T>(a.rows(), a.cols(), {&a});
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    const T x = a.data()[i];
    RampSignProbe::record(x > T(0));
    n->value[i] = x > T(0) ? x : T(0);
  }
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (A.value[i] > T(0)) A.grad[i] += self.grad[i];
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto n = result<T>(a.rows(), a.cols(), {&a});
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    const T x = a.data()[i];
    n->value[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.value[i];
        A.grad[i] += self.grad[i] * y * (T(1) - y);
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> log_sigmoid(const Tensor<T>& a) {
  auto n = result<T>(a.rows(), a.cols(), {&a});
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    const T x = a.data()[i];
    n->value[i] = x >= T(0) ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T x = A.value[i];
        // d/dx log(sigmoid(x)) = sigmoid(-x)
        const T s = x >= T(0) ? std::exp(-x) / (T(1) + std::exp(-x)) : T(1) / (T(1) + std::exp(x));
        A.grad[i] += self.grad[i] * s;
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, std::span<const std::uint8_t> key_keep, bool causal) {
  if (!key_keep.empty() && key_keep.size() != static_cast<std::size_t>(a.cols())) {
    throw ShapeError("softmax_rows: mask length " + std::to_string(key_keep.size()) +
                     " does not match " + a.shape_string());
  }
  auto n = result<T>(a.rows(), a.cols(), {&a});
  const int R = a.rows(), C = a.cols();
  auto keep = [&, causal](int r, int c) {
    return (key_keep.empty() || key_keep[static_cast<std::size_t>(c)]) && (!causal || c <= r);
  };
  for (int r = 0; r < R; ++r) {
    const T* x = a.data().data() + static_cast<std::size_t>(r) * C;
    T* y = n->value.data() + static_cast<std::size_t>(r) * C;
    T mx = -std::numeric_limits<T>::infinity();
    for (int c = 0; c < C; ++c) {
      if (keep(r, c)) mx = std::max(mx, x[c]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked row stays zero
    T total = 0;
    for (int c = 0; c < C; ++c) {
      y[c] = keep(r, c) ? std::exp(x[c] - mx) : T(0);
      total += y[c];
    }
    for (int c = 0; c < C; ++c) y[c] /= total;
  }
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      const auto C = static_cast<std::size_t>(self.cols);
      for (std::size_t r = 0; r < static_cast<std::size_t>(self.rows); ++r) {
        const T* y = self.value.data() + r * C;
        const T* dy = self.grad.data() + r * C;
        T dot = 0;
        for (std::size_t c = 0; c < C; ++c) dot += y[c] * dy[c];
        for (std::size_t c = 0; c < C; ++c) A.grad[r * C + c] += y[c] * (dy[c] - dot);
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (gamma.rows() != 1 || gamma.cols() != a.cols() || beta.rows() != 1 || beta.cols() != a.cols()) {
    throw ShapeError("layer_norm_rows: gain/bias " + gamma.shape_string() + "/" + beta.shape_string() +
                     " do not match " + a.shape_string());
  }
  auto n = result<T>(a.rows(), a.cols(), {&a, &gamma, &beta});
  const auto R = static_cast<std::size_t>(a.rows());
  const auto C = static_cast<std::size_t>(a.cols());
  auto xhat = std::make_shared<std::vector<T>>(R * C);
  auto inv_std = std::make_shared<std::vector<T>>(R);
  for (std::size_t r = 0; r < R; ++r) {
    const T* x = a.data().data() + r * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += x[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<T>(C);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (x[c] - mu) * is;
      (*xhat)[r * C + c] = h;
      n->value[r * C + c] = gamma.data()[c] * h + beta.data()[c];
    }
  }
  if (n->requires_grad) {
    n->backward = [xhat, inv_std, R, C](Node<T>& self) {
      auto& A = *self.parents[0];
      auto& G = *self.parents[1];
      auto& B = *self.parents[2];
      for (std::size_t r = 0; r < R; ++r) {
        const T* dy = self.grad.data() + r * C;
        const T* h = xhat->data() + r * C;
        if (G.requires_grad) {
          for (std::size_t c = 0; c < C; ++c) G.grad[c] += dy[c] * h[c];
        }
        if (B.requires_grad) {
          for (std::size_t c = 0; c < C; ++c) B.grad[c] += dy[c];
        }
        if (A.requires_grad) {
          T sum_dh = 0, sum_dh_h = 0;
          for (std::size_t c = 0; c < C; ++c) {
            const T dh = dy[c] * G.value[c];
            sum_dh += dh;
            sum_dh_h += dh * h[c];
          }
          const T k = (*inv_std)[r] / static_cast<T>(C);
          for (std::size_t c = 0; c < C; ++c) {
            const T dh = dy[c] * G.value[c];
            A.grad[r * C + c] += k * (static_cast<T>(C) * dh - sum_dh - h[c] * sum_dh_h);
          }
        }
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return a;
  auto n = result<T>(a.rows(), a.cols(), {&a});
  auto mask = std::make_shared<std::vector<T>>(a.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < a.size(); ++i) {
    (*mask)[i] = rng.uniform01() >= p ? keep_scale : T(0);
    n->value[i] = a.data()[i] * (*mask)[i];
  }
  if (n->requires_grad) {
    n->backward = [mask](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * (*mask)[i];
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int R = parts.front().rows();
  int C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R) {
      throw ShapeError("concat_cols: shapes " + parts.front().shape_string() + " and " +
                       p.shape_string() + " have different row counts");
    }
    C += p.cols();
  }
  auto n = result<T>(R, C, parts);
  int offset = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    for (int r = 0; r < R; ++r) {
      std::copy_n(p.data().data() + static_cast<std::size_t>(r) * p.cols(), p.cols(),
                  n->value.data() + static_cast<std::size_t>(r) * C + offset);
    }
    offset += p.cols();
  }
  if (n->requires_grad) {
    n->backward = [offsets](Node<T>& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        auto& P = *self.parents[k];
        if (!P.requires_grad) continue;
        for (int r = 0; r < self.rows; ++r) {
          const T* src = self.grad.data() + static_cast<std::size_t>(r) * self.cols + offsets[k];
          T* dst = P.grad.data() + static_cast<std::size_t>(r) * P.cols;
          for (int c = 0; c < P.cols; ++c) dst[c] += src[c];
        }
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int C = parts.front().cols();
  int R = 0;
  for (const auto& p : parts) {
    if (p.cols() != C) {
      throw ShapeError("concat_rows: shapes " + parts.front().shape_string() + " and " +
                       p.shape_string() + " have different column counts");
    }
    R += p.rows();
  }
  auto n = result<T>(R, C, parts);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), n->value.begin() + static_cast<long>(offset));
    offset += p.size();
  }
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
        }
        off += p->value.size();
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + a.shape_string());
  }
  auto n = result<T>(a.rows(), count, {&a});
  for (int r = 0; r < a.rows(); ++r) {
    std::copy_n(a.data().data() + static_cast<std::size_t>(r) * a.cols() + start, count,
                n->value.data() + static_cast<std::size_t>(r) * count);
  }
  if (n->requires_grad) {
    n->backward = [start](Node<T>& self) {
      auto& A = *self.parents[0];
      for (int r = 0; r < self.rows; ++r) {
        for (int c = 0; c < self.cols; ++c) {
          A.grad[static_cast<std::size_t>(r) * A.cols + start + c] +=
              self.grad[static_cast<std::size_t>(r) * self.cols + c];
        }
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + a.shape_string());
  }
  auto n = result<T>(count, a.cols(), {&a});
  const auto off = static_cast<std::size_t>(start) * a.cols();
  std::copy_n(a.data().data() + off, n->value.size(), n->value.data());
  if (n->requires_grad) {
    n->backward = [off](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[off + i] += self.grad[i];
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> indices) {
  for (int i : indices) {
    if (i < 0 || i >= table.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       table.shape_string());
    }
  }
  auto n = result<T>(static_cast<int>(indices.size()), table.cols(), {&table});
  const auto C = static_cast<std::size_t>(table.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::copy_n(table.data().data() + static_cast<std::size_t>(indices[k]) * C, C,
                n->value.data() + k * C);
  }
  if (n->requires_grad) {
    n->backward = [idx = std::vector<int>(indices.begin(), indices.end()), C](Node<T>& self) {
      auto& A = *self.parents[0];
      for (std::size_t k = 0; k < idx.size(); ++k) {
        for (std::size_t c = 0; c < C; ++c) {
          A.grad[static_cast<std::size_t>(idx[k]) * C + c] += self.grad[k * C + c];
        }
      }
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto n = result<T>(1, 1, {&a});
  T total = 0;
  for (T v : a.data()) total += v;
  n->value[0] = total;
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& A = *self.parents[0];
      for (auto& g : A.grad) g += self.grad[0];
    };
  }
  return Tensor<T>(n);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

#define ACREC_INSTANTIATE_OPS(T)                                                              \
  template class Tensor<T>;                                                                   \
  template void backward<T>(const Tensor<T>&);                                                \
  template Tensor<T> constant<T>(int, int, std::vector<T>);                                   \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> add_row<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> repeat_rows<T>(const Tensor<T>&, int);                                   \
  template Tensor<T> ramp<T>(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                            \
  template Tensor<T> log_sigmoid<T>(const Tensor<T>&);                                        \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&, std::span<const std::uint8_t>, bool);  \
  template Tensor<T> layer_norm_rows<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        T);                                                   \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, Rng&);                        \
  template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> slice_cols<T>(const Tensor<T>&, int, int);                               \
  template Tensor<T> slice_rows<T>(const Tensor<T>&, int, int);                               \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const int>);                  \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean<T>(const Tensor<T>&);

ACREC_INSTANTIATE_OPS(float)
ACREC_INSTANTIATE_OPS(double)

}  // namespace acrec::nn
