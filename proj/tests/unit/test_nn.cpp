#include <gtest/gtest.h>

#include <cmath>

#include "acrec/error.hpp"
#include "acrec/nn/blob.hpp"
#include "acrec/nn/gradcheck.hpp"
#include "acrec/nn/layers.hpp"
#include "acrec/nn/optim.hpp"

using namespace acrec;
using namespace acrec::nn;

namespace {

using T = Tensor<double>;

T random_const(int r, int c, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(r) * c);
  for (auto& x : v) x = rng.normal();
  return T::from(r, c, v);
}

// Scalar probe: sum(out .* W) for a fixed random W of the same shape.
double probe_loss_check(const std::function<T()>& f, ParamSet<double>& params) {
  Rng rng(99);
  auto shape = f();
  auto w = random_const(shape.rows(), shape.cols(), rng);
  auto report = grad_check([&] { return sum(mul(f(), w)); }, params, {1e-5, 0, 3});
  EXPECT_GT(report.checked, 0u);
  return report.global_max;
}

}  // namespace

TEST(Tensor, MatmulValues) {
  auto a = T::from(2, 3, {1, 2, 3, 4, 5, 6});
  auto b = T::from(3, 2, {7, 8, 9, 10, 11, 12});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (std::vector<int>{2, 2}));
  EXPECT_DOUBLE_EQ(c.at(0, 0), 58);
  EXPECT_DOUBLE_EQ(c.at(1, 1), 154);
  EXPECT_THROW(matmul(a, a), ShapeError);
  auto nt = matmul_nt(a, a);
  EXPECT_DOUBLE_EQ(nt.at(0, 1), 32);
}

TEST(Tensor, SoftmaxMaskAndCausal) {
  auto a = T::from(2, 3, {1, 2, 3, 1, 2, 3});
  std::vector<std::uint8_t> keep = {1, 0, 1};
  auto s = softmax_rows(a, keep);
  EXPECT_DOUBLE_EQ(s.at(0, 1), 0.0);
  EXPECT_NEAR(s.at(0, 0) + s.at(0, 2), 1.0, 1e-15);
  auto c = softmax_rows(a, {}, true);
  EXPECT_DOUBLE_EQ(c.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.at(0, 1), 0.0);
  std::vector<std::uint8_t> none = {0, 0, 0};
  auto z = softmax_rows(a, none);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, LogSigmoidStable) {
  auto a = T::from(1, 3, {-800, 0, 800});
  auto l = log_sigmoid(a);
  EXPECT_NEAR(l.at(0, 0), -800, 1e-9);
  EXPECT_NEAR(l.at(0, 1), -std::log(2.0), 1e-15);
  EXPECT_NEAR(l.at(0, 2), 0.0, 1e-15);
}

TEST(Tensor, DropoutIdentityAtInference) {
  Rng rng(1);
  auto a = T::from(1, 4, {1, 2, 3, 4});
  auto d = dropout(a, 0.5, false, rng);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(d.at(0, i), a.at(0, i));
  auto t = dropout(a, 0.5, true, rng);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(t.at(0, i) == 0.0 || t.at(0, i) == 2 * a.at(0, i));
}

TEST(Tensor, BackwardTwiceThrows) {
  auto x = T::from(1, 2, {1, 2}, true);
  auto l = sum(mul(x, x));
  backward(l);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  EXPECT_ANY_THROW(backward(l));
}

TEST(GradCheck, ElementwiseOps) {
  ParamSet<double> p;
  Rng rng(2);
  auto x = p.add_uniform("x", 3, 4, 1.0, rng);
  auto y = p.add_uniform("y", 3, 4, 1.0, rng);
  auto row = p.add_uniform("row", 1, 4, 1.0, rng);
  std::vector<int> idx = {2, 0, 2};
  auto f = [&] {
    auto a = add(mul(x, y), scale(sub(x, y), 0.7));
    auto b = add_row(sigmoid(a), row);
    auto c = concat_cols<double>({log_sigmoid(b), ramp(slice_cols(a, 1, 2))});
    auto d = concat_rows<double>({c, gather_rows(c, idx), repeat_rows(slice_rows(c, 0, 1), 2)});
    return d;
  };
  EXPECT_LT(probe_loss_check(f, p), 1e-6);
}

TEST(GradCheck, SoftmaxAndLayerNorm) {
  ParamSet<double> p;
  Rng rng(3);
  auto x = p.add_uniform("x", 4, 6, 2.0, rng);
  auto g = p.add_uniform("gain", 1, 6, 1.0, rng);
  auto b = p.add_uniform("bias", 1, 6, 1.0, rng);
  std::vector<std::uint8_t> keep = {1, 1, 0, 1, 1, 1};
  auto f = [&] {
    return concat_cols<double>({softmax_rows(x, keep), softmax_rows(x, {}, true),
                                layer_norm_rows(x, g, b)});
  };
  EXPECT_LT(probe_loss_check(f, p), 1e-6);
}

TEST(GradCheck, LinearAndMean) {
  ParamSet<double> p;
  Rng rng(4);
  Linear<double> lin(p, "lin", 5, 3, true, rng);
  auto x = p.add_uniform("x", 2, 5, 1.0, rng);
  auto f = [&] { return mean(lin(x)); };
  EXPECT_LT(grad_check(f, p, {1e-5, 0, 1}).global_max, 1e-6);
}

TEST(GradCheck, AttentionAndBlock) {
  ParamSet<double> p;
  Rng rng(5);
  MultiHeadSelfAttention<double> att(p, "att", 8, 2, rng);
  TransformerBlock<double> block(p, "blk", 8, 2, 12, 0.0, rng);
  auto x = p.add_uniform("x", 5, 8, 1.0, rng);
  std::vector<std::uint8_t> keep = {0, 1, 1, 1, 1};
  auto f = [&] {
    Rng r(0);
    return block(att(x, keep, false), keep, false, false, r);
  };
  EXPECT_LT(probe_loss_check(f, p), 1e-5);
}

TEST(Layers, AttentionHeadDivisibility) {
  ParamSet<double> p;
  Rng rng(0);
  EXPECT_THROW(MultiHeadSelfAttention<double>(p, "a", 10, 4, rng), ConfigError);
}

TEST(Layers, DuplicateParamName) {
  ParamSet<float> p;
  p.add_zeros("w", 1, 1);
  EXPECT_THROW(p.add_zeros("w", 1, 1), ConfigError);
}

TEST(Layers, PositionalEncoding) {
  auto pe = sinusoidal_positional_encoding(30, 128);
  ASSERT_EQ(pe.size(), 30u * 128u);
  EXPECT_DOUBLE_EQ(pe[0], 0.0);
  EXPECT_DOUBLE_EQ(pe[1], 1.0);
  const int pos = 7, i = 3;
  EXPECT_NEAR(pe[pos * 128 + 2 * i], std::sin(pos / std::pow(10000.0, 2.0 * i / 128)), 1e-15);
  EXPECT_NEAR(pe[pos * 128 + 2 * i + 1], std::cos(pos / std::pow(10000.0, 2.0 * i / 128)), 1e-15);
  EXPECT_THROW(sinusoidal_positional_encoding(3, 5), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> v = {1.0, -2.0, 0.5};
  std::vector<double> g = {0.3, -4.0, 1e-3};
  std::vector<std::vector<double>*> values = {&v};
  std::vector<const std::vector<double>*> grads = {&g};
  AdamState<double> state;
  state.first_moment = {{0, 0, 0}};
  state.second_moment = {{0, 0, 0}};
  adam_step(values, grads, state, 0.1);
  // Bias-corrected first step is lr * g / (|g| + eps').
  EXPECT_NEAR(v[0], 0.9, 1e-6);
  EXPECT_NEAR(v[1], -1.9, 1e-6);
  EXPECT_NEAR(v[2], 0.4, 1e-4);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, MinimisesQuadratic) {
  ParamSet<double> p;
  auto x = p.add("x", 1, 2, {3.0, -5.0});
  auto state = AdamState<double>::for_params(p);
  for (int i = 0; i < 3000; ++i) {
    p.zero_grad();
    backward(sum(mul(x, x)));
    adam_step(p, state, 0.01);
  }
  EXPECT_NEAR(x.at(0, 0), 0.0, 1e-2);
  EXPECT_NEAR(x.at(0, 1), 0.0, 1e-2);
}

TEST(Adam, StateMismatch) {
  ParamSet<double> a, b;
  a.add_zeros("x", 1, 2);
  b.add_zeros("x", 1, 3);
  auto state = AdamState<double>::for_params(b);
  EXPECT_THROW(adam_step(a, state, 0.1), ShapeError);
}

TEST(Blob, RoundTripAndValidation) {
  ParamSet<float> p;
  Rng rng(6);
  p.add_uniform("a", 2, 3, 1.0, rng);
  p.add_uniform("b", 1, 4, 1.0, rng);
  auto packed = pack(p);
  EXPECT_EQ(packed.bytes.size(), 10u * 4u);
  EXPECT_EQ(entries_from_json(to_json(packed.entries)), packed.entries);

  ParamSet<float> q;
  q.add_zeros("a", 2, 3);
  q.add_zeros("b", 1, 4);
  unpack(packed.entries, packed.bytes, q);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto x = p.items()[i].second.data();
    auto y = q.items()[i].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }

  ParamSet<float> wrong;
  wrong.add_zeros("a", 3, 2);
  wrong.add_zeros("b", 1, 4);
  EXPECT_ANY_THROW(unpack(packed.entries, packed.bytes, wrong));
  for (float v : wrong.items()[0].second.data()) EXPECT_EQ(v, 0.0f);

  auto short_bytes = packed.bytes;
  short_bytes.pop_back();
  EXPECT_ANY_THROW(unpack(packed.entries, short_bytes, q));
}

TEST(ParamSet, CopyValuesAcrossPrecision) {
  ParamSet<float> f;
  Rng rng(8);
  f.add_uniform("w", 2, 2, 1.0, rng);
  ParamSet<double> d;
  d.add_zeros("w", 2, 2);
  d.copy_values_from(f);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(d.items()[0].second.data()[i], f.items()[0].second.data()[i]);
}
