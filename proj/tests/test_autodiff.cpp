#include <gtest/gtest.h>

#include <cmath>

#include "fnvr/autodiff.hpp"

using namespace fnvr;
using R = double;

TEST(Ops, SigmoidAtZero) {
  Graph<R> g;
  auto y = vsigmoid(vconst(g, Tensor<R>::scalar(0.0)));
  EXPECT_DOUBLE_EQ(y.scalar(), 0.5);
}

TEST(Ops, SoftplusAtZero) {
  Graph<R> g;
  auto y = vsoftplus(vconst(g, Tensor<R>::scalar(0.0)));
  EXPECT_NEAR(y.scalar(), 0.693147, 1e-6);
}

TEST(Ops, MatmulIdentity) {
  Graph<R> g;
  Tensor<R> eye = Tensor<R>::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<R> v = Tensor<R>::from({3, 1}, {2.5, -1.0, 7.0});
  auto y = vmatmul(vconst(g, eye), vconst(g, v));
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y.t().v[i], v.v[i]);
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
  Graph<R> g;
  auto a = vconst(g, Tensor<R>::zeros({2, 3}));
  auto b = vconst(g, Tensor<R>::zeros({3, 3}));
  try {
    auto c = a + b;
    (void)c;
    FAIL() << "expected shape mismatch";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[3,3]"), std::string::npos);
  }
}

TEST(Backward, PowerRule) {
  Graph<R> g;
  auto x = vleaf(g, Tensor<R>::scalar(3.0), true);
  auto y = x * x;
  g.backward(y.id);
  EXPECT_DOUBLE_EQ(g.grad(x.id).v[0], 6.0);
}

TEST(Backward, SigmoidDerivativeAtZero) {
  Graph<R> g;
  auto x = vleaf(g, Tensor<R>::scalar(0.0), true);
  auto y = vsigmoid(x);
  g.backward(y.id);
  EXPECT_DOUBLE_EQ(g.grad(x.id).v[0], 0.25);
}

TEST(Backward, RejectsNonScalarOutput) {
  Graph<R> g;
  auto x = vleaf(g, Tensor<R>::zeros({3}), true);
  auto y = x * 2.0;
  EXPECT_THROW(g.backward(y.id), std::invalid_argument);
}

TEST(Backward, TwoLayerPerceptronMatchesFiniteDifferences) {
  // 4 -> 16 -> 1 with sigmoid hidden layer; check d(out)/d(all weights).
  Rng rng(42);
  const int in = 4, hid = 16;
  Tensor<R> x = Tensor<R>::zeros({1, in});
  for (auto& v : x.v) v = rng.uniform(-1, 1);
  Tensor<R> w2 = Tensor<R>::zeros({hid, 1});
  for (auto& v : w2.v) v = rng.normal(0, 0.5);

  Tensor<R> w1 = Tensor<R>::zeros({in, hid});
  for (auto& v : w1.v) v = rng.normal(0, 0.5);

  auto fn = [&](Graph<R>& g, Val<R> w) {
    auto h = vsigmoid(vmatmul(vconst(g, x), w));
    return vsum(vmatmul(h, vconst(g, w2)));
  };
  auto res = grad_check<R>(fn, w1, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(GradCheck, LinearExact) {
  Tensor<R> x = Tensor<R>::from({4}, {0.3, -0.7, 1.2, 0.05});
  Tensor<R> w = Tensor<R>::from({4}, {1.5, 2.0, -0.5, 3.0});
  auto fn = [&](Graph<R>& g, Val<R> p) { return vsum(p * vconst(g, w)); };
  auto res = grad_check<R>(fn, x, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-10);
}

TEST(GradCheck, CompositionSigmoidMatmul) {
  Rng rng(3);
  Tensor<R> x = Tensor<R>::zeros({1, 5});
  for (auto& v : x.v) v = rng.uniform(-1, 1);
  Tensor<R> w = Tensor<R>::zeros({5, 3});
  for (auto& v : w.v) v = rng.normal(0, 0.7);
  auto fn = [&](Graph<R>& g, Val<R> p) {
    return vsum(vsigmoid(vmatmul(vreshape(p, {1, 5}), vconst(g, w))));
  };
  Tensor<R> pt = Tensor<R>::zeros({5});
  for (auto& v : pt.v) v = rng.uniform(-1, 1);
  auto res = grad_check<R>(fn, pt, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(GradCheck, FlagsClampKink) {
  // max(x, 1) evaluated exactly at the kink: analytic subgradient (0) and the
  // central difference (0.5) disagree, so the coordinate must be flagged.
  Tensor<R> x = Tensor<R>::from({2}, {1.0, 2.0});
  auto fn = [](Graph<R>&, Val<R> p) { return vsum(vmax(p, 1.0)); };
  auto res = grad_check<R>(fn, x, 1e-4);
  ASSERT_EQ(res.suspect_coords.size(), 1u);
  EXPECT_EQ(res.suspect_coords[0], 0);
}

TEST(GradCheck, RejectsBadEpsilon) {
  Tensor<R> x = Tensor<R>::scalar(1.0);
  auto fn = [](Graph<R>&, Val<R> p) { return vsum(p); };
  EXPECT_THROW(grad_check<R>(fn, x, 0.0), std::invalid_argument);
}

TEST(Properties, AllOpsMatchFiniteDifferences) {
  for (const auto& [name, err] : op_gradient_report(7, 100))
    EXPECT_LT(err, 1e-4) << "op " << name;
}

TEST(Properties, GradientAccumulatesAcrossUses) {
  // f(x) = g(x) + g(x) must equal the duplicated single-path gradient doubled.
  Tensor<R> x = Tensor<R>::from({3}, {0.4, -0.2, 0.9});
  Graph<R> g1;
  auto a1 = vleaf(g1, x, true);
  auto path = [](Val<R> v) { return vsum(vsigmoid(v * 2.0)); };
  auto y1 = path(a1) + path(a1);
  g1.backward(y1.id);

  Graph<R> g2;
  auto a2 = vleaf(g2, x, true);
  auto y2 = path(a2);
  g2.backward(y2.id);

  for (int i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(g1.grad(a1.id).v[i], 2.0 * g2.grad(a2.id).v[i]);
}

TEST(Properties, BackwardIdempotentBitForBit) {
  Rng rng(11);
  Tensor<R> x = Tensor<R>::zeros({8});
  for (auto& v : x.v) v = rng.uniform(-2, 2);
  Graph<R> g;
  auto a = vleaf(g, x, true);
  auto y = vsum(vsigmoid(a) * vexp(a * 0.3) + vabs(a));
  g.backward(y.id);
  auto first = g.grad(a.id).v;
  g.zero_grads();
  g.backward(y.id);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(std::memcmp(&first[i], &g.grad(a.id).v[i], sizeof(R)), 0);
  }
}

TEST(Properties, CumprodGradientFiniteWithZeros) {
  Tensor<R> x = Tensor<R>::from({1, 5}, {0.5, 0.0, 2.0, 0.0, 3.0});
  Graph<R> g;
  auto a = vleaf(g, x, true);
  auto y = vsum(vcumprod(a, 1));
  g.backward(y.id);
  for (auto v : g.grad(a.id).v) EXPECT_TRUE(std::isfinite(v));
  // hand check: y = [x0, x0 x1, ...]; d/dx1 = x0 + x0 x2 + x0 x2 x3 + x0 x2 x3 x4
  EXPECT_NEAR(g.grad(a.id).v[1], 0.5 + 0.5 * 2.0 + 0.0 + 0.0, 1e-12);
}

TEST(Properties, MaxScalarKinkUsesClampedBranch) {
  Graph<R> g;
  auto x = vleaf(g, Tensor<R>::scalar(1.0), true);
  auto y = vsum(vmax(x, 1.0));  // exactly at the kink
  g.backward(y.id);
  EXPECT_DOUBLE_EQ(g.grad(x.id).v[0], 0.0);
}

TEST(Properties, RequiresGradFalseNeverAccumulates) {
  Graph<R> g;
  auto x = vleaf(g, Tensor<R>::scalar(2.0), false);
  auto w = vleaf(g, Tensor<R>::scalar(3.0), true);
  auto y = x * w;
  g.backward(y.id);
  EXPECT_DOUBLE_EQ(g.grad(x.id).v[0], 0.0);
  EXPECT_DOUBLE_EQ(g.grad(w.id).v[0], 2.0);
}

TEST(Properties, IndexSelectAndConcatRoundTrip) {
  Graph<R> g;
  Tensor<R> x = Tensor<R>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto a = vleaf(g, x, true);
  auto left = vcols(a, 0, 2);
  auto right = vcols(a, 2, 3);
  auto back = vconcat<R>({left, right}, 1);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(back.t().v[i], x.v[i]);
  auto y = vsum(back * back);
  g.backward(y.id);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(g.grad(a.id).v[i], 2.0 * x.v[i]);
}
