#include <gtest/gtest.h>

#include "fnvr/adam.hpp"

using namespace fnvr;
using R = double;

TEST(Adam, FirstStepWithUnitGradient) {
  Tensor<R> p = Tensor<R>::zeros({1});
  Tensor<R> grad = Tensor<R>::full({1}, 1.0);
  auto st = AdamState<R>::init({1}, 1e-3);
  adam_step(p, grad, st);
  EXPECT_EQ(st.t, 1);
  EXPECT_NEAR(p.v[0], -1e-3, 1e-9);  // m-hat = v-hat = 1
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor<R> p = Tensor<R>::from({3}, {0.5, -1.0, 2.0});
  Tensor<R> grad = Tensor<R>::zeros({3});
  auto st = AdamState<R>::init({3});
  adam_step(p, grad, st);
  EXPECT_DOUBLE_EQ(p.v[0], 0.5);
  EXPECT_DOUBLE_EQ(p.v[1], -1.0);
  EXPECT_DOUBLE_EQ(p.v[2], 2.0);
}

TEST(Adam, TwoConstantStepsAccumulate) {
  Tensor<R> p = Tensor<R>::zeros({1});
  Tensor<R> grad = Tensor<R>::full({1}, 1.0);
  auto st = AdamState<R>::init({1}, 1e-3);
  adam_step(p, grad, st);
  adam_step(p, grad, st);
  EXPECT_EQ(st.t, 2);
  EXPECT_NEAR(std::abs(p.v[0]), 2e-3, 1e-6);
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor<R> p = Tensor<R>::zeros({2});
  Tensor<R> grad = Tensor<R>::zeros({3});
  auto st = AdamState<R>::init({2});
  EXPECT_THROW(adam_step(p, grad, st), std::invalid_argument);
}
