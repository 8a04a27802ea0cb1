#pragma once

#include <cmath>

#include "fnvr/tensor.hpp"

namespace fnvr {

template <class Real>
struct AdamState {
  Tensor<Real> m, v;
  int64_t t = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const Shape& shape, double lr = 5e-4) {
    AdamState s;
    s.m = Tensor<Real>::zeros(shape);
    s.v = Tensor<Real>::zeros(shape);
    s.lr = lr;
    return s;
  }
};

// Standard Adam update with bias correction; increments state.t.
template <class Real>
void adam_step(Tensor<Real>& params, const Tensor<Real>& grads, AdamState<Real>& state) {
  if (params.shape != grads.shape)
    throw std::invalid_argument("adam_step: shape mismatch " + shape_str(params.shape) + " vs " +
                                shape_str(grads.shape));
  if (params.shape != state.m.shape || params.shape != state.v.shape)
    throw std::invalid_argument("adam_step: state shape mismatch " + shape_str(params.shape) +
                                " vs " + shape_str(state.m.shape));
  ++state.t;
  const Real b1 = static_cast<Real>(state.beta1);
  const Real b2 = static_cast<Real>(state.beta2);
  const Real c1 = Real(1) / static_cast<Real>(1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
  const Real c2 = Real(1) / static_cast<Real>(1.0 - std::pow(state.beta2, static_cast<double>(state.t)));
  const Real lr = static_cast<Real>(state.lr);
  const Real eps = static_cast<Real>(state.eps);
  for (int64_t i = 0; i < params.numel(); ++i) {
    const Real g = grads.v[static_cast<size_t>(i)];
    Real& m = state.m.v[static_cast<size_t>(i)];
    Real& v = state.v.v[static_cast<size_t>(i)];
    m = b1 * m + (Real(1) - b1) * g;
    v = b2 * v + (Real(1) - b2) * g * g;
    params.v[static_cast<size_t>(i)] -= lr * (m * c1) / (std::sqrt(v * c2) + eps);
  }
}

}  // namespace fnvr
