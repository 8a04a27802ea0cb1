#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fnvr/common.hpp"

namespace fnvr {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Allocator whose value-initializing construct is a no-op for trivial types,
// so resize() skips the zero fill when the buffer is fully overwritten next.
template <class T>
struct UninitAlloc : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = UninitAlloc<U>;
  };
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) > 0) ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Dense row-major array of Real. All graph values and gradients are Tensors;
// Real is double in test mode and float in train mode.
template <class Real>
struct Tensor {
  using Storage = std::vector<Real, UninitAlloc<Real>>;

  Shape shape;
  Storage v;

  Tensor() = default;
  Tensor(Shape s, Storage data) : shape(std::move(s)), v(std::move(data)) {}
  Tensor(Shape s, const std::vector<Real>& data) : shape(std::move(s)), v(data.begin(), data.end()) {}

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.v.assign(static_cast<size_t>(shape_numel(t.shape)), Real(0));
    return t;
  }
  // uninitialized storage; caller must write every element
  static Tensor uninit(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.v.resize(static_cast<size_t>(shape_numel(t.shape)));
    return t;
  }
  static Tensor full(Shape s, Real value) {
    Tensor t;
    t.shape = std::move(s);
    t.v.assign(static_cast<size_t>(shape_numel(t.shape)), value);
    return t;
  }
  static Tensor scalar(Real value) {
    Tensor t;
    t.shape = {1};
    t.v.assign(1, value);
    return t;
  }
  static Tensor from(Shape s, std::initializer_list<Real> data) {
    Tensor t;
    t.shape = std::move(s);
    t.v.assign(data);
    if (static_cast<int64_t>(t.v.size()) != shape_numel(t.shape))
      fail("tensor init: data size does not match shape " + shape_str(t.shape));
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool is_scalar() const { return numel() == 1; }

  Real& at(int64_t i) { return v[static_cast<size_t>(i)]; }
  Real at(int64_t i) const { return v[static_cast<size_t>(i)]; }

  // 2D accessors (row-major)
  Real& at(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
  Real at(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

  template <class R2>
  Tensor<R2> cast() const {
    Tensor<R2> t;
    t.shape = shape;
    t.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) t.v[i] = static_cast<R2>(v[i]);
    return t;
  }
};

}  // namespace fnvr
