#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fnvr/tensor.hpp"

namespace fnvr {

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Exp,
  Log,
  Sin,
  Cos,
  Sigmoid,
  Softplus,  // attr.a = beta (0 means 1)
  Relu,
  Abs,
  Sqrt,
  Sum,       // attr.axis, -1 = all
  Mean,      // attr.axis, -1 = all
  MaxScalar, // attr.a
  MinScalar, // attr.a
  CumProd,   // attr.axis
  Concat,    // attr.axis
  IndexSelect,  // attr.axis, attr.idx
  Norm2Axis, // attr.axis
  Transpose,
  Reshape,   // attr.shape
  Scale,     // x * attr.a
  AddC,      // x + attr.a
  AddRowVec, // [N,D] + [D]
  MulRowVec, // [N,D] * [D]
  ScaleRows, // [N,D] * [N] (per-row)
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "subtract";
    case Op::Mul: return "multiply";
    case Op::Div: return "divide";
    case Op::MatMul: return "matmul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sin: return "sine";
    case Op::Cos: return "cosine";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Relu: return "relu";
    case Op::Abs: return "abs";
    case Op::Sqrt: return "square-root";
    case Op::Sum: return "sum-reduce";
    case Op::Mean: return "mean-reduce";
    case Op::MaxScalar: return "max-scalar";
    case Op::MinScalar: return "min-scalar";
    case Op::CumProd: return "cumulative-product";
    case Op::Concat: return "concatenate";
    case Op::IndexSelect: return "index-select";
    case Op::Norm2Axis: return "l2-norm-axis";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::Scale: return "scale";
    case Op::AddC: return "add-constant";
    case Op::AddRowVec: return "add-rowvec";
    case Op::MulRowVec: return "mul-rowvec";
    case Op::ScaleRows: return "scale-rows";
  }
  return "?";
}

struct Attr {
  double a = 0.0;
  int axis = -1;
  std::vector<int32_t> idx;
  Shape shape;
};

namespace detail {

// outer/len/inner decomposition for axis-wise ops
struct AxisView {
  int64_t outer = 1, len = 1, inner = 1;
};
inline AxisView axis_view(const Shape& s, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<size_t>(i)];
  v.len = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

template <class Real>
using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using EMap = Eigen::Map<EMat<Real>>;
template <class Real>
using ECMap = Eigen::Map<const EMat<Real>>;

template <class Real>
inline Real sigmoid_scalar(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
inline Real softplus_scalar(Real x, Real beta) {
  // (1/beta) * log(1 + exp(beta x)), overflow-safe
  const Real bx = beta * x;
  if (bx > Real(30)) return x;
  if (bx < Real(-30)) return std::exp(bx) / beta;
  return std::log1p(std::exp(bx)) / beta;
}

}  // namespace detail

template <class Real>
class Graph {
 public:
  struct Node {
    Op op = Op::Leaf;
    std::vector<int> in;
    Attr attr;
    Tensor<Real> val;
    Tensor<Real> grad;  // allocated lazily during backward
    bool req = false;
  };

  bool grad_enabled = true;

  int leaf(Tensor<Real> t, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(t);
    n.req = requires_grad && grad_enabled;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  int constant(Tensor<Real> t) { return leaf(std::move(t), false); }

  int apply(Op op, std::vector<int> in, Attr attr = {}) {
    Node n;
    n.op = op;
    n.attr = std::move(attr);
    n.val = forward(op, in, n.attr);
    if (grad_enabled)
      for (int i : in)
        if (nodes_[static_cast<size_t>(i)].req) {
          n.req = true;
          break;
        }
    n.in = std::move(in);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<Real>& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].req; }
  size_t size() const { return nodes_.size(); }

  // Gradient of a node after backward(); zeros if nothing flowed into it.
  const Tensor<Real>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = Tensor<Real>::zeros(n.val.shape);
    return n.grad;
  }

  void zero_grads() {
    for (Node& n : nodes_)
      if (!n.grad.v.empty()) std::fill(n.grad.v.begin(), n.grad.v.end(), Real(0));
  }

  // Reverse accumulation from a scalar output. Visits nodes in reverse append
  // order exactly once; gradients add across multiple uses of a node.
  void backward(int out) {
    Node& o = nodes_[static_cast<size_t>(out)];
    if (o.val.numel() != 1)
      throw std::invalid_argument("backward: output must be scalar, got shape " +
                                  shape_str(o.val.shape));
    if (!o.req) return;
    grad_buf(out).v[0] += Real(1);
    for (int i = out; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.req || n.op == Op::Leaf || n.grad.v.empty()) continue;
      backprop(n);
    }
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;

  Tensor<Real>& grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = Tensor<Real>::zeros(n.val.shape);
    return n.grad;
  }

  [[noreturn]] static void shape_error(Op op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
  }

  // ---- forward ----

  Tensor<Real> forward(Op op, const std::vector<int>& in, const Attr& attr) {
    switch (op) {
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
        return fwd_binary(op, val(in[0]), val(in[1]));
      case Op::MatMul:
        return fwd_matmul(val(in[0]), val(in[1]));
      case Op::Exp:
        return fwd_unary(val(in[0]), [](Real x) { return std::exp(x); });
      case Op::Log:
        return fwd_unary(val(in[0]), [](Real x) { return std::log(x); });
      case Op::Sin:
        return fwd_unary(val(in[0]), [](Real x) { return std::sin(x); });
      case Op::Cos:
        return fwd_unary(val(in[0]), [](Real x) { return std::cos(x); });
      case Op::Sigmoid:
        return fwd_unary(val(in[0]), [](Real x) { return detail::sigmoid_scalar(x); });
      case Op::Softplus: {
        const Real beta = attr.a == 0.0 ? Real(1) : static_cast<Real>(attr.a);
        return fwd_unary(val(in[0]), [beta](Real x) { return detail::softplus_scalar(x, beta); });
      }
      case Op::Relu:
        return fwd_unary(val(in[0]), [](Real x) { return x > Real(0) ? x : Real(0); });
      case Op::Abs:
        return fwd_unary(val(in[0]), [](Real x) { return std::abs(x); });
      case Op::Sqrt:
        return fwd_unary(val(in[0]), [](Real x) { return std::sqrt(x); });
      case Op::Sum:
      case Op::Mean:
        return fwd_reduce(op, val(in[0]), attr.axis);
      case Op::MaxScalar: {
        const Real c = static_cast<Real>(attr.a);
        return fwd_unary(val(in[0]), [c](Real x) { return x > c ? x : c; });
      }
      case Op::MinScalar: {
        const Real c = static_cast<Real>(attr.a);
        return fwd_unary(val(in[0]), [c](Real x) { return x < c ? x : c; });
      }
      case Op::CumProd:
        return fwd_cumprod(val(in[0]), attr.axis);
      case Op::Concat:
        return fwd_concat(in, attr.axis);
      case Op::IndexSelect:
        return fwd_index_select(val(in[0]), attr);
      case Op::Norm2Axis:
        return fwd_norm2(val(in[0]), attr.axis);
      case Op::Transpose:
        return fwd_transpose(val(in[0]));
      case Op::Reshape: {
        const Tensor<Real>& x = val(in[0]);
        if (shape_numel(attr.shape) != x.numel())
          shape_error(Op::Reshape, x.shape, attr.shape);
        Tensor<Real> out = x;
        out.shape = attr.shape;
        return out;
      }
      case Op::Scale: {
        const Real c = static_cast<Real>(attr.a);
        return fwd_unary(val(in[0]), [c](Real x) { return x * c; });
      }
      case Op::AddC: {
        const Real c = static_cast<Real>(attr.a);
        return fwd_unary(val(in[0]), [c](Real x) { return x + c; });
      }
      case Op::AddRowVec:
      case Op::MulRowVec:
        return fwd_rowvec(op, val(in[0]), val(in[1]));
      case Op::ScaleRows:
        return fwd_scale_rows(val(in[0]), val(in[1]));
      case Op::Leaf:
        break;
    }
    fail("apply: bad op");
  }

  template <class F>
  static Tensor<Real> fwd_unary(const Tensor<Real>& x, F f) {
    Tensor<Real> out;
    out.shape = x.shape;
    out.v.resize(x.v.size());
    const Real* xi = x.v.data();
    Real* yo = out.v.data();
    parallel_for(x.numel(), [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) yo[i] = f(xi[i]);
    });
    return out;
  }

  static Tensor<Real> fwd_binary(Op op, const Tensor<Real>& a, const Tensor<Real>& b) {
    const bool as = a.is_scalar(), bs = b.is_scalar();
    if (!(a.shape == b.shape || as || bs)) shape_error(op, a.shape, b.shape);
    Tensor<Real> out;
    out.shape = as && !bs ? b.shape : a.shape;
    out.v.resize(static_cast<size_t>(as && !bs ? b.numel() : a.numel()));
    const Real* pa = a.v.data();
    const Real* pb = b.v.data();
    Real* po = out.v.data();
    const int64_t n = out.numel();
    auto run = [&](auto f) {
      if (a.shape == b.shape) {
        parallel_for(n, [&](int64_t i0, int64_t i1) {
          for (int64_t i = i0; i < i1; ++i) po[i] = f(pa[i], pb[i]);
        });
      } else if (bs) {
        const Real c = pb[0];
        parallel_for(n, [&](int64_t i0, int64_t i1) {
          for (int64_t i = i0; i < i1; ++i) po[i] = f(pa[i], c);
        });
      } else {
        const Real c = pa[0];
        parallel_for(n, [&](int64_t i0, int64_t i1) {
          for (int64_t i = i0; i < i1; ++i) po[i] = f(c, pb[i]);
        });
      }
    };
    switch (op) {
      case Op::Add: run([](Real x, Real y) { return x + y; }); break;
      case Op::Sub: run([](Real x, Real y) { return x - y; }); break;
      case Op::Mul: run([](Real x, Real y) { return x * y; }); break;
      case Op::Div: run([](Real x, Real y) { return x / y; }); break;
      default: fail("binary: bad op");
    }
    return out;
  }

  static Tensor<Real> fwd_matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error(Op::MatMul, a.shape, b.shape);
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<Real> out = Tensor<Real>::uninit({m, n});
    detail::ECMap<Real> A(a.v.data(), m, k), B(b.v.data(), k, n);
    detail::EMap<Real> C(out.v.data(), m, n);
    parallel_for(
        m,
        [&](int64_t r0, int64_t r1) {
          C.middleRows(r0, r1 - r0).noalias() = A.middleRows(r0, r1 - r0) * B;
        },
        std::max<int64_t>(1, 16384 / std::max(1, k * n)));
    return out;
  }

  static Tensor<Real> fwd_reduce(Op op, const Tensor<Real>& x, int axis) {
    if (x.numel() == 0) throw std::invalid_argument(std::string(op_name(op)) + ": empty tensor");
    if (axis < 0) {
      Real s = 0;
      for (Real v : x.v) s += v;
      if (op == Op::Mean) s /= static_cast<Real>(x.numel());
      return Tensor<Real>::scalar(s);
    }
    if (axis >= x.rank()) fail(std::string(op_name(op)) + ": bad axis");
    const auto av = detail::axis_view(x.shape, axis);
    Shape os = x.shape;
    os.erase(os.begin() + axis);
    if (os.empty()) os = {1};
    Tensor<Real> out = Tensor<Real>::zeros(os);
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t l = 0; l < av.len; ++l) {
        const Real* src = x.v.data() + (o * av.len + l) * av.inner;
        Real* dst = out.v.data() + o * av.inner;
        for (int64_t i = 0; i < av.inner; ++i) dst[i] += src[i];
      }
    if (op == Op::Mean)
      for (Real& v : out.v) v /= static_cast<Real>(av.len);
    return out;
  }

  static Tensor<Real> fwd_cumprod(const Tensor<Real>& x, int axis) {
    if (axis < 0 || axis >= x.rank()) fail("cumulative-product: bad axis");
    const auto av = detail::axis_view(x.shape, axis);
    Tensor<Real> out = x;
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t i = 0; i < av.inner; ++i) {
        Real run = 1;
        for (int64_t l = 0; l < av.len; ++l) {
          Real& y = out.v[static_cast<size_t>((o * av.len + l) * av.inner + i)];
          run *= y;
          y = run;
        }
      }
    return out;
  }

  Tensor<Real> fwd_concat(const std::vector<int>& in, int axis) {
    if (in.empty()) fail("concatenate: no inputs");
    const Tensor<Real>& first = val(in[0]);
    if (axis < 0 || axis >= first.rank()) fail("concatenate: bad axis");
    Shape os = first.shape;
    int total = 0;
    for (int id : in) {
      const Tensor<Real>& t = val(id);
      if (t.rank() != first.rank()) shape_error(Op::Concat, first.shape, t.shape);
      for (int d = 0; d < first.rank(); ++d)
        if (d != axis && t.dim(d) != first.dim(d)) shape_error(Op::Concat, first.shape, t.shape);
      total += t.dim(axis);
    }
    os[static_cast<size_t>(axis)] = total;
    Tensor<Real> out = Tensor<Real>::uninit(os);
    const auto ov = detail::axis_view(os, axis);
    int64_t off = 0;
    for (int id : in) {
      const Tensor<Real>& t = val(id);
      const auto tv = detail::axis_view(t.shape, axis);
      for (int64_t o = 0; o < tv.outer; ++o)
        std::copy_n(t.v.data() + o * tv.len * tv.inner, tv.len * tv.inner,
                    out.v.data() + (o * ov.len + off) * ov.inner);
      off += tv.len;
    }
    return out;
  }

  static Tensor<Real> fwd_index_select(const Tensor<Real>& x, const Attr& attr) {
    const int axis = attr.axis;
    if (axis < 0 || axis >= x.rank()) fail("index-select: bad axis");
    const auto av = detail::axis_view(x.shape, axis);
    for (int32_t i : attr.idx)
      if (i < 0 || i >= av.len)
        fail("index-select: index " + std::to_string(i) + " out of range for " + shape_str(x.shape));
    Shape os = x.shape;
    os[static_cast<size_t>(axis)] = static_cast<int>(attr.idx.size());
    Tensor<Real> out = Tensor<Real>::uninit(os);
    const int64_t m = static_cast<int64_t>(attr.idx.size());
    parallel_for(av.outer * m, [&](int64_t j0, int64_t j1) {
      for (int64_t j = j0; j < j1; ++j) {
        const int64_t o = j / m, l = j % m;
        std::copy_n(x.v.data() + (o * av.len + attr.idx[static_cast<size_t>(l)]) * av.inner,
                    av.inner, out.v.data() + (o * m + l) * av.inner);
      }
    }, 4096);
    return out;
  }

  static Tensor<Real> fwd_norm2(const Tensor<Real>& x, int axis) {
    if (axis < 0 || axis >= x.rank()) fail("l2-norm-axis: bad axis");
    const auto av = detail::axis_view(x.shape, axis);
    Shape os = x.shape;
    os.erase(os.begin() + axis);
    if (os.empty()) os = {1};
    Tensor<Real> out = Tensor<Real>::zeros(os);
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t l = 0; l < av.len; ++l) {
        const Real* src = x.v.data() + (o * av.len + l) * av.inner;
        Real* dst = out.v.data() + o * av.inner;
        for (int64_t i = 0; i < av.inner; ++i) dst[i] += src[i] * src[i];
      }
    for (Real& v : out.v) v = std::sqrt(v);
    return out;
  }

  static Tensor<Real> fwd_transpose(const Tensor<Real>& x) {
    if (x.rank() != 2) fail("transpose: rank-2 tensor required, got " + shape_str(x.shape));
    const int m = x.dim(0), n = x.dim(1);
    Tensor<Real> out = Tensor<Real>::uninit({n, m});
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) out.at(c, r) = x.at(r, c);
    return out;
  }

  static Tensor<Real> fwd_rowvec(Op op, const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rank() != 2 || b.numel() != a.dim(1)) shape_error(op, a.shape, b.shape);
    const int n = a.dim(0), d = a.dim(1);
    Tensor<Real> out;
    out.shape = a.shape;
    out.v.resize(a.v.size());
    const Real* pa = a.v.data();
    const Real* pb = b.v.data();
    Real* po = out.v.data();
    const bool add = op == Op::AddRowVec;
    parallel_for(n, [&](int64_t r0, int64_t r1) {
      for (int64_t r = r0; r < r1; ++r)
        for (int c = 0; c < d; ++c)
          po[r * d + c] = add ? pa[r * d + c] + pb[c] : pa[r * d + c] * pb[c];
    }, 4096);
    return out;
  }

  static Tensor<Real> fwd_scale_rows(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rank() != 2 || b.numel() != a.dim(0)) shape_error(Op::ScaleRows, a.shape, b.shape);
    const int n = a.dim(0), d = a.dim(1);
    Tensor<Real> out;
    out.shape = a.shape;
    out.v.resize(a.v.size());
    parallel_for(n, [&](int64_t r0, int64_t r1) {
      for (int64_t r = r0; r < r1; ++r) {
        const Real s = b.v[static_cast<size_t>(r)];
        for (int c = 0; c < d; ++c) out.v[static_cast<size_t>(r * d + c)] = a.v[static_cast<size_t>(r * d + c)] * s;
      }
    }, 4096);
    return out;
  }

  // ---- backward ----

  void backprop(Node& n) {
    const Tensor<Real>& d = n.grad;
    switch (n.op) {
      case Op::Add: {
        acc_binary(n, 0, d, [](Real, Real, Real g) { return g; });
        acc_binary(n, 1, d, [](Real, Real, Real g) { return g; });
        break;
      }
      case Op::Sub: {
        acc_binary(n, 0, d, [](Real, Real, Real g) { return g; });
        acc_binary(n, 1, d, [](Real, Real, Real g) { return -g; });
        break;
      }
      case Op::Mul: {
        acc_binary(n, 0, d, [](Real, Real b, Real g) { return g * b; });
        acc_binary(n, 1, d, [](Real a, Real, Real g) { return g * a; });
        break;
      }
      case Op::Div: {
        acc_binary(n, 0, d, [](Real, Real b, Real g) { return g / b; });
        acc_binary(n, 1, d, [](Real a, Real b, Real g) { return -g * a / (b * b); });
        break;
      }
      case Op::MatMul: bwd_matmul(n); break;
      case Op::Exp: acc_unary(n, [&](int64_t i) { return d.v[i] * n.val.v[i]; }); break;
      case Op::Log: acc_unary(n, [&](int64_t i) { return d.v[i] / in_val(n, 0).v[i]; }); break;
      case Op::Sin: acc_unary(n, [&](int64_t i) { return d.v[i] * std::cos(in_val(n, 0).v[i]); }); break;
      case Op::Cos: acc_unary(n, [&](int64_t i) { return -d.v[i] * std::sin(in_val(n, 0).v[i]); }); break;
      case Op::Sigmoid:
        acc_unary(n, [&](int64_t i) { return d.v[i] * n.val.v[i] * (Real(1) - n.val.v[i]); });
        break;
      case Op::Softplus: {
        const Real beta = n.attr.a == 0.0 ? Real(1) : static_cast<Real>(n.attr.a);
        acc_unary(n, [&](int64_t i) { return d.v[i] * detail::sigmoid_scalar(beta * in_val(n, 0).v[i]); });
        break;
      }
      case Op::Relu:
        acc_unary(n, [&](int64_t i) { return in_val(n, 0).v[i] > Real(0) ? d.v[i] : Real(0); });
        break;
      case Op::Abs:
        acc_unary(n, [&](int64_t i) {
          const Real x = in_val(n, 0).v[i];
          return x > Real(0) ? d.v[i] : (x < Real(0) ? -d.v[i] : Real(0));
        });
        break;
      case Op::Sqrt:
        acc_unary(n, [&](int64_t i) { return d.v[i] * Real(0.5) / n.val.v[i]; });
        break;
      case Op::Sum:
      case Op::Mean: bwd_reduce(n); break;
      case Op::MaxScalar: {
        const Real c = static_cast<Real>(n.attr.a);
        // subgradient 0 on the clamped branch (including the kink itself)
        acc_unary(n, [&](int64_t i) { return in_val(n, 0).v[i] > c ? d.v[i] : Real(0); });
        break;
      }
      case Op::MinScalar: {
        const Real c = static_cast<Real>(n.attr.a);
        acc_unary(n, [&](int64_t i) { return in_val(n, 0).v[i] < c ? d.v[i] : Real(0); });
        break;
      }
      case Op::CumProd: bwd_cumprod(n); break;
      case Op::Concat: bwd_concat(n); break;
      case Op::IndexSelect: bwd_index_select(n); break;
      case Op::Norm2Axis: bwd_norm2(n); break;
      case Op::Transpose: {
        if (input_req(n, 0)) {
          Tensor<Real>& g = grad_buf(n.in[0]);
          const int m = g.shape[0], c = g.shape[1];
          for (int r = 0; r < m; ++r)
            for (int cc = 0; cc < c; ++cc) g.at(r, cc) += d.at(cc, r);
        }
        break;
      }
      case Op::Reshape: {
        if (input_req(n, 0)) {
          Tensor<Real>& g = grad_buf(n.in[0]);
          for (int64_t i = 0; i < d.numel(); ++i) g.v[static_cast<size_t>(i)] += d.v[static_cast<size_t>(i)];
        }
        break;
      }
      case Op::Scale: {
        const Real c = static_cast<Real>(n.attr.a);
        acc_unary(n, [&](int64_t i) { return d.v[i] * c; });
        break;
      }
      case Op::AddC: acc_unary(n, [&](int64_t i) { return d.v[i]; }); break;
      case Op::AddRowVec:
      case Op::MulRowVec: bwd_rowvec(n); break;
      case Op::ScaleRows: bwd_scale_rows(n); break;
      case Op::Leaf: break;
    }
  }

  const Tensor<Real>& in_val(const Node& n, int k) const { return val(n.in[static_cast<size_t>(k)]); }
  bool input_req(const Node& n, int k) const { return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(k)])].req; }

  template <class F>
  void acc_unary(Node& n, F df) {
    if (!input_req(n, 0)) return;
    Tensor<Real>& g = grad_buf(n.in[0]);
    const int64_t cnt = g.numel();
    parallel_for(cnt, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) g.v[static_cast<size_t>(i)] += df(i);
    });
  }

  // binary with scalar broadcasting; df(a_i, b_i, delta_i) yields contribution
  // for input `which`.
  template <class F>
  void acc_binary(Node& n, int which, const Tensor<Real>& d, F df) {
    if (!input_req(n, which)) return;
    const Tensor<Real>& a = in_val(n, 0);
    const Tensor<Real>& b = in_val(n, 1);
    Tensor<Real>& g = grad_buf(n.in[static_cast<size_t>(which)]);
    const int64_t nd = d.numel();
    const bool as = a.is_scalar() && nd > 1;
    const bool bs = b.is_scalar() && nd > 1;
    const bool target_scalar = (which == 0 ? as : bs);
    if (target_scalar) {
      Real s = 0;
      for (int64_t i = 0; i < nd; ++i)
        s += df(as ? a.v[0] : a.v[static_cast<size_t>(i)], bs ? b.v[0] : b.v[static_cast<size_t>(i)],
                d.v[static_cast<size_t>(i)]);
      g.v[0] += s;
    } else {
      for (int64_t i = 0; i < nd; ++i)
        g.v[static_cast<size_t>(i)] += df(as ? a.v[0] : a.v[static_cast<size_t>(i)],
                                          bs ? b.v[0] : b.v[static_cast<size_t>(i)],
                                          d.v[static_cast<size_t>(i)]);
    }
  }

  void bwd_matmul(Node& n) {
    const Tensor<Real>& a = in_val(n, 0);
    const Tensor<Real>& b = in_val(n, 1);
    const Tensor<Real>& d = n.grad;
    const int m = a.dim(0), k = a.dim(1), c = b.dim(1);
    detail::ECMap<Real> A(a.v.data(), m, k), B(b.v.data(), k, c), D(d.v.data(), m, c);
    if (input_req(n, 0)) {
      Tensor<Real>& ga = grad_buf(n.in[0]);
      detail::EMap<Real> GA(ga.v.data(), m, k);
      parallel_for(
          m,
          [&](int64_t r0, int64_t r1) {
            GA.middleRows(r0, r1 - r0).noalias() += D.middleRows(r0, r1 - r0) * B.transpose();
          },
          std::max<int64_t>(1, 16384 / std::max(1, k * c)));
    }
    if (input_req(n, 1)) {
      Tensor<Real>& gb = grad_buf(n.in[1]);
      detail::EMap<Real> GB(gb.v.data(), k, c);
      GB.noalias() += A.transpose() * D;
    }
  }

  void bwd_reduce(Node& n) {
    if (!input_req(n, 0)) return;
    const Tensor<Real>& x = in_val(n, 0);
    const Tensor<Real>& d = n.grad;
    Tensor<Real>& g = grad_buf(n.in[0]);
    if (n.attr.axis < 0) {
      const Real s = n.op == Op::Mean ? d.v[0] / static_cast<Real>(x.numel()) : d.v[0];
      for (Real& v : g.v) v += s;
      return;
    }
    const auto av = detail::axis_view(x.shape, n.attr.axis);
    const Real scale = n.op == Op::Mean ? Real(1) / static_cast<Real>(av.len) : Real(1);
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t l = 0; l < av.len; ++l) {
        Real* dst = g.v.data() + (o * av.len + l) * av.inner;
        const Real* src = d.v.data() + o * av.inner;
        for (int64_t i = 0; i < av.inner; ++i) dst[i] += src[i] * scale;
      }
  }

  void bwd_cumprod(Node& n) {
    if (!input_req(n, 0)) return;
    const Tensor<Real>& x = in_val(n, 0);
    const Tensor<Real>& y = n.val;
    const Tensor<Real>& d = n.grad;
    Tensor<Real>& g = grad_buf(n.in[0]);
    const auto av = detail::axis_view(x.shape, n.attr.axis);
    parallel_for(av.outer * av.inner, [&](int64_t j0, int64_t j1) {
      for (int64_t j = j0; j < j1; ++j) {
        const int64_t o = j / av.inner, i = j % av.inner;
        auto idx = [&](int64_t l) { return static_cast<size_t>((o * av.len + l) * av.inner + i); };
        bool has_zero = false;
        for (int64_t l = 0; l < av.len; ++l)
          if (x.v[idx(l)] == Real(0)) {
            has_zero = true;
            break;
          }
        if (!has_zero) {
          // dx_l = (sum_{m>=l} d_m y_m) / x_l
          Real suffix = 0;
          for (int64_t l = av.len - 1; l >= 0; --l) {
            suffix += d.v[idx(l)] * y.v[idx(l)];
            g.v[idx(l)] += suffix / x.v[idx(l)];
          }
        } else {
          // masked products: dy_m/dx_l = prod_{k<=m, k!=l} x_k, zeros kept explicit
          Real prefix = 1;  // prod_{k<l} x_k
          for (int64_t l = 0; l < av.len; ++l) {
            Real run = prefix;  // prod_{k<=m, k!=l} for m starting at l
            Real acc = 0;
            for (int64_t m = l; m < av.len; ++m) {
              if (m > l) run *= x.v[idx(m)];
              acc += d.v[idx(m)] * run;
            }
            g.v[idx(l)] += acc;
            prefix *= x.v[idx(l)];
          }
        }
      }
    }, 512);
  }

  void bwd_concat(Node& n) {
    const Tensor<Real>& d = n.grad;
    const auto ov = detail::axis_view(d.shape, n.attr.axis);
    int64_t off = 0;
    for (int id : n.in) {
      const Tensor<Real>& t = val(id);
      const auto tv = detail::axis_view(t.shape, n.attr.axis);
      if (nodes_[static_cast<size_t>(id)].req) {
        Tensor<Real>& g = grad_buf(id);
        for (int64_t o = 0; o < tv.outer; ++o) {
          const Real* src = d.v.data() + (o * ov.len + off) * ov.inner;
          Real* dst = g.v.data() + o * tv.len * tv.inner;
          for (int64_t i = 0; i < tv.len * tv.inner; ++i) dst[i] += src[i];
        }
      }
      off += tv.len;
    }
  }

  void bwd_index_select(Node& n) {
    if (!input_req(n, 0)) return;
    const Tensor<Real>& x = in_val(n, 0);
    const Tensor<Real>& d = n.grad;
    Tensor<Real>& g = grad_buf(n.in[0]);
    const auto av = detail::axis_view(x.shape, n.attr.axis);
    const int64_t m = static_cast<int64_t>(n.attr.idx.size());
    // scatter-add, sequential for determinism under duplicate indices
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t l = 0; l < m; ++l) {
        const Real* src = d.v.data() + (o * m + l) * av.inner;
        Real* dst = g.v.data() + (o * av.len + n.attr.idx[static_cast<size_t>(l)]) * av.inner;
        for (int64_t i = 0; i < av.inner; ++i) dst[i] += src[i];
      }
  }

  void bwd_norm2(Node& n) {
    if (!input_req(n, 0)) return;
    const Tensor<Real>& x = in_val(n, 0);
    const Tensor<Real>& y = n.val;
    const Tensor<Real>& d = n.grad;
    Tensor<Real>& g = grad_buf(n.in[0]);
    const auto av = detail::axis_view(x.shape, n.attr.axis);
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t i = 0; i < av.inner; ++i) {
        const Real yy = y.v[static_cast<size_t>(o * av.inner + i)];
        if (yy == Real(0)) continue;
        const Real dd = d.v[static_cast<size_t>(o * av.inner + i)];
        for (int64_t l = 0; l < av.len; ++l) {
          const size_t k = static_cast<size_t>((o * av.len + l) * av.inner + i);
          g.v[k] += dd * x.v[k] / yy;
        }
      }
  }

  void bwd_rowvec(Node& n) {
    const Tensor<Real>& a = in_val(n, 0);
    const Tensor<Real>& b = in_val(n, 1);
    const Tensor<Real>& d = n.grad;
    const int rows = a.dim(0), cols = a.dim(1);
    const bool add = n.op == Op::AddRowVec;
    if (input_req(n, 0)) {
      Tensor<Real>& g = grad_buf(n.in[0]);
      for (int64_t i = 0; i < d.numel(); ++i)
        g.v[static_cast<size_t>(i)] += add ? d.v[static_cast<size_t>(i)]
                                           : d.v[static_cast<size_t>(i)] * b.v[static_cast<size_t>(i % cols)];
    }
    if (input_req(n, 1)) {
      Tensor<Real>& g = grad_buf(n.in[1]);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          g.v[static_cast<size_t>(c)] += add ? d.at(r, c) : d.at(r, c) * a.at(r, c);
    }
  }

  void bwd_scale_rows(Node& n) {
    const Tensor<Real>& a = in_val(n, 0);
    const Tensor<Real>& b = in_val(n, 1);
    const Tensor<Real>& d = n.grad;
    const int rows = a.dim(0), cols = a.dim(1);
    if (input_req(n, 0)) {
      Tensor<Real>& g = grad_buf(n.in[0]);
      for (int r = 0; r < rows; ++r) {
        const Real s = b.v[static_cast<size_t>(r)];
        for (int c = 0; c < cols; ++c) g.at(r, c) += d.at(r, c) * s;
      }
    }
    if (input_req(n, 1)) {
      Tensor<Real>& g = grad_buf(n.in[1]);
      for (int r = 0; r < rows; ++r) {
        Real s = 0;
        for (int c = 0; c < cols; ++c) s += d.at(r, c) * a.at(r, c);
        g.v[static_cast<size_t>(r)] += s;
      }
    }
  }
};

// Lightweight handle for building expressions on a graph.
template <class Real>
struct Val {
  Graph<Real>* g = nullptr;
  int id = -1;
  const Tensor<Real>& t() const { return g->val(id); }
  Real scalar() const { return t().v[0]; }
  const Shape& shape() const { return t().shape; }
};

template <class Real>
Val<Real> make_val(Graph<Real>& g, int id) {
  return Val<Real>{&g, id};
}
template <class Real>
Val<Real> vleaf(Graph<Real>& g, Tensor<Real> t, bool req) {
  return make_val(g, g.leaf(std::move(t), req));
}
template <class Real>
Val<Real> vconst(Graph<Real>& g, Tensor<Real> t) {
  return make_val(g, g.constant(std::move(t)));
}
template <class Real>
Val<Real> vscalar(Graph<Real>& g, Real x) {
  return vconst(g, Tensor<Real>::scalar(x));
}

template <class Real>
Val<Real> vapply(Graph<Real>& g, Op op, std::vector<int> in, Attr attr = {}) {
  return make_val(g, g.apply(op, std::move(in), std::move(attr)));
}

template <class Real> Val<Real> operator+(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::Add, {a.id, b.id}); }
template <class Real> Val<Real> operator-(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::Sub, {a.id, b.id}); }
template <class Real> Val<Real> operator*(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::Mul, {a.id, b.id}); }
template <class Real> Val<Real> operator/(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::Div, {a.id, b.id}); }
template <class Real> Val<Real> operator*(Val<Real> a, double c) { Attr at; at.a = c; return vapply(*a.g, Op::Scale, {a.id}, at); }
template <class Real> Val<Real> operator*(double c, Val<Real> a) { return a * c; }
template <class Real> Val<Real> operator+(Val<Real> a, double c) { Attr at; at.a = c; return vapply(*a.g, Op::AddC, {a.id}, at); }
template <class Real> Val<Real> operator+(double c, Val<Real> a) { return a + c; }
template <class Real> Val<Real> operator-(Val<Real> a, double c) { return a + (-c); }
template <class Real> Val<Real> operator-(double c, Val<Real> a) { return a * -1.0 + c; }
template <class Real> Val<Real> operator-(Val<Real> a) { return a * -1.0; }

template <class Real> Val<Real> vexp(Val<Real> a) { return vapply(*a.g, Op::Exp, {a.id}); }
template <class Real> Val<Real> vlog(Val<Real> a) { return vapply(*a.g, Op::Log, {a.id}); }
template <class Real> Val<Real> vsin(Val<Real> a) { return vapply(*a.g, Op::Sin, {a.id}); }
template <class Real> Val<Real> vcos(Val<Real> a) { return vapply(*a.g, Op::Cos, {a.id}); }
template <class Real> Val<Real> vsigmoid(Val<Real> a) { return vapply(*a.g, Op::Sigmoid, {a.id}); }
template <class Real> Val<Real> vsoftplus(Val<Real> a, double beta = 1.0) { Attr at; at.a = beta; return vapply(*a.g, Op::Softplus, {a.id}, at); }
template <class Real> Val<Real> vrelu(Val<Real> a) { return vapply(*a.g, Op::Relu, {a.id}); }
template <class Real> Val<Real> vabs(Val<Real> a) { return vapply(*a.g, Op::Abs, {a.id}); }
template <class Real> Val<Real> vsqrt(Val<Real> a) { return vapply(*a.g, Op::Sqrt, {a.id}); }
template <class Real> Val<Real> vsum(Val<Real> a, int axis = -1) { Attr at; at.axis = axis; return vapply(*a.g, Op::Sum, {a.id}, at); }
template <class Real> Val<Real> vmean(Val<Real> a, int axis = -1) { Attr at; at.axis = axis; return vapply(*a.g, Op::Mean, {a.id}, at); }
template <class Real> Val<Real> vmax(Val<Real> a, double c) { Attr at; at.a = c; return vapply(*a.g, Op::MaxScalar, {a.id}, at); }
template <class Real> Val<Real> vmin(Val<Real> a, double c) { Attr at; at.a = c; return vapply(*a.g, Op::MinScalar, {a.id}, at); }
template <class Real> Val<Real> vclamp(Val<Real> a, double lo, double hi) { return vmin(vmax(a, lo), hi); }
template <class Real> Val<Real> vcumprod(Val<Real> a, int axis) { Attr at; at.axis = axis; return vapply(*a.g, Op::CumProd, {a.id}, at); }
template <class Real> Val<Real> vnorm2(Val<Real> a, int axis) { Attr at; at.axis = axis; return vapply(*a.g, Op::Norm2Axis, {a.id}, at); }
template <class Real> Val<Real> vtranspose(Val<Real> a) { return vapply(*a.g, Op::Transpose, {a.id}); }
template <class Real> Val<Real> vreshape(Val<Real> a, Shape s) { Attr at; at.shape = std::move(s); return vapply(*a.g, Op::Reshape, {a.id}, at); }
template <class Real> Val<Real> vmatmul(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::MatMul, {a.id, b.id}); }
template <class Real> Val<Real> vadd_rowvec(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::AddRowVec, {a.id, b.id}); }
template <class Real> Val<Real> vmul_rowvec(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::MulRowVec, {a.id, b.id}); }
template <class Real> Val<Real> vscale_rows(Val<Real> a, Val<Real> b) { return vapply(*a.g, Op::ScaleRows, {a.id, b.id}); }
template <class Real> Val<Real> vindex_select(Val<Real> a, int axis, std::vector<int32_t> idx) {
  Attr at;
  at.axis = axis;
  at.idx = std::move(idx);
  return vapply(*a.g, Op::IndexSelect, {a.id}, at);
}
template <class Real>
Val<Real> vconcat(std::vector<Val<Real>> parts, int axis) {
  Attr at;
  at.axis = axis;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (auto& p : parts) ids.push_back(p.id);
  return vapply(*parts[0].g, Op::Concat, std::move(ids), at);
}
// columns [c0, c1) of a rank-2 tensor
template <class Real>
Val<Real> vcols(Val<Real> a, int c0, int c1) {
  std::vector<int32_t> idx;
  for (int c = c0; c < c1; ++c) idx.push_back(c);
  return vindex_select(a, 1, std::move(idx));
}

// ---- finite-difference gradient verification ----

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t worst_coord = -1;
  bool all_finite = true;
  int64_t nonfinite_coord = -1;
  std::vector<int64_t> suspect_coords;  // likely non-differentiable points
};

// fn builds a scalar expression from a leaf on a fresh graph. Relative error is
// |analytic - central| / max(1e-8, |central|), maximized over coordinates.
template <class Real, class Fn>
GradCheckResult grad_check(Fn&& fn, const Tensor<Real>& point, double eps,
                           double suspect_tol = 1e-2) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  GradCheckResult res;
  Graph<Real> g;
  Val<Real> x = vleaf(g, point, true);
  Val<Real> out = fn(g, x);
  if (out.t().numel() != 1) throw std::invalid_argument("grad_check: fn must produce a scalar");
  g.backward(out.id);
  const Tensor<Real> analytic = g.grad(x.id);

  for (int64_t i = 0; i < point.numel(); ++i) {
    auto eval = [&](double delta) {
      Tensor<Real> p = point;
      p.v[static_cast<size_t>(i)] += static_cast<Real>(delta);
      Graph<Real> gg;
      gg.grad_enabled = false;
      Val<Real> xx = vleaf(gg, p, false);
      return static_cast<double>(fn(gg, xx).scalar());
    };
    const double fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
    const double an = static_cast<double>(analytic.v[static_cast<size_t>(i)]);
    if (!std::isfinite(fd) || !std::isfinite(an)) {
      res.all_finite = false;
      if (res.nonfinite_coord < 0) res.nonfinite_coord = i;
      res.suspect_coords.push_back(i);
      continue;
    }
    const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(fd));
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_coord = i;
    }
    if (rel > suspect_tol) res.suspect_coords.push_back(i);
  }
  return res;
}

// Per-op finite-difference sweep at random points; used by tests and by the
// `grad-check` CLI subcommand. Returns (op name, max rel err) pairs. Sample
// ranges keep clear of kinks (relu/abs/max at 0); kink behavior has its own
// tests.
inline std::vector<std::pair<std::string, double>> op_gradient_report(uint64_t seed = 7,
                                                                      int points = 100) {
  using R = double;
  std::vector<std::pair<std::string, double>> report;
  Rng rng(seed);

  // builder(g, x, aux) -> scalar Val; aux is a fixed tensor drawn once per
  // point so the function stays deterministic across FD re-evaluations.
  auto sweep = [&](const char* name, int n, int naux, auto builder, double lo = -2.0,
                   double hi = 2.0) {
    double worst = 0;
    for (int p = 0; p < points; ++p) {
      Tensor<R> pt = Tensor<R>::zeros({n});
      for (auto& v : pt.v) v = rng.uniform(lo, hi);
      Tensor<R> aux = Tensor<R>::zeros({std::max(naux, 1)});
      for (auto& v : aux.v) v = rng.uniform(0.25, 1.5);
      auto res = grad_check<R>(
          [&](Graph<R>& g, Val<R> x) { return builder(g, x, vconst(g, aux)); }, pt, 1e-5);
      worst = std::max(worst, res.max_rel_err);
    }
    report.emplace_back(name, worst);
  };

  sweep("add", 4, 4, [](Graph<R>&, Val<R> x, Val<R> a) { return vsum(x + a); });
  sweep("subtract", 4, 4, [](Graph<R>&, Val<R> x, Val<R> a) { return vsum(x - a); });
  sweep("multiply", 4, 4, [](Graph<R>&, Val<R> x, Val<R> a) { return vsum(x * a); });
  sweep("divide", 4, 4, [](Graph<R>&, Val<R> x, Val<R> a) { return vsum(x / a); }, 0.5, 2.0);
  sweep("matmul", 6, 6, [](Graph<R>&, Val<R> x, Val<R> a) {
    return vsum(vmatmul(vreshape(x, {2, 3}), vreshape(a, {3, 2})));
  });
  sweep("exp", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vexp(x)); });
  sweep("log", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vlog(x)); }, 0.3, 3.0);
  sweep("sine", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vsin(x)); });
  sweep("cosine", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vcos(x)); });
  sweep("sigmoid", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vsigmoid(x)); });
  sweep("softplus", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vsoftplus(x, 2.0)); });
  sweep("relu", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vrelu(x)); }, 0.2, 2.0);
  sweep("abs", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vabs(x)); }, 0.2, 2.0);
  sweep("square-root", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vsqrt(x)); }, 0.3, 3.0);
  sweep("sum-reduce", 6, 0,
        [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vsum(vreshape(x, {2, 3}), 1)); });
  sweep("mean-reduce", 6, 0,
        [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vmean(vreshape(x, {2, 3}), 0)); });
  sweep("max-scalar", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vmax(x, 0.1)); }, 0.3, 2.0);
  sweep("min-scalar", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vmin(x, 3.0)); }, 0.3, 2.0);
  sweep("cumulative-product", 6, 0,
        [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vcumprod(vreshape(x, {2, 3}), 1)); }, 0.3, 1.5);
  sweep("concatenate", 4, 4, [](Graph<R>&, Val<R> x, Val<R> a) {
    return vsum(vconcat<R>({x, a, x}, 0));
  });
  sweep("index-select", 6, 0, [](Graph<R>&, Val<R> x, Val<R>) {
    return vsum(vindex_select(vreshape(x, {3, 2}), 0, {2, 0, 2}));
  });
  sweep("l2-norm-axis", 6, 0,
        [](Graph<R>&, Val<R> x, Val<R>) { return vsum(vnorm2(vreshape(x, {2, 3}), 1)); }, 0.3, 2.0);
  sweep("transpose", 6, 0, [](Graph<R>&, Val<R> x, Val<R>) {
    return vsum(vmatmul(vtranspose(vreshape(x, {2, 3})), vreshape(x, {2, 3})));
  });
  sweep("scale", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(x * 1.7); });
  sweep("add-constant", 4, 0, [](Graph<R>&, Val<R> x, Val<R>) { return vsum(x + 0.3); });
  sweep("add-rowvec", 6, 3, [](Graph<R>&, Val<R> x, Val<R> a) {
    return vsum(vadd_rowvec(vreshape(x, {2, 3}), a));
  });
  sweep("mul-rowvec", 6, 3, [](Graph<R>&, Val<R> x, Val<R> a) {
    return vsum(vmul_rowvec(vreshape(x, {2, 3}), a));
  });
  sweep("scale-rows", 6, 2, [](Graph<R>&, Val<R> x, Val<R> a) {
    return vsum(vscale_rows(vreshape(x, {2, 3}), a));
  });
  return report;
}

}  // namespace fnvr
