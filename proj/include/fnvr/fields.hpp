#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fnvr/geometry.hpp"
#include "fnvr/params.hpp"

namespace fnvr {

// ---- positional encoding ----

struct PosencConfig {
  int num_frequencies = 6;
  bool include_input = true;

  int output_dim(int input_dim) const {
    return input_dim * ((include_input ? 1 : 0) + 2 * num_frequencies);
  }
};

// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x)]
// per component; inputs are expected pre-normalized to [-1, 1].
inline std::vector<double> posenc(const std::vector<double>& x, const PosencConfig& cfg) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(cfg.output_dim(static_cast<int>(x.size()))));
  if (cfg.include_input) out.insert(out.end(), x.begin(), x.end());
  for (int l = 0; l < cfg.num_frequencies; ++l) {
    const double f = M_PI * std::pow(2.0, l);
    for (double v : x) out.push_back(std::sin(f * v));
    for (double v : x) out.push_back(std::cos(f * v));
  }
  return out;
}

// Graph-side encoding of an [N, D] point matrix; keeps the per-frequency
// sin/cos blocks for the analytic-gradient chain.
template <class Real>
struct PosencOut {
  Val<Real> enc;                  // [N, D (1 + 2L)] when include_input
  std::vector<Val<Real>> sin_l;   // [N, D] each
  std::vector<Val<Real>> cos_l;
  std::vector<double> freq;
  int input_dim = 0;
};

template <class Real>
PosencOut<Real> posenc_val(Val<Real> x, const PosencConfig& cfg) {
  PosencOut<Real> out;
  out.input_dim = x.shape()[1];
  std::vector<Val<Real>> blocks;
  if (cfg.include_input) blocks.push_back(x);
  for (int l = 0; l < cfg.num_frequencies; ++l) {
    const double f = M_PI * std::pow(2.0, l);
    Val<Real> xf = x * f;
    Val<Real> s = vsin(xf);
    Val<Real> c = vcos(xf);
    out.sin_l.push_back(s);
    out.cos_l.push_back(c);
    out.freq.push_back(f);
    blocks.push_back(s);
    blocks.push_back(c);
  }
  out.enc = blocks.size() == 1 ? blocks[0] : vconcat(blocks, 1);
  return out;
}

// ---- linear layer with optional weight-norm reparameterization ----

template <class Real>
struct Linear {
  Param<Real> v;     // [in, out] direction
  Param<Real> gain;  // [out], present iff weight_norm
  Param<Real> b;     // [out]
  bool weight_norm = false;
  int in = 0, out = 0;

  static Linear make(const std::string& name, int in, int out, bool weight_norm) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weight_norm = weight_norm;
    l.v.name = name + "/v";
    l.v.value = Tensor<Real>::zeros({in, out});
    l.b.name = name + "/b";
    l.b.value = Tensor<Real>::zeros({out});
    if (weight_norm) {
      l.gain.name = name + "/g";
      l.gain.value = Tensor<Real>::zeros({out});
    }
    return l;
  }

  void init_normal(Rng& rng, double std) {
    for (auto& w : v.value.v) w = static_cast<Real>(rng.normal(0, std));
    refresh_gain();
  }

  // weight-norm gains set so the effective weight equals v
  void refresh_gain() {
    if (!weight_norm) return;
    for (int c = 0; c < out; ++c) {
      double s = 0;
      for (int r = 0; r < in; ++r) s += static_cast<double>(v.value.at(r, c)) * v.value.at(r, c);
      gain.value.v[static_cast<size_t>(c)] = static_cast<Real>(std::sqrt(s));
    }
  }

  Val<Real> weight(Staging<Real>& st) {
    Val<Real> vv = st.use(v);
    if (!weight_norm) return vv;
    Val<Real> norms = vnorm2(vv, 0);            // column norms [out]
    Val<Real> scale = st.use(gain) / norms;
    return vmul_rowvec(vv, scale);
  }

  Val<Real> forward(Staging<Real>& st, Val<Real> x) {
    return vadd_rowvec(vmatmul(x, weight(st)), st.use(b));
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    fn(v);
    if (weight_norm) fn(gain);
    fn(b);
  }
};

// ---- plain MLP (color network, deformation sub-networks) ----

template <class Real>
struct Mlp {
  enum class Act { Relu, Softplus };
  Act act = Act::Relu;
  double beta = 1.0;  // softplus sharpness
  std::vector<Linear<Real>> layers;

  static Mlp make(const std::string& name, const std::vector<int>& dims, Act act,
                  double beta = 1.0, bool weight_norm = false) {
    Mlp m;
    m.act = act;
    m.beta = beta;
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      m.layers.push_back(
          Linear<Real>::make(name + "/l" + std::to_string(i), dims[i], dims[i + 1], weight_norm));
    return m;
  }

  void init_random(Rng& rng) {
    for (auto& l : layers) l.init_normal(rng, std::sqrt(2.0 / l.in));
  }

  void zero_output_layer() {
    Linear<Real>& last = layers.back();
    std::fill(last.v.value.v.begin(), last.v.value.v.end(), Real(0));
    std::fill(last.b.value.v.begin(), last.b.value.v.end(), Real(0));
    last.refresh_gain();
  }

  Val<Real> forward(Staging<Real>& st, Val<Real> x) {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(st, x);
      if (i + 1 < layers.size()) x = act == Act::Relu ? vrelu(x) : vsoftplus(x, beta);
    }
    return x;
  }

  // forward on raw values through a scratch graph (single evaluation path)
  Tensor<Real> eval(const Tensor<Real>& x) {
    Graph<Real> g;
    g.grad_enabled = false;
    Staging<Real> st(g, false);
    return forward(st, vconst(g, x)).t();
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    for (auto& l : layers) l.for_each_param(fn);
  }
};

// ---- SDF network ----

struct SdfConfig {
  PosencConfig posenc{6, true};
  int hidden = 128;
  int hidden_layers = 4;
  int skip_layer = 2;     // hidden layer whose input is concat(h, enc)/sqrt(2)
  int feature_dim = 64;
  double softplus_beta = 100.0;
  bool weight_norm = true;
};

// MLP g: R^3 -> (sdf, feature) with a skip connection, softplus activations,
// weight normalization, and geometric initialization. forward() can also emit
// the spatial gradient of the sdf output as graph ops (chain rule unrolled
// layer by layer), so losses on the gradient differentiate the analytic
// first-derivative expression rather than nesting backward passes.
template <class Real>
struct SdfNet {
  SdfConfig cfg;
  std::vector<Linear<Real>> hidden;  // cfg.hidden_layers entries
  Linear<Real> out;                  // hidden -> 1 + feature_dim

  static SdfNet make(const std::string& name, const SdfConfig& cfg) {
    SdfNet net;
    net.cfg = cfg;
    const int enc_dim = cfg.posenc.output_dim(3);
    for (int i = 0; i < cfg.hidden_layers; ++i) {
      const int in = i == 0 ? enc_dim : (i == cfg.skip_layer ? cfg.hidden + enc_dim : cfg.hidden);
      net.hidden.push_back(Linear<Real>::make(name + "/l" + std::to_string(i), in, cfg.hidden,
                                              cfg.weight_norm));
    }
    net.out = Linear<Real>::make(name + "/out", cfg.hidden, 1 + cfg.feature_dim, cfg.weight_norm);
    return net;
  }

  // Initializes so g(x) approximates |x| - radius. Hidden layers get the
  // random spherical-prior scheme (first-layer and skip-layer encoding rows
  // silent, variance-preserving normal weights); the sdf output column is then
  // least-squares fitted to the sphere oracle over the 2r-ball, which pins the
  // approximation error well below the random-feature spread at finite width.
  void geometric_init(double radius, Rng& rng) {
    const int enc_dim = cfg.posenc.output_dim(3);
    for (int i = 0; i < cfg.hidden_layers; ++i) {
      Linear<Real>& l = hidden[static_cast<size_t>(i)];
      l.init_normal(rng, std::sqrt(2.0 / l.out));
      std::fill(l.b.value.v.begin(), l.b.value.v.end(), Real(0));
      if (i == 0) {
        // rows beyond the raw xyz inputs start silent
        for (int r = 3; r < l.in; ++r)
          for (int c = 0; c < l.out; ++c) l.v.value.at(r, c) = 0;
      }
      if (i == cfg.skip_layer && i != 0) {
        // encoded part of the skip input starts silent except raw xyz; the
        // live rows gain sqrt(2) back, compensating the skip concat scaling
        for (int r = 0; r < cfg.hidden; ++r)
          for (int c = 0; c < l.out; ++c)
            l.v.value.at(r, c) = static_cast<Real>(l.v.value.at(r, c) * std::sqrt(2.0));
        for (int r = cfg.hidden + 3; r < cfg.hidden + enc_dim; ++r)
          for (int c = 0; c < l.out; ++c) l.v.value.at(r, c) = 0;
      }
      l.refresh_gain();
    }
    const double mean = std::sqrt(M_PI) / std::sqrt(static_cast<double>(out.in));
    for (auto& w : out.v.value.v) w = static_cast<Real>(rng.normal(mean, 1e-4));
    std::fill(out.b.value.v.begin(), out.b.value.v.end(), static_cast<Real>(-radius));
    fit_output_to_sphere(radius, rng);
    out.refresh_gain();
  }

  struct Out {
    Val<Real> g;     // [N, 1]
    Val<Real> feat;  // [N, feature_dim]
    Val<Real> grad;  // [N, 3] d g / d x, valid iff with_grad
    PosencOut<Real> enc;
  };

  Out forward(Staging<Real>& st, Val<Real> x, bool with_grad) {
    Graph<Real>& g = *st.g;
    Out result;
    result.enc = posenc_val(x, cfg.posenc);
    const Val<Real> enc = result.enc.enc;
    const int n = x.shape()[0];
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

    std::vector<Val<Real>> weights;   // effective weights per hidden layer
    std::vector<Val<Real>> preacts;   // z before activation
    Val<Real> h = enc;
    for (int i = 0; i < cfg.hidden_layers; ++i) {
      Linear<Real>& l = hidden[static_cast<size_t>(i)];
      if (i == cfg.skip_layer && i != 0) h = vconcat<Real>({h, enc}, 1) * inv_sqrt2;
      Val<Real> w = l.weight(st);
      Val<Real> z = vadd_rowvec(vmatmul(h, w), st.use(l.b));
      weights.push_back(w);
      preacts.push_back(z);
      h = vsoftplus(z, cfg.softplus_beta);
    }
    Val<Real> w_out = out.weight(st);
    Val<Real> o = vadd_rowvec(vmatmul(h, w_out), st.use(out.b));
    result.g = vcols(o, 0, 1);
    result.feat = cfg.feature_dim > 0 ? vcols(o, 1, 1 + cfg.feature_dim) : result.g;

    if (with_grad) {
      // u = d g / d (layer input), walked back through the layers
      Val<Real> ones = vconst(g, Tensor<Real>::full({n, 1}, Real(1)));
      Val<Real> u = vmatmul(ones, vtranspose(vcols(w_out, 0, 1)));  // [n, hidden]
      Val<Real> u_enc;  // accumulated d g / d enc
      bool have_enc = false;
      for (int i = cfg.hidden_layers - 1; i >= 0; --i) {
        Val<Real> actp = vsigmoid(preacts[static_cast<size_t>(i)] * cfg.softplus_beta);
        u = vmatmul(u * actp, vtranspose(weights[static_cast<size_t>(i)]));
        if (i == cfg.skip_layer && i != 0) {
          u = u * inv_sqrt2;
          Val<Real> part = vcols(u, cfg.hidden, cfg.hidden + result.enc.enc.shape()[1]);
          u_enc = have_enc ? u_enc + part : part;
          have_enc = true;
          u = vcols(u, 0, cfg.hidden);
        }
      }
      u_enc = have_enc ? u_enc + u : u;  // layer 0 input is enc
      // chain through the encoding: blocks [x | sin_l | cos_l ...] of width 3
      int col = 0;
      Val<Real> gx = cfg.posenc.include_input ? vcols(u_enc, 0, 3)
                                              : vconst(g, Tensor<Real>::zeros({n, 3}));
      if (cfg.posenc.include_input) col = 3;
      for (size_t l = 0; l < result.enc.freq.size(); ++l) {
        const double f = result.enc.freq[l];
        Val<Real> us = vcols(u_enc, col, col + 3);
        Val<Real> uc = vcols(u_enc, col + 3, col + 6);
        col += 6;
        gx = gx + us * result.enc.cos_l[l] * f + uc * result.enc.sin_l[l] * (-f);
      }
      result.grad = gx;
    }
    return result;
  }

  Tensor<Real> eval_g(const Tensor<Real>& pts) {
    Graph<Real> g;
    g.grad_enabled = false;
    Staging<Real> st(g, false);
    return forward(st, vconst(g, pts), false).g.t();
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    for (auto& l : hidden) l.for_each_param(fn);
    out.for_each_param(fn);
  }

 private:
  // features entering the output layer
  Tensor<Real> hidden_features(const Tensor<Real>& pts) {
    Graph<Real> g;
    g.grad_enabled = false;
    Staging<Real> st(g, false);
    Val<Real> enc = posenc_val(vconst(g, pts), cfg.posenc).enc;
    Val<Real> h = enc;
    for (int i = 0; i < cfg.hidden_layers; ++i) {
      if (i == cfg.skip_layer && i != 0) h = vconcat<Real>({h, enc}, 1) * (1.0 / std::sqrt(2.0));
      h = vsoftplus(hidden[static_cast<size_t>(i)].forward(st, h), cfg.softplus_beta);
    }
    return h.t();
  }

  void fit_output_to_sphere(double radius, Rng& rng) {
    const int m = 2048, hdim = out.in;
    Tensor<Real> pts = Tensor<Real>::zeros({m, 3});
    std::vector<double> target(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
      const Vec3 d = normalized({rng.normal(), rng.normal(), rng.normal()});
      const double rad = 2.0 * radius * std::cbrt(rng.uniform());
      for (int c = 0; c < 3; ++c) pts.at(i, c) = static_cast<Real>(rad * d[c]);
      target[static_cast<size_t>(i)] = rad - radius;
    }
    const Tensor<Real> feats = hidden_features(pts);
    Eigen::MatrixXd H(m, hdim + 1);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < hdim; ++c) H(i, c) = static_cast<double>(feats.at(i, c));
      H(i, hdim) = 1.0;
      y(i) = target[static_cast<size_t>(i)];
    }
    Eigen::MatrixXd A = H.transpose() * H;
    A.diagonal().array() += 1e-4 * m;
    const Eigen::VectorXd w = A.ldlt().solve(H.transpose() * y);
    for (int r = 0; r < hdim; ++r) out.v.value.at(r, 0) = static_cast<Real>(w(r));
    out.b.value.v[0] = static_cast<Real>(w(hdim));
  }
};

// ---- color network ----

struct ColorConfig {
  int hidden = 128;
  int hidden_layers = 3;
  PosencConfig view_posenc{4, true};
};

// ReLU MLP mapping (point encoding, view encoding, sdf feature, sdf gradient)
// to RGB in [0,1] via a sigmoid.
template <class Real>
struct ColorNet {
  ColorConfig cfg;
  Mlp<Real> mlp;

  static ColorNet make(const std::string& name, const ColorConfig& cfg, int point_enc_dim,
                       int feature_dim, Rng& rng) {
    ColorNet net;
    net.cfg = cfg;
    const int in = point_enc_dim + cfg.view_posenc.output_dim(3) + feature_dim + 3;
    std::vector<int> dims{in};
    for (int i = 0; i < cfg.hidden_layers; ++i) dims.push_back(cfg.hidden);
    dims.push_back(3);
    net.mlp = Mlp<Real>::make(name, dims, Mlp<Real>::Act::Relu, 1.0, true);
    net.mlp.init_random(rng);
    return net;
  }

  Val<Real> forward(Staging<Real>& st, Val<Real> point_enc, Val<Real> view_dirs, Val<Real> feat,
                    Val<Real> grad) {
    Val<Real> venc = posenc_val(view_dirs, cfg.view_posenc).enc;
    Val<Real> in = vconcat<Real>({point_enc, venc, feat, grad}, 1);
    return vsigmoid(mlp.forward(st, in));
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    mlp.for_each_param(fn);
  }
};

}  // namespace fnvr
