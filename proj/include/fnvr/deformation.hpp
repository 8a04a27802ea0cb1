#pragma once

#include <array>

#include "fnvr/fields.hpp"

namespace fnvr {

struct DeformConfig {
  int hidden = 64;
  int hidden_layers = 2;
  int latent_dim = 16;
  double softplus_beta = 100.0;
};

// Bijective coordinate map built from three axis steps applied in X, Y, Z
// order. Each step displaces one axis conditioned on the other two coordinates
// plus a per-frame code (coupling structure), then applies a 2D rigid motion
// to the other two axes conditioned on the updated axis coordinate. Every step
// inverts exactly, so inverse(forward(p)) == p up to round-off. Output layers
// start at zero: the block is the identity at initialization.
template <class Real>
struct DeformationBlock {
  DeformConfig cfg;
  struct Step {
    Mlp<Real> disp;   // (2 coords + code) -> 1 displacement
    Mlp<Real> rigid;  // (1 updated coord + code) -> (theta, t1, t2)
  };
  std::array<Step, 3> steps;  // X, Y, Z
  Param<Real> codes;          // [num_frames, latent_dim], zero-initialized

  static DeformationBlock make(const std::string& name, const DeformConfig& cfg, int num_frames,
                               Rng& rng) {
    DeformationBlock b;
    b.cfg = cfg;
    for (int a = 0; a < 3; ++a) {
      std::vector<int> ddims{2 + cfg.latent_dim};
      std::vector<int> rdims{1 + cfg.latent_dim};
      for (int i = 0; i < cfg.hidden_layers; ++i) {
        ddims.push_back(cfg.hidden);
        rdims.push_back(cfg.hidden);
      }
      ddims.push_back(1);
      rdims.push_back(3);
      auto& s = b.steps[static_cast<size_t>(a)];
      s.disp = Mlp<Real>::make(name + "/s" + std::to_string(a) + "/disp", ddims,
                               Mlp<Real>::Act::Softplus, cfg.softplus_beta);
      s.rigid = Mlp<Real>::make(name + "/s" + std::to_string(a) + "/rigid", rdims,
                                Mlp<Real>::Act::Softplus, cfg.softplus_beta);
      s.disp.init_random(rng);
      s.rigid.init_random(rng);
      s.disp.zero_output_layer();
      s.rigid.zero_output_layer();
    }
    b.codes.name = name + "/codes";
    b.codes.value = Tensor<Real>::zeros({num_frames, cfg.latent_dim});
    b.codes.group = kGroupDeformCodes;
    return b;
  }

  // observed -> canonical on [N,3] points; code is the per-row [N,latent] code
  // matrix (rows gathered by frame).
  Val<Real> forward(Staging<Real>& st, Val<Real> pts, Val<Real> code) {
    for (int a = 0; a < 3; ++a) pts = apply_step(st, a, pts, code);
    return pts;
  }

  // canonical -> observed; steps inverted in Z, Y, X order, each in closed form.
  Tensor<Real> inverse(const Tensor<Real>& pts, const Tensor<Real>& code) {
    Tensor<Real> p = pts;
    for (int a = 2; a >= 0; --a) invert_step_inplace(a, p, code);
    return p;
  }

  // plain forward on raw values (scratch graph)
  Tensor<Real> forward_plain(const Tensor<Real>& pts, const Tensor<Real>& code) {
    Graph<Real> g;
    g.grad_enabled = false;
    Staging<Real> st(g, false);
    return forward(st, vconst(g, pts), vconst(g, code)).t();
  }

  Tensor<Real> codes_for(const std::vector<int>& frames) const {
    const int latent = cfg.latent_dim;
    Tensor<Real> out = Tensor<Real>::zeros({static_cast<int>(frames.size()), latent});
    for (size_t r = 0; r < frames.size(); ++r)
      for (int c = 0; c < latent; ++c)
        out.at(static_cast<int>(r), c) = codes.value.at(frames[r], c);
    return out;
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    for (auto& s : steps) {
      s.disp.for_each_param(fn);
      s.rigid.for_each_param(fn);
    }
    fn(codes);
  }

 private:
  static std::array<int, 2> other_axes(int a) {
    return a == 0 ? std::array<int, 2>{1, 2} : (a == 1 ? std::array<int, 2>{0, 2} : std::array<int, 2>{0, 1});
  }

  Val<Real> apply_step(Staging<Real>& st, int a, Val<Real> pts, Val<Real> code) {
    auto& s = steps[static_cast<size_t>(a)];
    const auto [o1, o2] = other_axes(a);
    Val<Real> u = vcols(pts, a, a + 1);
    Val<Real> v = vcols(pts, o1, o1 + 1);
    Val<Real> w = vcols(pts, o2, o2 + 1);
    Val<Real> d = s.disp.forward(st, vconcat<Real>({v, w, code}, 1));
    Val<Real> u2 = u + d;
    Val<Real> m = s.rigid.forward(st, vconcat<Real>({u2, code}, 1));
    Val<Real> theta = vcols(m, 0, 1);
    Val<Real> t1 = vcols(m, 1, 2);
    Val<Real> t2 = vcols(m, 2, 3);
    Val<Real> c = vcos(theta);
    Val<Real> sn = vsin(theta);
    Val<Real> v2 = v * c - w * sn + t1;
    Val<Real> w2 = v * sn + w * c + t2;
    // reassemble (u2 at axis a, v2 at o1, w2 at o2) back into xyz column order
    Val<Real> packed = vconcat<Real>({u2, v2, w2}, 1);
    static const std::array<std::vector<int32_t>, 3> kPerm{
        std::vector<int32_t>{0, 1, 2}, {1, 0, 2}, {1, 2, 0}};
    return vindex_select(packed, 1, kPerm[static_cast<size_t>(a)]);
  }

  void invert_step_inplace(int a, Tensor<Real>& p, const Tensor<Real>& code) {
    auto& s = steps[static_cast<size_t>(a)];
    const auto [o1, o2] = other_axes(a);
    const int n = p.dim(0), latent = code.dim(1);
    Tensor<Real> rig_in = Tensor<Real>::zeros({n, 1 + latent});
    for (int r = 0; r < n; ++r) {
      rig_in.at(r, 0) = p.at(r, a);
      for (int c = 0; c < latent; ++c) rig_in.at(r, 1 + c) = code.at(r, c);
    }
    const Tensor<Real> m = s.rigid.eval(rig_in);
    Tensor<Real> disp_in = Tensor<Real>::zeros({n, 2 + latent});
    for (int r = 0; r < n; ++r) {
      const Real theta = m.at(r, 0), t1 = m.at(r, 1), t2 = m.at(r, 2);
      const Real c = std::cos(theta), sn = std::sin(theta);
      const Real dv = p.at(r, o1) - t1, dw = p.at(r, o2) - t2;
      const Real v = c * dv + sn * dw;   // R(-theta)
      const Real w = -sn * dv + c * dw;
      p.at(r, o1) = v;
      p.at(r, o2) = w;
      disp_in.at(r, 0) = v;
      disp_in.at(r, 1) = w;
      for (int cc = 0; cc < latent; ++cc) disp_in.at(r, 2 + cc) = code.at(r, cc);
    }
    const Tensor<Real> d = s.disp.eval(disp_in);
    for (int r = 0; r < n; ++r) p.at(r, a) -= d.at(r, 0);
  }
};

}  // namespace fnvr
