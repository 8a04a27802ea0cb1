#pragma once

#include <vector>

#include "fnvr/rendering.hpp"

namespace fnvr {

// total = L_color + l1 L_depth + l2 L_free + l3 L_surface
struct LossWeights {
  double depth = 0.1;      // lambda_1 (< 1: depth input is noisy)
  double freespace = 1.0;  // lambda_2
  double surface = 0.1;    // lambda_3
};

// ground truth attached to a minibatch of rays
template <class Real>
struct RayBatchGt {
  Tensor<Real> color;               // [R, 3]
  std::vector<double> depth;        // [R]
  std::vector<uint8_t> depth_valid; // [R]
};

// mean over rays of the mean per-channel L1 color error
template <class Real>
Val<Real> loss_color(Val<Real> rendered, const Tensor<Real>& gt) {
  if (rendered.shape() != gt.shape || gt.numel() == 0)
    throw std::invalid_argument("loss_color: empty batch or shape mismatch");
  return vmean(vabs(rendered - vconst(*rendered.g, gt)));
}

template <class Real>
struct DepthLossResult {
  Val<Real> value;
  bool all_invalid = false;
};

// mean absolute depth error over valid-depth rays; rays with invalid depth are
// excluded from numerator and denominator. All-invalid batches yield 0 with a
// flag (real captures have depth holes).
template <class Real>
DepthLossResult<Real> loss_depth(Val<Real> rendered_depth, const std::vector<double>& gt,
                                 const std::vector<uint8_t>& valid) {
  Graph<Real>& g = *rendered_depth.g;
  const int n = static_cast<int>(gt.size());
  int count = 0;
  Tensor<Real> gt_t = Tensor<Real>::zeros({n});
  Tensor<Real> mask = Tensor<Real>::zeros({n});
  for (int i = 0; i < n; ++i)
    if (valid[static_cast<size_t>(i)]) {
      gt_t.v[static_cast<size_t>(i)] = static_cast<Real>(gt[static_cast<size_t>(i)]);
      mask.v[static_cast<size_t>(i)] = Real(1);
      ++count;
    }
  DepthLossResult<Real> out;
  if (count == 0) {
    out.value = vconst(g, Tensor<Real>::scalar(Real(0)));
    out.all_invalid = true;
    return out;
  }
  Val<Real> diff = vabs(rendered_depth - vconst(g, gt_t)) * vconst(g, mask);
  out.value = vsum(diff) * (1.0 / count);
  return out;
}

// mean |T_p alpha_p| over fine samples strictly in observed free space
// (sample depth < D_t(ray) - margin on valid-depth rays); margin 0 reproduces
// the strict free-space set.
template <class Real>
Val<Real> loss_freespace(const RenderBatch<Real>& batch, const std::vector<double>& gt,
                         const std::vector<uint8_t>& valid, double margin) {
  Graph<Real>& g = *batch.weights.g;
  Tensor<Real> mask = Tensor<Real>::zeros({batch.rows, batch.slots});
  int64_t count = 0;
  for (int r = 0; r < batch.rows; ++r) {
    if (!valid[static_cast<size_t>(r)]) continue;
    for (int k = 0; k < batch.slots; ++k) {
      const size_t slot = static_cast<size_t>(r) * batch.slots + k;
      if (batch.slot_object[slot] < 0) continue;
      if (batch.slot_depth[slot] < gt[static_cast<size_t>(r)] - margin) {
        mask.v[slot] = Real(1);
        ++count;
      }
    }
  }
  if (count == 0) return vconst(g, Tensor<Real>::scalar(Real(0)));
  return vsum(vabs(batch.weights) * vconst(g, std::move(mask))) * (1.0 / static_cast<double>(count));
}

// per-object regularizer samples, in object-local (canonical, unnormalized)
// coordinates: surface points with target normals and uniform volume points.
template <class Real>
struct SurfaceSamples {
  int obj_index = 0;
  Tensor<Real> surface_pts;  // [M, 3]
  Tensor<Real> normals;      // [M, 3]
  Tensor<Real> volume_pts;   // [B, 3]
};

template <class Real>
struct SurfaceSampleSet {
  std::vector<SurfaceSamples<Real>> per_object;
  double band_epsilon = 0.0;  // half-width of the surface band the points came from
};

namespace detail_loss {

template <class Real>
struct FieldSamples {
  Val<Real> g;           // [N, 1]
  Val<Real> grad_local;  // [N, 3] in unnormalized local coordinates
};

// sdf + local-frame gradient at local points, graph-side for neural fields and
// constants for analytic ones
template <class Real>
FieldSamples<Real> sample_field(Staging<Real>& st, ObjectModel<Real>& obj,
                                const Tensor<Real>& local_pts) {
  Graph<Real>& g = *st.g;
  const int n = local_pts.dim(0);
  FieldSamples<Real> out;
  if (obj.backend == FieldBackend::Analytic) {
    Tensor<Real> gv = Tensor<Real>::zeros({n, 1});
    Tensor<Real> gr = Tensor<Real>::zeros({n, 3});
    for (int i = 0; i < n; ++i) {
      const Vec3 p{static_cast<double>(local_pts.at(i, 0)), static_cast<double>(local_pts.at(i, 1)),
                   static_cast<double>(local_pts.at(i, 2))};
      gv.v[static_cast<size_t>(i)] = static_cast<Real>(obj.analytic.eval(p));
      const Vec3 grad = obj.analytic.gradient(p);
      gr.at(i, 0) = static_cast<Real>(grad.x);
      gr.at(i, 1) = static_cast<Real>(grad.y);
      gr.at(i, 2) = static_cast<Real>(grad.z);
    }
    out.g = vconst(g, std::move(gv));
    out.grad_local = vconst(g, std::move(gr));
    return out;
  }
  const Vec3 c = obj.aabb.center(), h = obj.aabb.half_extent();
  Tensor<Real> norm_pts = local_pts;
  for (int i = 0; i < n; ++i) {
    norm_pts.at(i, 0) = static_cast<Real>((norm_pts.at(i, 0) - c.x) / h.x);
    norm_pts.at(i, 1) = static_cast<Real>((norm_pts.at(i, 1) - c.y) / h.y);
    norm_pts.at(i, 2) = static_cast<Real>((norm_pts.at(i, 2) - c.z) / h.z);
  }
  auto sdf_out = obj.sdf.forward(st, vconst(g, std::move(norm_pts)), true);
  out.g = sdf_out.g;
  Val<Real> inv_half = vconst(g, Tensor<Real>::from({3}, {static_cast<Real>(1.0 / h.x),
                                                          static_cast<Real>(1.0 / h.y),
                                                          static_cast<Real>(1.0 / h.z)}));
  out.grad_local = vmul_rowvec(sdf_out.grad, inv_half);
  return out;
}

}  // namespace detail_loss

// mean over objects of [ Eikonal over volume points + normal agreement over
// surface points + |g| over surface points ]. These evaluate directly from
// field queries, without any volume rendering. The normal term uses the
// normalized SDF gradient by default, which keeps Eikonal error out of it;
// normalize=false reproduces the raw-gradient formulation.
template <class Real>
Val<Real> loss_surface(Staging<Real>& st, FactoredScene<Real>& scene,
                       const SurfaceSampleSet<Real>& samples, bool normalize = true) {
  Graph<Real>& g = *st.g;
  Val<Real> total = vconst(g, Tensor<Real>::scalar(Real(0)));
  if (samples.per_object.empty()) return total;
  for (const SurfaceSamples<Real>& s : samples.per_object) {
    ObjectModel<Real>& obj = scene.objects[static_cast<size_t>(s.obj_index)];
    Val<Real> term = vconst(g, Tensor<Real>::scalar(Real(0)));
    if (s.volume_pts.numel() > 0) {
      auto vb = detail_loss::sample_field(st, obj, s.volume_pts);
      term = term + vmean(vabs(vnorm2(vb.grad_local, 1) + (-1.0)));
    }
    if (s.surface_pts.numel() > 0) {
      auto sb = detail_loss::sample_field(st, obj, s.surface_pts);
      Val<Real> grad = sb.grad_local;
      if (normalize)
        grad = vscale_rows(grad, vconst(g, Tensor<Real>::full({s.surface_pts.dim(0)}, Real(1))) /
                                     vmax(vnorm2(grad, 1), 1e-12));
      Val<Real> dot_n = vsum(grad * vconst(g, s.normals), 1);
      term = term + vmean(vabs(1.0 - dot_n));
      term = term + vmean(vabs(sb.g));
    }
    total = total + term;
  }
  return total * (1.0 / static_cast<double>(samples.per_object.size()));
}

template <class Real>
struct TotalLoss {
  Val<Real> total, color, depth, freespace, surface;
  bool depth_all_invalid = false;
  double color_v = 0, depth_v = 0, freespace_v = 0, surface_v = 0, total_v = 0;
};

template <class Real>
TotalLoss<Real> loss_total(Staging<Real>& st, FactoredScene<Real>& scene,
                           const RenderBatch<Real>& batch, const RayBatchGt<Real>& gt,
                           const SurfaceSampleSet<Real>& samples, const LossWeights& w,
                           double freespace_margin) {
  TotalLoss<Real> out;
  out.color = loss_color(batch.color, gt.color);
  auto d = loss_depth(batch.depth, gt.depth, gt.depth_valid);
  out.depth = d.value;
  out.depth_all_invalid = d.all_invalid;
  out.freespace = loss_freespace(batch, gt.depth, gt.depth_valid, freespace_margin);
  out.surface = loss_surface(st, scene, samples);
  out.total = out.color + w.depth * out.depth + w.freespace * out.freespace + w.surface * out.surface;
  out.color_v = static_cast<double>(out.color.scalar());
  out.depth_v = static_cast<double>(out.depth.scalar());
  out.freespace_v = static_cast<double>(out.freespace.scalar());
  out.surface_v = static_cast<double>(out.surface.scalar());
  out.total_v = static_cast<double>(out.total.scalar());
  return out;
}

}  // namespace fnvr
