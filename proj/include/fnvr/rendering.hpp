#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "fnvr/image.hpp"
#include "fnvr/scene.hpp"

namespace fnvr {

struct SamplingConfig {
  int coarse_per_interval = 32;
  int n_fine = 128;
  int min_per_interval = 8;
  bool jitter = true;
  uint64_t seed = 0;

  void validate() const {
    if (coarse_per_interval < 1 || n_fine < 1) fail("sampling config: counts must be >= 1");
  }
};

// logistic sigma of the clamped argument; clamping keeps the Phi ratio finite
// when s*g saturates
inline double opacity_phi(double x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -30.0, 30.0))); }

// Eq-style conversion of two consecutive SDF samples along a ray into an
// opacity: alpha = max((Phi(s g_j) - Phi(s g_{j+1})) / Phi(s g_j), 0).
inline double sdf_to_opacity(double g_j, double g_j1, double sharpness) {
  if (!(sharpness > 0)) fail("sdf_to_opacity: sharpness must be positive");
  const double a = opacity_phi(sharpness * g_j);
  const double b = opacity_phi(sharpness * g_j1);
  return std::max((a - b) / a, 0.0);
}

// One point on a ray, ready for compositing.
struct Sample {
  double depth = 0;
  Vec3 position;
  int object_id = 0;
  Vec3 local;
  double sdf = 0;
  double alpha = 0;
  Vec3 color;
  double delta = 0;
};

struct RayResult {
  Vec3 color;
  double depth = 0;
  double acc = 0;
  std::vector<std::pair<int, double>> object_weights;  // (object id, weight sum)
  std::vector<double> sample_weights;                  // T_i * alpha_i per sample
};

// Quadrature compositing of a depth-sorted sample list:
// T_i = prod_{j<i}(1 - alpha_j), color = sum T_i alpha_i c_i, depth likewise.
inline RayResult composite(const std::vector<Sample>& samples) {
  RayResult out;
  std::map<int, double> per_object;
  double T = 1.0;
  double prev_depth = -1e300;
  for (const Sample& s : samples) {
    if (s.depth < prev_depth) fail("composite: samples not sorted ascending by depth");
    if (s.alpha < 0 || s.alpha > 1) fail("composite: alpha outside [0,1]");
    prev_depth = s.depth;
    const double w = T * s.alpha;
    out.sample_weights.push_back(w);
    out.color = out.color + w * s.color;
    out.depth += w * s.depth;
    out.acc += w;
    per_object[s.object_id] += w;
    T *= 1.0 - s.alpha;
  }
  out.object_weights.assign(per_object.begin(), per_object.end());
  return out;
}

// n depths over (t_near, t_far), one per equal sub-interval: midpoints with
// jitter off, uniform within the sub-interval with jitter on.
inline std::vector<double> stratified_samples(double t_near, double t_far, int n, bool jitter,
                                              Rng& rng) {
  if (!(t_near < t_far)) fail("stratified_samples: empty interval");
  if (n < 1) fail("stratified_samples: need n >= 1");
  std::vector<double> out(static_cast<size_t>(n));
  const double w = (t_far - t_near) / n;
  for (int i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] = t_near + w * (i + (jitter ? rng.uniform() : 0.5));
  return out;
}

// Draws n_fine depths from the piecewise-constant PDF over bins centered at
// the given depths (edges at midpoints), stratified; all-zero weights fall
// back to the uniform PDF. Output is sorted ascending.
inline std::vector<double> inverse_transform_sample(const std::vector<double>& depths,
                                                    std::vector<double> weights, int n_fine,
                                                    Rng& rng) {
  if (depths.size() != weights.size() || depths.empty())
    fail("inverse_transform_sample: depths/weights mismatch");
  const size_t m = depths.size();
  double total = 0;
  for (double w : weights) {
    if (w < 0) fail("inverse_transform_sample: negative weight");
    total += w;
  }
  if (total <= 0) {
    weights.assign(m, 1.0);
    total = static_cast<double>(m);
  }
  std::vector<double> edges(m + 1);
  edges[0] = depths[0];
  for (size_t k = 1; k < m; ++k) edges[k] = 0.5 * (depths[k - 1] + depths[k]);
  edges[m] = depths[m - 1];
  std::vector<double> cdf(m + 1, 0.0);
  for (size_t k = 0; k < m; ++k) cdf[k + 1] = cdf[k] + weights[k] / total;
  cdf[m] = 1.0;

  std::vector<double> out(static_cast<size_t>(n_fine));
  size_t bin = 0;
  for (int i = 0; i < n_fine; ++i) {
    const double u = (i + rng.uniform()) / n_fine;
    while (bin + 1 < m && cdf[bin + 1] <= u) ++bin;
    const double span = cdf[bin + 1] - cdf[bin];
    const double frac = span > 0 ? (u - cdf[bin]) / span : 0.5;
    out[static_cast<size_t>(i)] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
  }
  return out;
}

// ---- batched differentiable rendering ----

struct RayRequest {
  Ray ray;
  int frame = 0;
};

template <class Real>
struct RenderBatch {
  Val<Real> color;    // [R, 3]
  Val<Real> depth;    // [R]
  Val<Real> acc;      // [R]
  Val<Real> weights;  // [R, S] (padded slots carry zero weight)
  int rows = 0, slots = 0;
  std::vector<double> slot_depth;  // rows*slots, 0 on padding
  std::vector<int> slot_object;    // object id per slot, -1 on padding
};

namespace detail_render {

inline uint64_t ray_stream_seed(const SamplingConfig& cfg, const RayRequest& rq, uint64_t salt) {
  uint64_t px, py;
  std::memcpy(&px, &rq.ray.px, 8);
  std::memcpy(&py, &rq.ray.py, 8);
  return mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(rq.frame), salt), px, py);
}

template <class Real>
struct ObjRows {
  typename Tensor<Real>::Storage world;  // N*3
  std::vector<int32_t> frames;           // N
  typename Tensor<Real>::Storage view;   // N*3 (world-frame ray directions)
  std::vector<int> ray_index;    // N
  std::vector<double> depth;     // N (sample position along the ray)
  std::vector<double> mid_depth; // N (segment midpoint; depth attribute)
  std::vector<uint8_t> sentinel; // N
  std::vector<int> alpha_index;  // N, -1 for sentinel rows
  std::vector<int32_t> idx_a, idx_b;  // consecutive-pair gathers for alphas
  int count() const { return static_cast<int>(frames.size()); }
};

// rowwise rotation of [N,3] vectors by per-row quaternions [N,4]; conjugate
// rotates by the inverse. Scale-invariant in the quaternion norm.
template <class Real>
Val<Real> rotate_rows(Val<Real> quat, Val<Real> vec, bool conjugate) {
  const double sgn = conjugate ? -1.0 : 1.0;
  Val<Real> w = vcols(quat, 0, 1);
  Val<Real> x = vcols(quat, 1, 2) * sgn;
  Val<Real> y = vcols(quat, 2, 3) * sgn;
  Val<Real> z = vcols(quat, 3, 4) * sgn;
  Val<Real> vx = vcols(vec, 0, 1), vy = vcols(vec, 1, 2), vz = vcols(vec, 2, 3);
  Val<Real> cx = y * vz - z * vy;
  Val<Real> cy = z * vx - x * vz;
  Val<Real> cz = x * vy - y * vx;
  Val<Real> tx = w * cx + (y * cz - z * cy);
  Val<Real> ty = w * cy + (z * cx - x * cz);
  Val<Real> tz = w * cz + (x * cy - y * cx);
  Val<Real> n2 = w * w + x * x + y * y + z * z;
  Val<Real> f = vconst(*quat.g, Tensor<Real>::full({quat.shape()[0], 1}, Real(2))) / n2;
  return vconcat<Real>({vx + f * tx, vy + f * ty, vz + f * tz}, 1);
}

// object-local (unnormalized) coordinates for one object's row batch, as graph
// ops so gradients reach the trajectory parameters
template <class Real>
Val<Real> rows_to_local(Staging<Real>& st, FactoredScene<Real>& scene, int obj_index,
                        const ObjRows<Real>& rows, Val<Real> world) {
  ObjectModel<Real>& obj = scene.objects[static_cast<size_t>(obj_index)];
  Val<Real> local = world;
  if (obj.motion != MotionFlag::Static) {
    Trajectory<Real>& traj = scene.trajectories[static_cast<size_t>(obj_index)];
    Val<Real> quat = vindex_select(st.use(traj.quat), 0, rows.frames);
    Val<Real> trans = vindex_select(st.use(traj.trans), 0, rows.frames);
    local = rotate_rows(quat, local - trans, true);
  }
  if (obj.nonrigid() && obj.deform) {
    Val<Real> codes = vindex_select(st.use(obj.deform->codes), 0, rows.frames);
    local = obj.deform->forward(st, local, codes);
  }
  return local;
}

template <class Real>
struct FieldOut {
  Val<Real> g;      // [N,1]
  Val<Real> color;  // [N,3]
};

// evaluates SDF + color for one object's batch of local (unnormalized) points
template <class Real>
FieldOut<Real> object_fields(Staging<Real>& st, ObjectModel<Real>& obj, Val<Real> local,
                             Val<Real> view_world, Val<Real> quat_rows_or_null) {
  Graph<Real>& g = *st.g;
  const int n = local.shape()[0];
  FieldOut<Real> out;
  if (obj.backend == FieldBackend::Analytic) {
    Tensor<Real> gv = Tensor<Real>::zeros({n, 1});
    const Tensor<Real>& lp = local.t();
    for (int i = 0; i < n; ++i)
      gv.v[static_cast<size_t>(i)] = static_cast<Real>(obj.analytic.eval(
          {static_cast<double>(lp.at(i, 0)), static_cast<double>(lp.at(i, 1)),
           static_cast<double>(lp.at(i, 2))}));
    out.g = vconst(g, std::move(gv));
    Tensor<Real> cv = Tensor<Real>::zeros({n, 3});
    for (int i = 0; i < n; ++i) {
      const Vec3 a = obj.albedo_at({static_cast<double>(lp.at(i, 0)),
                                    static_cast<double>(lp.at(i, 1)),
                                    static_cast<double>(lp.at(i, 2))});
      cv.at(i, 0) = static_cast<Real>(a.x);
      cv.at(i, 1) = static_cast<Real>(a.y);
      cv.at(i, 2) = static_cast<Real>(a.z);
    }
    out.color = vconst(g, std::move(cv));
    return out;
  }
  // normalize to [-1,1] by the AABB
  const Vec3 c = obj.aabb.center(), h = obj.aabb.half_extent();
  Val<Real> center = vconst(g, Tensor<Real>::from({3}, {static_cast<Real>(c.x), static_cast<Real>(c.y),
                                                        static_cast<Real>(c.z)}));
  Val<Real> inv_half = vconst(g, Tensor<Real>::from({3}, {static_cast<Real>(1.0 / h.x),
                                                          static_cast<Real>(1.0 / h.y),
                                                          static_cast<Real>(1.0 / h.z)}));
  Val<Real> norm_pts = vmul_rowvec(vadd_rowvec(local, center * -1.0), inv_half);
  auto sdf_out = obj.sdf.forward(st, norm_pts, true);
  out.g = sdf_out.g;
  // view direction in the object frame so appearance follows the object
  Val<Real> view_local = quat_rows_or_null.g != nullptr
                             ? rotate_rows(quat_rows_or_null, view_world, true)
                             : view_world;
  out.color = obj.color.forward(st, sdf_out.enc.enc, view_local, sdf_out.feat, sdf_out.grad);
  return out;
}

}  // namespace detail_render

// Coarse-stage plain evaluation of one object's sdf at world points, batched
// over arbitrary frames (one row per point).
template <class Real>
std::vector<double> eval_sdf_world_plain(FactoredScene<Real>& scene, int obj_index,
                                         const std::vector<Vec3>& world,
                                         const std::vector<int>& frames) {
  ObjectModel<Real>& obj = scene.objects[static_cast<size_t>(obj_index)];
  const int n = static_cast<int>(world.size());
  Tensor<Real> pts = Tensor<Real>::zeros({n, 3});
  if (obj.motion != MotionFlag::Static) {
    Trajectory<Real>& traj = scene.trajectories[static_cast<size_t>(obj_index)];
    std::map<int, Pose> inv_cache;
    for (int i = 0; i < n; ++i) {
      auto it = inv_cache.find(frames[static_cast<size_t>(i)]);
      if (it == inv_cache.end())
        it = inv_cache.emplace(frames[static_cast<size_t>(i)],
                               pose_inverse(traj.pose(frames[static_cast<size_t>(i)]))).first;
      const Vec3 l = pose_apply(it->second, world[static_cast<size_t>(i)]);
      pts.at(i, 0) = static_cast<Real>(l.x);
      pts.at(i, 1) = static_cast<Real>(l.y);
      pts.at(i, 2) = static_cast<Real>(l.z);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      pts.at(i, 0) = static_cast<Real>(world[static_cast<size_t>(i)].x);
      pts.at(i, 1) = static_cast<Real>(world[static_cast<size_t>(i)].y);
      pts.at(i, 2) = static_cast<Real>(world[static_cast<size_t>(i)].z);
    }
  }
  if (obj.nonrigid() && obj.deform) pts = obj.deform->forward_plain(pts, obj.deform->codes_for(frames));
  std::vector<double> g(static_cast<size_t>(n));
  if (obj.backend == FieldBackend::Analytic) {
    for (int i = 0; i < n; ++i)
      g[static_cast<size_t>(i)] = obj.analytic.eval({static_cast<double>(pts.at(i, 0)),
                                                     static_cast<double>(pts.at(i, 1)),
                                                     static_cast<double>(pts.at(i, 2))});
  } else {
    const Vec3 c = obj.aabb.center(), h = obj.aabb.half_extent();
    for (int i = 0; i < n; ++i) {
      pts.at(i, 0) = static_cast<Real>((pts.at(i, 0) - c.x) / h.x);
      pts.at(i, 1) = static_cast<Real>((pts.at(i, 1) - c.y) / h.y);
      pts.at(i, 2) = static_cast<Real>((pts.at(i, 2) - c.z) / h.z);
    }
    const Tensor<Real> gv = obj.sdf.eval_g(pts);
    for (int i = 0; i < n; ++i) g[static_cast<size_t>(i)] = static_cast<double>(gv.v[static_cast<size_t>(i)]);
  }
  return g;
}

// Sampling support of one ray: intersected intervals with their fine depths.
struct SampleInterval {
  int obj_index;
  double t0, t1;
  std::vector<double> fine;  // sorted fine depths
};
struct SamplePlan {
  std::vector<std::vector<SampleInterval>> per_ray;
};

// Planning stage of the Fig-2 pipeline (no gradients): AABB intersection per
// object, coarse stratified sampling + opacities, inverse-transform sampling
// of fine depths from the combined coarse weights across all intervals, with
// a stratified floor per interval so weakly-weighted objects keep gradient
// signal.
template <class Real>
SamplePlan plan_rays(FactoredScene<Real>& scene, const std::vector<RayRequest>& rays,
                     const SamplingConfig& cfg) {
  cfg.validate();
  const int R = static_cast<int>(rays.size());
  const int num_objects = static_cast<int>(scene.objects.size());
  using Interval = SampleInterval;
  struct CoarseSample {
    double depth;
    int interval;
    double g;
  };

  SamplePlan plan_out;
  std::vector<std::vector<Interval>>& plans = plan_out.per_ray;
  plans.resize(static_cast<size_t>(R));

  // phase 1: intervals + coarse depths per (ray, interval)
  std::vector<std::vector<std::vector<double>>> coarse_depths(static_cast<size_t>(R));
  // per-object world-space boxes cached per frame
  std::map<std::pair<int, int>, AABB> box_cache;
  for (int r = 0; r < R; ++r) {
    const RayRequest& rq = rays[static_cast<size_t>(r)];
    auto& plan = plans[static_cast<size_t>(r)];
    for (int oi = 0; oi < num_objects; ++oi) {
      ObjectModel<Real>& obj = scene.objects[static_cast<size_t>(oi)];
      AABB world_box;
      if (obj.motion == MotionFlag::Static) {
        world_box = obj.aabb;
      } else {
        auto key = std::make_pair(oi, rq.frame);
        auto it = box_cache.find(key);
        if (it == box_cache.end())
          it = box_cache
                   .emplace(key, aabb_transform_hull(
                                     obj.aabb, scene.trajectories[static_cast<size_t>(oi)].pose(rq.frame)))
                   .first;
        world_box = it->second;
      }
      if (auto hit = ray_aabb_intersect(rq.ray, world_box))
        plan.push_back({oi, hit->first, hit->second, {}});
    }
    auto& cd = coarse_depths[static_cast<size_t>(r)];
    cd.resize(plan.size());
    for (size_t ii = 0; ii < plan.size(); ++ii) {
      Rng crng(detail_render::ray_stream_seed(
          cfg, rq,
          mix_seed(1, static_cast<uint64_t>(scene.objects[static_cast<size_t>(plan[ii].obj_index)].id))));
      cd[ii] = stratified_samples(plan[ii].t0, plan[ii].t1, cfg.coarse_per_interval, cfg.jitter, crng);
    }
  }

  // phase 2: one batched sdf evaluation per object across all rays
  std::vector<std::vector<Vec3>> obj_pts(static_cast<size_t>(num_objects));
  std::vector<std::vector<int>> obj_frames(static_cast<size_t>(num_objects));
  std::vector<std::vector<std::pair<int, int>>> obj_slot(static_cast<size_t>(num_objects));  // (ray, interval)
  for (int r = 0; r < R; ++r) {
    const RayRequest& rq = rays[static_cast<size_t>(r)];
    const auto& plan = plans[static_cast<size_t>(r)];
    for (size_t ii = 0; ii < plan.size(); ++ii) {
      const int oi = plan[ii].obj_index;
      for (double t : coarse_depths[static_cast<size_t>(r)][ii]) {
        obj_pts[static_cast<size_t>(oi)].push_back(rq.ray.o + t * rq.ray.d);
        obj_frames[static_cast<size_t>(oi)].push_back(rq.frame);
        obj_slot[static_cast<size_t>(oi)].emplace_back(r, static_cast<int>(ii));
      }
    }
  }
  // coarse g values addressed by (ray, interval, sample ordinal)
  std::vector<std::vector<std::vector<double>>> coarse_g(static_cast<size_t>(R));
  for (int r = 0; r < R; ++r) {
    coarse_g[static_cast<size_t>(r)].resize(plans[static_cast<size_t>(r)].size());
    for (size_t ii = 0; ii < plans[static_cast<size_t>(r)].size(); ++ii)
      coarse_g[static_cast<size_t>(r)][ii].reserve(static_cast<size_t>(cfg.coarse_per_interval));
  }
  for (int oi = 0; oi < num_objects; ++oi) {
    if (obj_pts[static_cast<size_t>(oi)].empty()) continue;
    const auto g =
        eval_sdf_world_plain(scene, oi, obj_pts[static_cast<size_t>(oi)], obj_frames[static_cast<size_t>(oi)]);
    for (size_t k = 0; k < g.size(); ++k) {
      const auto [r, ii] = obj_slot[static_cast<size_t>(oi)][k];
      coarse_g[static_cast<size_t>(r)][static_cast<size_t>(ii)].push_back(g[k]);
    }
  }

  // phase 3: per-ray merge, weights, and fine-depth placement
  parallel_for(R, [&](int64_t r0, int64_t r1) {
  for (int r = static_cast<int>(r0); r < static_cast<int>(r1); ++r) {
    const RayRequest& rq = rays[static_cast<size_t>(r)];
    auto& plan = plans[static_cast<size_t>(r)];
    if (plan.empty()) continue;

    std::vector<CoarseSample> coarse;
    for (size_t ii = 0; ii < plan.size(); ++ii) {
      const auto& depths = coarse_depths[static_cast<size_t>(r)][ii];
      const auto& g = coarse_g[static_cast<size_t>(r)][ii];
      for (size_t k = 0; k < depths.size(); ++k)
        coarse.push_back({depths[k], static_cast<int>(ii), g[k]});
    }
    // merged transmittance over coarse samples sorted by (depth, object id)
    std::sort(coarse.begin(), coarse.end(), [&](const CoarseSample& a, const CoarseSample& b) {
      if (a.depth != b.depth) return a.depth < b.depth;
      return scene.objects[static_cast<size_t>(plan[static_cast<size_t>(a.interval)].obj_index)].id <
             scene.objects[static_cast<size_t>(plan[static_cast<size_t>(b.interval)].obj_index)].id;
    });
    // per-interval consecutive alphas
    const double s = scene.sharpness();
    std::vector<double> alpha(coarse.size(), 0.0);
    {
      // next coarse sample of the same interval
      std::vector<int> next(coarse.size(), -1);
      std::vector<int> last_of(plan.size(), -1);
      for (int k = static_cast<int>(coarse.size()) - 1; k >= 0; --k) {
        next[static_cast<size_t>(k)] = last_of[static_cast<size_t>(coarse[static_cast<size_t>(k)].interval)];
        last_of[static_cast<size_t>(coarse[static_cast<size_t>(k)].interval)] = k;
      }
      for (size_t k = 0; k < coarse.size(); ++k)
        if (next[k] >= 0)
          alpha[k] = sdf_to_opacity(coarse[k].g, coarse[static_cast<size_t>(next[k])].g, s);
    }
    std::vector<double> weight(coarse.size(), 0.0);
    double T = 1.0;
    for (size_t k = 0; k < coarse.size(); ++k) {
      weight[k] = T * alpha[k];
      T *= 1.0 - alpha[k];
    }

    // fine depths: density-proportional over the combined coarse bins, with a
    // stratified floor per interval to keep weakly-weighted objects alive
    const int k_iv = static_cast<int>(plan.size());
    const int floor_n = std::min(cfg.min_per_interval, std::max(1, cfg.n_fine / k_iv));
    const int cdf_n = cfg.n_fine - floor_n * k_iv;
    for (size_t ii = 0; ii < plan.size(); ++ii) {
      Interval& iv = plan[ii];
      Rng frng(detail_render::ray_stream_seed(
          cfg, rq, mix_seed(2, static_cast<uint64_t>(scene.objects[static_cast<size_t>(iv.obj_index)].id))));
      iv.fine = stratified_samples(iv.t0, iv.t1, floor_n, cfg.jitter, frng);
    }
    if (cdf_n > 0) {
      std::vector<double> depths, weights;
      std::vector<int> owner;
      for (size_t k = 0; k < coarse.size(); ++k) {
        depths.push_back(coarse[k].depth);
        weights.push_back(weight[k]);
        owner.push_back(coarse[k].interval);
      }
      Rng drng(detail_render::ray_stream_seed(cfg, rq, 3));
      const auto fine = inverse_transform_sample(depths, weights, cdf_n, drng);
      // assign each fine depth to the interval of the nearest coarse bin
      size_t bin = 0;
      std::vector<double> edges(coarse.size() + 1);
      edges[0] = depths[0];
      for (size_t k = 1; k < coarse.size(); ++k) edges[k] = 0.5 * (depths[k - 1] + depths[k]);
      edges[coarse.size()] = depths.back();
      for (double t : fine) {
        while (bin + 1 < coarse.size() && edges[bin + 1] <= t) ++bin;
        plan[static_cast<size_t>(owner[bin])].fine.push_back(t);
      }
    }
    for (auto& iv : plan) std::sort(iv.fine.begin(), iv.fine.end());
  }
  }, 8);
  return plan_out;
}

// Evaluation stage: per-object fine evaluation on the planned depths,
// depth-sorted merge across objects, compositing. Differentiable w.r.t. field
// parameters, trajectories, deformation codes, and the opacity sharpness.
template <class Real>
RenderBatch<Real> render_planned(Staging<Real>& st, FactoredScene<Real>& scene,
                                 const std::vector<RayRequest>& rays, const SamplePlan& plan) {
  using detail_render::ObjRows;
  Graph<Real>& graph = *st.g;
  const int R = static_cast<int>(rays.size());
  const int num_objects = static_cast<int>(scene.objects.size());
  const std::vector<std::vector<SampleInterval>>& plans = plan.per_ray;

  // ---- gather per-object rows (fine samples + per-run sentinel) ----
  std::vector<ObjRows<Real>> rows(static_cast<size_t>(num_objects));
  struct SlotRef {
    double depth;
    int object_id;
    int obj_index;
    int row;  // row within the object batch
  };
  std::vector<std::vector<SlotRef>> ray_slots(static_cast<size_t>(R));

  for (int r = 0; r < R; ++r) {
    const RayRequest& rq = rays[static_cast<size_t>(r)];
    for (const SampleInterval& iv : plans[static_cast<size_t>(r)]) {
      if (iv.fine.empty()) continue;
      ObjRows<Real>& rw = rows[static_cast<size_t>(iv.obj_index)];
      const int m = static_cast<int>(iv.fine.size());
      const double tail_delta = m >= 2 ? iv.fine[static_cast<size_t>(m - 1)] - iv.fine[static_cast<size_t>(m - 2)]
                                       : iv.t1 - iv.t0;
      for (int k = 0; k <= m; ++k) {
        const bool sentinel = k == m;
        const double t = sentinel ? iv.fine[static_cast<size_t>(m - 1)] + tail_delta
                                  : iv.fine[static_cast<size_t>(k)];
        const double t_next = k + 1 >= m ? iv.fine[static_cast<size_t>(m - 1)] + tail_delta
                                         : iv.fine[static_cast<size_t>(k + 1)];
        const Vec3 p = rq.ray.o + t * rq.ray.d;
        const int row = rw.count();
        rw.world.push_back(static_cast<Real>(p.x));
        rw.world.push_back(static_cast<Real>(p.y));
        rw.world.push_back(static_cast<Real>(p.z));
        rw.view.push_back(static_cast<Real>(rq.ray.d.x));
        rw.view.push_back(static_cast<Real>(rq.ray.d.y));
        rw.view.push_back(static_cast<Real>(rq.ray.d.z));
        rw.frames.push_back(rq.frame);
        rw.ray_index.push_back(r);
        rw.depth.push_back(t);
        // the alpha of sample k absorbs over [t_k, t_{k+1}]; its depth
        // attribute is the segment midpoint
        rw.mid_depth.push_back(sentinel ? t : 0.5 * (t + t_next));
        rw.sentinel.push_back(sentinel ? 1 : 0);
        rw.alpha_index.push_back(-1);
        if (!sentinel) {
          rw.idx_a.push_back(row);
          rw.idx_b.push_back(row + 1);
          rw.alpha_index[static_cast<size_t>(row)] = static_cast<int>(rw.idx_a.size()) - 1;
          ray_slots[static_cast<size_t>(r)].push_back(
              {t, scene.objects[static_cast<size_t>(iv.obj_index)].id, iv.obj_index, row});
        }
      }
    }
  }

  // ---- per-object graph evaluation ----
  Val<Real> sharp = vexp(st.use(scene.log_sharpness));
  std::vector<Val<Real>> alpha_parts, color_parts;
  std::vector<int> alpha_offset(static_cast<size_t>(num_objects), 0);
  std::vector<int> color_offset(static_cast<size_t>(num_objects), 0);
  int alpha_total = 0, color_total = 0;
  for (int oi = 0; oi < num_objects; ++oi) {
    ObjRows<Real>& rw = rows[static_cast<size_t>(oi)];
    alpha_offset[static_cast<size_t>(oi)] = alpha_total;
    color_offset[static_cast<size_t>(oi)] = color_total;
    if (rw.count() == 0) continue;
    const int n = rw.count();
    Val<Real> world = vconst(graph, Tensor<Real>({n, 3}, std::move(rw.world)));
    Val<Real> view = vconst(graph, Tensor<Real>({n, 3}, std::move(rw.view)));
    Val<Real> local = detail_render::rows_to_local(st, scene, oi, rw, world);
    ObjectModel<Real>& obj = scene.objects[static_cast<size_t>(oi)];
    Val<Real> quat_rows{};  // rotations for view dirs (rigid objects only)
    if (obj.motion != MotionFlag::Static && obj.backend == FieldBackend::Neural)
      quat_rows = vindex_select(st.use(scene.trajectories[static_cast<size_t>(oi)].quat), 0, rw.frames);
    auto fields = detail_render::object_fields(st, obj, local, view, quat_rows);

    Val<Real> g_flat = vreshape(fields.g, {n});
    Val<Real> ga = vindex_select(g_flat, 0, rw.idx_a);
    Val<Real> gb = vindex_select(g_flat, 0, rw.idx_b);
    Val<Real> phi_a = vsigmoid(vclamp(ga * sharp, -30.0, 30.0));
    Val<Real> phi_b = vsigmoid(vclamp(gb * sharp, -30.0, 30.0));
    Val<Real> alpha = vmax(1.0 - phi_b / phi_a, 0.0);
    alpha_parts.push_back(alpha);
    color_parts.push_back(fields.color);
    alpha_total += static_cast<int>(rw.idx_a.size());
    color_total += n;
  }

  // ---- depth-sorted merge into an [R, S] grid and composite ----
  int slots = 1;
  for (auto& sl : ray_slots) {
    std::sort(sl.begin(), sl.end(), [](const SlotRef& a, const SlotRef& b) {
      if (a.depth != b.depth) return a.depth < b.depth;
      return a.object_id < b.object_id;
    });
    slots = std::max(slots, static_cast<int>(sl.size()));
  }

  RenderBatch<Real> out;
  out.rows = R;
  out.slots = slots;
  out.slot_depth.assign(static_cast<size_t>(R) * slots, 0.0);
  out.slot_object.assign(static_cast<size_t>(R) * slots, -1);

  alpha_parts.push_back(vconst(graph, Tensor<Real>::zeros({1})));  // padding entry
  color_parts.push_back(vconst(graph, Tensor<Real>::zeros({1, 3})));
  Val<Real> alpha_cat = alpha_parts.size() == 1 ? alpha_parts[0] : vconcat(alpha_parts, 0);
  Val<Real> color_cat = color_parts.size() == 1 ? color_parts[0] : vconcat(color_parts, 0);

  std::vector<int32_t> alpha_pick(static_cast<size_t>(R) * slots,
                                  static_cast<int32_t>(alpha_total));
  std::vector<int32_t> color_pick(static_cast<size_t>(R) * slots,
                                  static_cast<int32_t>(color_total));
  Tensor<Real> depth_grid = Tensor<Real>::zeros({R, slots});
  for (int r = 0; r < R; ++r) {
    const auto& sl = ray_slots[static_cast<size_t>(r)];
    for (size_t k = 0; k < sl.size(); ++k) {
      const size_t slot = static_cast<size_t>(r) * slots + k;
      const ObjRows<Real>& rw = rows[static_cast<size_t>(sl[k].obj_index)];
      alpha_pick[slot] = static_cast<int32_t>(alpha_offset[static_cast<size_t>(sl[k].obj_index)] +
                                              rw.alpha_index[static_cast<size_t>(sl[k].row)]);
      color_pick[slot] = static_cast<int32_t>(color_offset[static_cast<size_t>(sl[k].obj_index)] +
                                              sl[k].row);
      depth_grid.v[slot] = static_cast<Real>(rw.mid_depth[static_cast<size_t>(sl[k].row)]);
      out.slot_depth[slot] = sl[k].depth;
      out.slot_object[slot] = sl[k].object_id;
    }
  }

  Val<Real> alpha_grid = vreshape(vindex_select(alpha_cat, 0, alpha_pick), {R, slots});
  Val<Real> color_grid = vindex_select(color_cat, 0, color_pick);  // [R*slots, 3]

  Val<Real> one_minus = 1.0 - alpha_grid;
  Val<Real> trans = vcumprod(one_minus, 1);
  Val<Real> ones_col = vconst(graph, Tensor<Real>::full({R, 1}, Real(1)));
  Val<Real> trans_excl =
      slots > 1 ? vconcat<Real>({ones_col, vcols(trans, 0, slots - 1)}, 1) : ones_col;
  Val<Real> w = trans_excl * alpha_grid;  // [R, slots]
  out.weights = w;
  out.acc = vsum(w, 1);
  std::vector<Val<Real>> chans;
  for (int c = 0; c < 3; ++c) {
    Val<Real> ch = vreshape(vcols(color_grid, c, c + 1), {R, slots});
    chans.push_back(vreshape(vsum(ch * w, 1), {R, 1}));
  }
  out.color = vconcat(chans, 1);
  out.depth = vsum(w * vconst(graph, std::move(depth_grid)), 1);
  return out;
}

// plan + evaluate in one call
template <class Real>
RenderBatch<Real> render_rays(Staging<Real>& st, FactoredScene<Real>& scene,
                              const std::vector<RayRequest>& rays, const SamplingConfig& cfg) {
  const SamplePlan plan = plan_rays(scene, rays, cfg);
  return render_planned(st, scene, rays, plan);
}

// single-ray wrapper
template <class Real>
RayResult render_ray(FactoredScene<Real>& scene, int frame, const Ray& ray,
                     const SamplingConfig& cfg) {
  if (frame < 0 || frame >= scene.num_frames) fail("render_ray: frame out of range");
  Graph<Real> g;
  g.grad_enabled = false;
  Staging<Real> st(g, false);
  RayRequest rq{ray, frame};
  auto batch = render_rays(st, scene, {rq}, cfg);
  RayResult out;
  const auto& ct = batch.color.t();
  out.color = {static_cast<double>(ct.at(0, 0)), static_cast<double>(ct.at(0, 1)),
               static_cast<double>(ct.at(0, 2))};
  out.depth = static_cast<double>(batch.depth.t().v[0]);
  out.acc = static_cast<double>(batch.acc.t().v[0]);
  std::map<int, double> per_object;
  const auto& wt = batch.weights.t();
  for (int k = 0; k < batch.slots; ++k) {
    const int obj = batch.slot_object[static_cast<size_t>(k)];
    if (obj < 0) continue;
    out.sample_weights.push_back(static_cast<double>(wt.v[static_cast<size_t>(k)]));
    per_object[obj] += static_cast<double>(wt.v[static_cast<size_t>(k)]);
  }
  out.object_weights.assign(per_object.begin(), per_object.end());
  return out;
}

struct RenderedImages {
  Image<float> color;  // 3 channels
  Image<float> depth;  // 1 channel
  Image<float> acc;    // 1 channel
  std::vector<std::pair<int, Image<float>>> object_weight;  // per object id
};

// per-pixel render_ray over the full image; parallel over row blocks with
// per-pixel RNG streams, so output is independent of the thread layout
template <class Real>
RenderedImages render_image(FactoredScene<Real>& scene, int frame, const Pose* camera_override,
                            const SamplingConfig& cfg) {
  if (frame < 0 || frame >= scene.num_frames) fail("render_image: frame out of range");
  const CameraIntrinsics& intr = scene.intrinsics;
  intr.validate();
  const Pose cam = camera_override ? *camera_override : scene.camera[static_cast<size_t>(frame)];
  RenderedImages out;
  out.color = Image<float>(intr.width, intr.height, 3);
  out.depth = Image<float>(intr.width, intr.height, 1);
  out.acc = Image<float>(intr.width, intr.height, 1);
  for (auto& obj : scene.objects)
    out.object_weight.emplace_back(obj.id, Image<float>(intr.width, intr.height, 1));

  parallel_for(
      intr.height,
      [&](int64_t y0, int64_t y1) {
        for (int64_t y = y0; y < y1; ++y) {
          for (int x0 = 0; x0 < intr.width; x0 += 64) {
            const int x1 = std::min(intr.width, x0 + 64);
            Graph<Real> g;
            g.grad_enabled = false;
            Staging<Real> st(g, false);
            std::vector<RayRequest> rays;
            for (int x = x0; x < x1; ++x)
              rays.push_back({pixel_to_ray(intr, cam, x + 0.5, static_cast<double>(y) + 0.5, frame), frame});
            auto batch = render_rays(st, scene, rays, cfg);
            const auto& ct = batch.color.t();
            const auto& dt = batch.depth.t();
            const auto& at = batch.acc.t();
            const auto& wt = batch.weights.t();
            for (int x = x0; x < x1; ++x) {
              const int r = x - x0;
              for (int c = 0; c < 3; ++c)
                out.color.at(x, static_cast<int>(y), c) = static_cast<float>(ct.at(r, c));
              out.depth.at(x, static_cast<int>(y), 0) = static_cast<float>(dt.v[static_cast<size_t>(r)]);
              out.acc.at(x, static_cast<int>(y), 0) = static_cast<float>(at.v[static_cast<size_t>(r)]);
              for (int k = 0; k < batch.slots; ++k) {
                const size_t slot = static_cast<size_t>(r) * batch.slots + k;
                const int obj = batch.slot_object[slot];
                if (obj < 0) continue;
                for (auto& [oid, img] : out.object_weight)
                  if (oid == obj)
                    img.at(x, static_cast<int>(y), 0) += static_cast<float>(wt.v[slot]);
              }
            }
          }
        }
      },
      1);
  return out;
}

}  // namespace fnvr
