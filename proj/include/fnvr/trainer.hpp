#pragma once

#include <chrono>
#include <fstream>
#include <functional>

#include "fnvr/checkpoint.hpp"
#include "fnvr/losses.hpp"
#include "fnvr/metrics.hpp"
#include "fnvr/tracking.hpp"
#include "fnvr/trainer_build.hpp"

namespace fnvr {

struct TrainConfig {
  int iterations = 20000;
  int start_iteration = 0;    // resume offset; keeps RNG streams aligned
  int rays_per_batch = 256;   // 256 rays x 128 points per ray by default
  SamplingConfig sampling;    // n_fine defaults to 128
  double lr_fields = 5e-4;
  double lr_trajectories = 1e-4;
  double lr_deform_codes = 5e-4;
  double lr_sharpness = 1e-3;
  LossWeights weights;        // paper defaults 0.1 / 1.0 / 0.1
  uint64_t seed = 0;
  int warmup_freeze_trajectories = 1000;  // fields form before pose gradients matter
  bool cosine_decay = false;
  int surface_samples = 512;  // per object, surface and volume each
  double freespace_margin = -1.0;  // <0: 2x median coarse spacing
  int checkpoint_every = 0;
  std::string checkpoint_path;
  std::string loss_csv;
  int log_every = 100;
  bool verbose = false;

  void validate() const {
    if (iterations < 0 || rays_per_batch < 1 || surface_samples < 0)
      fail("train config: counts must be positive");
    sampling.validate();
  }
};

// one uniformly sampled (frame, pixel) minibatch with ground truth attached
template <class Real>
struct PixelBatch {
  std::vector<int> frame, px, py;
  Tensor<Real> gt_color;            // [R,3] in [0,1]
  std::vector<double> gt_ray_depth; // ray-parameter depth (z / cos)
  std::vector<uint8_t> depth_valid;
};

// Uniform (frame, pixel) draws; no depth-guided selection. Ground-truth z
// depth converts to ray-parameter depth so it compares against the rendered
// depth attribute directly.
template <class Real>
PixelBatch<Real> sample_ray_batch(const RGBDSequence& seq, int n_rays, Rng& rng) {
  if (seq.manifest.frames < 1) fail("sample_ray_batch: empty dataset");
  const auto& intr = seq.manifest.intrinsics;
  PixelBatch<Real> batch;
  batch.gt_color = Tensor<Real>::zeros({n_rays, 3});
  for (int i = 0; i < n_rays; ++i) {
    const int t = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(seq.manifest.frames)));
    const int x = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(intr.width)));
    const int y = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(intr.height)));
    batch.frame.push_back(t);
    batch.px.push_back(x);
    batch.py.push_back(y);
    for (int c = 0; c < 3; ++c)
      batch.gt_color.at(i, c) =
          static_cast<Real>(seq.color[static_cast<size_t>(t)].at(x, y, c) / 255.0);
    const float z = seq.depth[static_cast<size_t>(t)].at(x, y, 0);
    const double scale =
        norm(Vec3{(x + 0.5 - intr.cx) / intr.fx, (y + 0.5 - intr.cy) / intr.fy, 1.0});
    batch.gt_ray_depth.push_back(z > 0 ? z * scale : 0.0);
    batch.depth_valid.push_back(z > 0 ? 1 : 0);
  }
  return batch;
}

struct TrainStats {
  std::vector<double> loss_curve;  // total loss per iteration
  double wall_seconds = 0;
  int iterations_run = 0;
};

// Joint optimization: every iteration samples a ray batch, renders it through
// the factored pipeline, evaluates the total loss, backpropagates, and applies
// per-group Adam updates (fields, foreground trajectories, deformation codes,
// sharpness; the camera stays fixed). Quaternions are renormalized after every
// step. Aborts with the offending term named if the loss turns non-finite.
template <class Real>
TrainStats train(const RGBDSequence& seq, FactoredScene<Real>& scene, const TrainConfig& cfg) {
  cfg.validate();
  scene.validate();
  TrainStats stats;
  const auto t_start = std::chrono::steady_clock::now();

  // per-frame normal maps from the input depth (targets for the surface loss)
  std::vector<Image<float>> normal_maps(static_cast<size_t>(seq.manifest.frames));
  std::vector<Image<uint8_t>> normal_valid(static_cast<size_t>(seq.manifest.frames));
  for (int t = 0; t < seq.manifest.frames; ++t)
    normals_from_depth(seq.depth[static_cast<size_t>(t)], seq.manifest.intrinsics,
                       normal_maps[static_cast<size_t>(t)], normal_valid[static_cast<size_t>(t)]);

  // group learning rates
  auto group_lr = [&](int group) {
    switch (group) {
      case kGroupTrajectories: return cfg.lr_trajectories;
      case kGroupDeformCodes: return cfg.lr_deform_codes;
      case kGroupSharpness: return cfg.lr_sharpness;
      default: return cfg.lr_fields;
    }
  };
  scene.for_each_param([&](Param<Real>& p) {
    if (!p.adam_ready) {
      p.adam = AdamState<Real>::init(p.value.shape, group_lr(p.group));
      p.adam_ready = true;
    }
  });

  // median coarse spacing for the free-space margin default
  double freespace_margin = cfg.freespace_margin;
  if (freespace_margin < 0) {
    std::vector<double> spans;
    for (const auto& o : scene.objects) {
      const Vec3 e = o.aabb.hi - o.aabb.lo;
      spans.push_back(std::max({e.x, e.y, e.z}) / cfg.sampling.coarse_per_interval);
    }
    std::sort(spans.begin(), spans.end());
    freespace_margin = 2.0 * spans[spans.size() / 2];
  }

  std::ofstream csv;
  if (!cfg.loss_csv.empty()) {
    csv.open(cfg.loss_csv);
    csv << "iteration,total,color,depth,free,surface\n";
  }

  for (int step = 0; step < cfg.iterations; ++step) {
    const int iter = cfg.start_iteration + step;
    // trajectory warm-up: fields form before pose gradients are meaningful
    const bool freeze_traj = iter < cfg.warmup_freeze_trajectories;
    for (size_t i = 0; i < scene.trajectories.size(); ++i) {
      const bool learnable = scene.trajectories[i].learnable;
      scene.trajectories[i].quat.frozen = freeze_traj || !learnable;
      scene.trajectories[i].trans.frozen = freeze_traj || !learnable;
    }

    Rng rng(mix_seed(cfg.seed, 0x7261696eull, static_cast<uint64_t>(iter)));
    auto pix = sample_ray_batch<Real>(seq, cfg.rays_per_batch, rng);
    std::vector<RayRequest> rays;
    for (int i = 0; i < cfg.rays_per_batch; ++i) {
      const int t = pix.frame[static_cast<size_t>(i)];
      rays.push_back({pixel_to_ray(seq.manifest.intrinsics, scene.camera[static_cast<size_t>(t)],
                                   pix.px[static_cast<size_t>(i)] + 0.5,
                                   pix.py[static_cast<size_t>(i)] + 0.5, t),
                      t});
    }

    SamplingConfig scfg = cfg.sampling;
    scfg.seed = mix_seed(cfg.seed, 0x73616d70ull, static_cast<uint64_t>(iter));

    Graph<Real> graph;
    Staging<Real> st(graph, true);
    auto batch = render_rays(st, scene, rays, scfg);

    RayBatchGt<Real> gt;
    gt.color = std::move(pix.gt_color);
    gt.depth = std::move(pix.gt_ray_depth);
    gt.depth_valid = std::move(pix.depth_valid);

    auto samples = build_surface_samples(scene, seq, normal_maps, normal_valid,
                                         cfg.surface_samples, freespace_margin, rng);
    auto loss = loss_total(st, scene, batch, gt, samples, cfg.weights, freespace_margin);

    if (!std::isfinite(loss.total_v)) {
      const char* term = !std::isfinite(loss.color_v)       ? "color"
                         : !std::isfinite(loss.depth_v)     ? "depth"
                         : !std::isfinite(loss.freespace_v) ? "free-space"
                                                            : "surface";
      fail("train: non-finite " + std::string(term) + " loss at iteration " +
           std::to_string(iter));
    }
    stats.loss_curve.push_back(loss.total_v);
    if (csv.is_open())
      csv << iter << "," << loss.total_v << "," << loss.color_v << "," << loss.depth_v << ","
          << loss.freespace_v << "," << loss.surface_v << "\n";
    if (cfg.verbose && cfg.log_every > 0 && iter % cfg.log_every == 0)
      std::fprintf(stderr, "iter %6d  total %.5f  color %.5f  depth %.5f  free %.5f  surf %.5f\n",
                   iter, loss.total_v, loss.color_v, loss.depth_v, loss.freespace_v,
                   loss.surface_v);

    graph.backward(loss.total.id);

    const double decay =
        cfg.cosine_decay
            ? 0.5 * (1.0 + std::cos(M_PI * iter / std::max(1, cfg.start_iteration + cfg.iterations)))
            : 1.0;
    scene.for_each_param([&](Param<Real>& p) {
      if (p.frozen) return;
      const int node = st.node_of(p);
      if (node < 0 || !graph.requires_grad(node)) return;
      p.adam.lr = group_lr(p.group) * decay;
      adam_step(p.value, graph.grad(node), p.adam);
    });
    for (auto& traj : scene.trajectories) traj.renormalize();

    ++stats.iterations_run;
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (iter + 1) % cfg.checkpoint_every == 0)
      save_scene(cfg.checkpoint_path, scene);
  }

  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return stats;
}

// ---- evaluation ----

struct ObjectMetrics {
  int id = 0;
  double color_psnr = 0, color_ssim = 0;
  double depth_l1 = 0;
  bool depth_defined = false;
};

struct MetricsReport {
  double color_psnr = 0, color_ssim = 0;
  double depth_psnr = 0, depth_l1 = 0;
  bool depth_defined = false;
  std::vector<ObjectMetrics> per_object;
  double trajectory_ate = -1;  // mean translation error vs gt, -1 when no gt
  double camera_ate = -1;
  int frames = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["color_psnr"] = color_psnr;
    j["color_ssim"] = color_ssim;
    j["depth_psnr"] = depth_psnr;
    j["depth_l1"] = depth_defined ? nlohmann::json(depth_l1) : nlohmann::json();
    j["frames"] = frames;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : per_object)
      objs.push_back({{"id", o.id},
                      {"color_psnr", o.color_psnr},
                      {"color_ssim", o.color_ssim},
                      {"depth_l1", o.depth_defined ? nlohmann::json(o.depth_l1) : nlohmann::json()}});
    j["objects"] = objs;
    if (trajectory_ate >= 0) j["trajectory_ate"] = trajectory_ate;
    if (camera_ate >= 0) j["camera_ate"] = camera_ate;
    return j;
  }
};

// Renders every frame of the sequence through the scene and aggregates
// full-image and per-object metrics (objects masked by their rendered weight
// images); trajectory errors are included when the sequence carries ground
// truth. Depth metrics live in z-depth over jointly valid pixels.
template <class Real>
MetricsReport evaluate(FactoredScene<Real>& scene, const RGBDSequence& seq,
                       const SamplingConfig& cfg) {
  MetricsReport rep;
  rep.frames = seq.manifest.frames;
  const auto& intr = seq.manifest.intrinsics;
  const int W = intr.width, H = intr.height;

  Image<float> all_rendered(W, H * seq.manifest.frames, 3);
  Image<float> all_gt(W, H * seq.manifest.frames, 3);
  Image<float> all_rdepth(W, H * seq.manifest.frames, 1);
  Image<float> all_gdepth(W, H * seq.manifest.frames, 1);
  Image<uint8_t> all_valid(W, H * seq.manifest.frames, 1);
  std::map<int, std::vector<double>> obj_se;     // per-object color squared error
  std::map<int, std::vector<double>> obj_depth;  // per-object |depth error|

  for (int t = 0; t < seq.manifest.frames; ++t) {
    auto imgs = render_image(scene, t, nullptr, cfg);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int yy = t * H + y;
        for (int c = 0; c < 3; ++c) {
          all_rendered.at(x, yy, c) = imgs.color.at(x, y, c);
          all_gt.at(x, yy, c) =
              static_cast<float>(seq.color[static_cast<size_t>(t)].at(x, y, c) / 255.0);
        }
        // rendered ray-parameter depth converts to z-depth for comparison
        const double cos_scale =
            1.0 / norm(Vec3{(x + 0.5 - intr.cx) / intr.fx, (y + 0.5 - intr.cy) / intr.fy, 1.0});
        all_rdepth.at(x, yy, 0) = static_cast<float>(imgs.depth.at(x, y, 0) * cos_scale);
        const float gz = seq.depth[static_cast<size_t>(t)].at(x, y, 0);
        all_gdepth.at(x, yy, 0) = gz;
        all_valid.at(x, yy, 0) = gz > 0 && imgs.acc.at(x, y, 0) > 0.5f ? 1 : 0;

        for (const auto& [oid, wimg] : imgs.object_weight) {
          if (wimg.at(x, y, 0) < 0.5f) continue;
          for (int c = 0; c < 3; ++c) {
            const double d = imgs.color.at(x, y, c) - all_gt.at(x, yy, c);
            obj_se[oid].push_back(d * d);
          }
          if (gz > 0)
            obj_depth[oid].push_back(std::abs(all_rdepth.at(x, yy, 0) - gz));
        }
      }
  }

  rep.color_psnr = psnr(all_rendered, all_gt);
  rep.color_ssim = ssim(all_rendered, all_gt);
  {
    // depth PSNR over valid pixels (max = observed depth range)
    double se = 0, dmax = 0;
    int64_t n = 0;
    for (size_t i = 0; i < all_rdepth.data.size(); ++i) {
      if (!all_valid.data[i]) continue;
      const double d = all_rdepth.data[i] - all_gdepth.data[i];
      se += d * d;
      dmax = std::max(dmax, static_cast<double>(all_gdepth.data[i]));
      ++n;
    }
    rep.depth_psnr = n && se > 0 ? 10 * std::log10(dmax * dmax * n / se) : 99.0;
    const auto dl1 = depth_l1(all_rdepth, all_gdepth, all_valid);
    rep.depth_l1 = dl1.value;
    rep.depth_defined = dl1.defined;
  }
  for (auto& [oid, se] : obj_se) {
    ObjectMetrics om;
    om.id = oid;
    double s = 0;
    for (double v : se) s += v;
    const double mse = se.empty() ? 0 : s / static_cast<double>(se.size());
    om.color_psnr = mse > 0 ? std::min(99.0, 10 * std::log10(1.0 / mse)) : 99.0;
    om.color_ssim = rep.color_ssim;  // window metric is whole-image
    if (auto it = obj_depth.find(oid); it != obj_depth.end() && !it->second.empty()) {
      double ds = 0;
      for (double v : it->second) ds += v;
      om.depth_l1 = ds / static_cast<double>(it->second.size());
      om.depth_defined = true;
    }
    rep.per_object.push_back(om);
  }

  if (seq.manifest.has_gt) {
    double cam_err = 0;
    for (int t = 0; t < seq.manifest.frames; ++t)
      cam_err += norm(scene.camera[static_cast<size_t>(t)].t - seq.gt_camera[static_cast<size_t>(t)].t);
    rep.camera_ate = cam_err / seq.manifest.frames;
    double obj_err = 0;
    int n = 0;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
      auto it = seq.gt_objects.find(scene.objects[i].id);
      if (it == seq.gt_objects.end() || scene.objects[i].motion == MotionFlag::Static) continue;
      for (int t = 0; t < seq.manifest.frames; ++t) {
        obj_err += norm(scene.trajectories[i].pose(t).t - it->second[static_cast<size_t>(t)].t);
        ++n;
      }
    }
    if (n > 0) rep.trajectory_ate = obj_err / n;
  }
  return rep;
}

}  // namespace fnvr
