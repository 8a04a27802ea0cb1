#pragma once

#include "fnvr/dataset.hpp"
#include "fnvr/losses.hpp"
#include "fnvr/tracking.hpp"

namespace fnvr {

// Per-iteration regularizer samples: surface points unprojected from valid
// masked depth pixels at random frames (mapped to object canonical
// coordinates through the current trajectory and deformation estimates, with
// the input-depth normals as targets) plus uniform volume points in each
// object's AABB.
template <class Real>
SurfaceSampleSet<Real> build_surface_samples(FactoredScene<Real>& scene, const RGBDSequence& seq,
                                             const std::vector<Image<float>>& normal_maps,
                                             const std::vector<Image<uint8_t>>& normal_valid,
                                             int count, double band_eps, Rng& rng) {
  SurfaceSampleSet<Real> set;
  set.band_epsilon = band_eps;
  const auto& intr = seq.manifest.intrinsics;

  for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
    ObjectModel<Real>& obj = scene.objects[oi];
    SurfaceSamples<Real> s;
    s.obj_index = static_cast<int>(oi);

    std::vector<Vec3> pts, nrm;
    std::vector<int> frames;
    const int attempts = count * 8;
    for (int a = 0; a < attempts && static_cast<int>(pts.size()) < count; ++a) {
      const int t = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(seq.manifest.frames)));
      const int x = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(intr.width)));
      const int y = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(intr.height)));
      if (seq.mask[static_cast<size_t>(t)].at(x, y, 0) != obj.id + 1) continue;
      const float z = seq.depth[static_cast<size_t>(t)].at(x, y, 0);
      if (z <= 0 || !normal_valid[static_cast<size_t>(t)].at(x, y, 0)) continue;
      const Vec3 pc{(x + 0.5 - intr.cx) / intr.fx * z, (y + 0.5 - intr.cy) / intr.fy * z,
                    static_cast<double>(z)};
      const Pose cam = scene.camera[static_cast<size_t>(t)];
      Vec3 pw = pose_apply(cam, pc);
      Vec3 nw = cam.q.rotate({normal_maps[static_cast<size_t>(t)].at(x, y, 0),
                              normal_maps[static_cast<size_t>(t)].at(x, y, 1),
                              normal_maps[static_cast<size_t>(t)].at(x, y, 2)});
      if (obj.motion != MotionFlag::Static) {
        const Pose inv = pose_inverse(scene.trajectories[oi].pose(t));
        pw = pose_apply(inv, pw);
        nw = inv.q.rotate(nw);
      }
      pts.push_back(pw);
      nrm.push_back(nw);
      frames.push_back(t);
    }
    const int m = static_cast<int>(pts.size());
    s.surface_pts = Tensor<Real>::zeros({m, 3});
    s.normals = Tensor<Real>::zeros({m, 3});
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < 3; ++c) {
        s.surface_pts.at(i, c) = static_cast<Real>(pts[static_cast<size_t>(i)][c]);
        s.normals.at(i, c) = static_cast<Real>(nrm[static_cast<size_t>(i)][c]);
      }
    // nonrigid objects store fields in the canonical frame; normals keep the
    // rigid-rotated estimate (the warp is treated as near-isometric here)
    if (obj.nonrigid() && obj.deform && m > 0)
      s.surface_pts = obj.deform->forward_plain(s.surface_pts, obj.deform->codes_for(frames));

    s.volume_pts = Tensor<Real>::zeros({count, 3});
    for (int i = 0; i < count; ++i)
      for (int c = 0; c < 3; ++c)
        s.volume_pts.at(i, c) =
            static_cast<Real>(rng.uniform(obj.aabb.lo[c], obj.aabb.hi[c]));
    set.per_object.push_back(std::move(s));
  }
  return set;
}

// Builds the initial factored scene for one sequence: object models per
// manifest record (background static, foregrounds rigid or nonrigid) and
// trajectories/camera from the provided initialization. The camera is fixed
// after this point.
template <class Real>
FactoredScene<Real> build_scene_from_sequence(const RGBDSequence& seq, const ObjectConfig& cfg,
                                              const TrackingResult* tracks, uint64_t seed,
                                              double sharpness_init = 10.0) {
  Rng rng(mix_seed(seed, 0x7363656eull));
  auto scene = FactoredScene<Real>::create(seq.manifest.intrinsics, seq.manifest.frames,
                                           sharpness_init);
  std::vector<ManifestObject> objs = seq.manifest.objects;
  std::sort(objs.begin(), objs.end(),
            [](const ManifestObject& a, const ManifestObject& b) { return a.id < b.id; });
  for (const ManifestObject& mo : objs) {
    auto obj = make_neural_object<Real>(mo.id, mo.motion, mo.aabb, cfg, seq.manifest.frames, rng);
    auto traj = Trajectory<Real>::identity("traj" + std::to_string(mo.id), seq.manifest.frames,
                                           mo.motion != MotionFlag::Static);
    if (mo.motion != MotionFlag::Static) {
      const std::vector<Pose>* init = nullptr;
      if (tracks) {
        auto it = tracks->objects.find(mo.id);
        if (it != tracks->objects.end()) init = &it->second;
      } else if (auto it = seq.gt_objects.find(mo.id); it != seq.gt_objects.end()) {
        init = &it->second;
      }
      if (init)
        for (int t = 0; t < seq.manifest.frames; ++t)
          traj.set_pose(t, (*init)[static_cast<size_t>(t)]);
    }
    scene.add_object(std::move(obj), std::move(traj));
  }
  if (tracks) {
    scene.camera = tracks->camera;
  } else if (!seq.gt_camera.empty()) {
    scene.camera = seq.gt_camera;
  }
  scene.validate();
  return scene;
}

}  // namespace fnvr
