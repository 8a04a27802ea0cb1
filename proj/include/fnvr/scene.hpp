#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fnvr/analytic_sdf.hpp"
#include "fnvr/deformation.hpp"
#include "fnvr/fields.hpp"
#include "fnvr/geometry.hpp"

namespace fnvr {

enum class MotionFlag : uint8_t { Static = 0, Rigid = 1, Nonrigid = 2 };

inline const char* motion_name(MotionFlag m) {
  switch (m) {
    case MotionFlag::Static: return "static";
    case MotionFlag::Rigid: return "rigid";
    case MotionFlag::Nonrigid: return "nonrigid";
  }
  return "?";
}
inline MotionFlag motion_from_name(const std::string& s) {
  if (s == "static") return MotionFlag::Static;
  if (s == "rigid") return MotionFlag::Rigid;
  if (s == "nonrigid") return MotionFlag::Nonrigid;
  fail("unknown motion flag '" + s + "'");
}

// Per-frame SE(3) poses stored as learnable parameter tensors
// (unit quaternion [T,4] + translation [T,3]).
template <class Real>
struct Trajectory {
  Param<Real> quat;
  Param<Real> trans;
  bool learnable = true;

  static Trajectory identity(const std::string& name, int frames, bool learnable) {
    Trajectory t;
    t.learnable = learnable;
    t.quat.name = name + "/quat";
    t.quat.value = Tensor<Real>::zeros({frames, 4});
    for (int f = 0; f < frames; ++f) t.quat.value.at(f, 0) = Real(1);
    t.quat.group = kGroupTrajectories;
    t.quat.frozen = !learnable;
    t.trans.name = name + "/trans";
    t.trans.value = Tensor<Real>::zeros({frames, 3});
    t.trans.group = kGroupTrajectories;
    t.trans.frozen = !learnable;
    return t;
  }

  int frames() const { return quat.value.dim(0); }

  Pose pose(int t) const {
    Pose p;
    p.q = Quat{static_cast<double>(quat.value.at(t, 0)), static_cast<double>(quat.value.at(t, 1)),
               static_cast<double>(quat.value.at(t, 2)), static_cast<double>(quat.value.at(t, 3))};
    p.t = Vec3{static_cast<double>(trans.value.at(t, 0)), static_cast<double>(trans.value.at(t, 1)),
               static_cast<double>(trans.value.at(t, 2))};
    return p;
  }

  void set_pose(int t, const Pose& p) {
    quat.value.at(t, 0) = static_cast<Real>(p.q.w);
    quat.value.at(t, 1) = static_cast<Real>(p.q.x);
    quat.value.at(t, 2) = static_cast<Real>(p.q.y);
    quat.value.at(t, 3) = static_cast<Real>(p.q.z);
    trans.value.at(t, 0) = static_cast<Real>(p.t.x);
    trans.value.at(t, 1) = static_cast<Real>(p.t.y);
    trans.value.at(t, 2) = static_cast<Real>(p.t.z);
  }

  // unit norm + canonical sign, applied after every optimizer step
  void renormalize() {
    for (int t = 0; t < frames(); ++t) {
      Pose p = pose(t);
      p.q = p.q.normalized_canonical();
      set_pose(t, p);
    }
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    fn(quat);
    fn(trans);
  }
};

enum class FieldBackend : uint8_t { Neural = 0, Analytic = 1 };

// One entry of the factored representation: SDF + color fields in a local
// AABB, plus an optional deformation block for nonrigid objects. The analytic
// backend serves as oracle in tests and generators; trained scenes are neural.
template <class Real>
struct ObjectModel {
  int id = 0;
  MotionFlag motion = MotionFlag::Static;
  AABB aabb{{-1, -1, -1}, {1, 1, 1}};
  FieldBackend backend = FieldBackend::Neural;

  SdfNet<Real> sdf;
  ColorNet<Real> color;
  std::optional<DeformationBlock<Real>> deform;

  AnalyticSdf analytic;
  Vec3 albedo{0.5, 0.5, 0.5};
  std::vector<Vec3> albedo_parts;  // per union part; overrides albedo when set

  bool nonrigid() const { return motion == MotionFlag::Nonrigid; }

  Vec3 albedo_at(Vec3 local) const {
    if (albedo_parts.empty()) return albedo;
    return albedo_parts[static_cast<size_t>(analytic.argmin_part(local)) % albedo_parts.size()];
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    if (backend != FieldBackend::Neural) return;
    sdf.for_each_param(fn);
    color.for_each_param(fn);
    if (deform) deform->for_each_param(fn);
  }
};

struct ObjectConfig {
  SdfConfig sdf;
  ColorConfig color;
  DeformConfig deform;
  double init_radius = 0.5;
};

template <class Real>
ObjectModel<Real> make_neural_object(int id, MotionFlag motion, const AABB& aabb,
                                     const ObjectConfig& cfg, int num_frames, Rng& rng) {
  ObjectModel<Real> obj;
  obj.id = id;
  obj.motion = motion;
  obj.aabb = aabb;
  obj.backend = FieldBackend::Neural;
  const std::string prefix = "obj" + std::to_string(id);
  obj.sdf = SdfNet<Real>::make(prefix + "/sdf", cfg.sdf);
  obj.sdf.geometric_init(cfg.init_radius, rng);
  obj.color = ColorNet<Real>::make(prefix + "/color", cfg.color, cfg.sdf.posenc.output_dim(3),
                                   cfg.sdf.feature_dim, rng);
  if (motion == MotionFlag::Nonrigid)
    obj.deform = DeformationBlock<Real>::make(prefix + "/deform", cfg.deform, num_frames, rng);
  return obj;
}

template <class Real>
ObjectModel<Real> make_analytic_object(int id, MotionFlag motion, const AABB& aabb,
                                       AnalyticSdf shape, Vec3 albedo) {
  ObjectModel<Real> obj;
  obj.id = id;
  obj.motion = motion;
  obj.aabb = aabb;
  obj.backend = FieldBackend::Analytic;
  obj.analytic = std::move(shape);
  obj.albedo = albedo;
  return obj;
}

// Edits keep every field parameter fixed; only object lists and trajectories
// change.
struct Edit {
  enum class Kind { ReplaceCameraTrajectory, ReplaceObjectTrajectory, DeleteObject, CloneObject };
  Kind kind;
  int id = -1;
  std::vector<Pose> poses;
};
using EditScript = std::vector<Edit>;

// The factored representation: background model (object 0) + k foreground
// objects, per-object trajectories, the fixed camera path, and the global
// opacity sharpness (stored as log s so s stays positive under optimization).
template <class Real>
struct FactoredScene {
  CameraIntrinsics intrinsics;
  int num_frames = 0;
  std::vector<ObjectModel<Real>> objects;
  std::vector<Trajectory<Real>> trajectories;
  std::vector<Pose> camera;
  Param<Real> log_sharpness;

  static FactoredScene create(const CameraIntrinsics& intr, int frames, double sharpness_init = 10.0) {
    FactoredScene s;
    s.intrinsics = intr;
    s.num_frames = frames;
    s.camera.assign(static_cast<size_t>(frames), Pose::identity());
    s.log_sharpness.name = "sharpness/log_s";
    s.log_sharpness.value = Tensor<Real>::scalar(static_cast<Real>(std::log(sharpness_init)));
    s.log_sharpness.group = kGroupSharpness;
    return s;
  }

  void add_object(ObjectModel<Real> obj, Trajectory<Real> traj) {
    if (traj.frames() != num_frames) fail("add_object: trajectory frame count mismatch");
    objects.push_back(std::move(obj));
    trajectories.push_back(std::move(traj));
  }

  double sharpness() const { return std::exp(static_cast<double>(log_sharpness.value.v[0])); }

  int index_of(int object_id) const {
    for (size_t i = 0; i < objects.size(); ++i)
      if (objects[i].id == object_id) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (objects.empty()) fail("scene: no objects");
    if (objects[0].id != 0 || objects[0].motion != MotionFlag::Static)
      fail("scene: background must be object 0 with static motion flag");
    if (objects.size() != trajectories.size()) fail("scene: objects/trajectories length mismatch");
    if (static_cast<int>(camera.size()) != num_frames) fail("scene: camera trajectory length mismatch");
    for (size_t i = 0; i < objects.size(); ++i) {
      if (trajectories[i].frames() != num_frames) fail("scene: trajectory frame count mismatch");
      if (objects[i].nonrigid() && objects[i].backend == FieldBackend::Neural &&
          !objects[i].deform)
        fail("scene: nonrigid object without deformation block");
    }
    if (!(sharpness() > 0)) fail("scene: sharpness must be positive");
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    for (auto& o : objects) o.for_each_param(fn);
    for (auto& t : trajectories) t.for_each_param(fn);
    fn(log_sharpness);
  }

  // FNV-1a digest over one object's field parameter bytes
  static uint64_t object_param_digest(ObjectModel<Real>& obj) {
    uint64_t h = 1469598103934665603ull;
    obj.for_each_param([&](Param<Real>& p) {
      const auto* bytes = reinterpret_cast<const uint8_t*>(p.value.v.data());
      for (size_t i = 0; i < p.value.v.size() * sizeof(Real); ++i)
        h = (h ^ bytes[i]) * 1099511628211ull;
    });
    return h;
  }

  // per-object field parameter digests (edit-invariance checks)
  std::map<int, uint64_t> field_param_digests() {
    std::map<int, uint64_t> out;
    for (auto& o : objects) out[o.id] = object_param_digest(o);
    return out;
  }

  // digest over all objects combined
  uint64_t field_param_digest() {
    uint64_t h = 1469598103934665603ull;
    for (auto& o : objects) h = mix_seed(h, object_param_digest(o));
    return h;
  }

  // object local coordinates for a world point: inverse rigid transform, then
  // deformation to canonical for nonrigid objects, then AABB normalization to
  // [-1,1]. Background lookups live in the world frame.
  Vec3 world_to_local(int object_index, int frame, Vec3 world) const {
    if (object_index < 0 || object_index >= static_cast<int>(objects.size()))
      throw std::invalid_argument("world_to_local: bad object index");
    if (frame < 0 || frame >= num_frames)
      throw std::invalid_argument("world_to_local: bad frame");
    const ObjectModel<Real>& obj = objects[static_cast<size_t>(object_index)];
    Vec3 local = world;
    if (obj.motion != MotionFlag::Static)
      local = pose_apply(pose_inverse(trajectories[static_cast<size_t>(object_index)].pose(frame)),
                         world);
    if (obj.nonrigid() && obj.deform) {
      auto& deform = const_cast<DeformationBlock<Real>&>(*obj.deform);
      Tensor<Real> pts = Tensor<Real>::from({1, 3}, {static_cast<Real>(local.x),
                                                     static_cast<Real>(local.y),
                                                     static_cast<Real>(local.z)});
      const Tensor<Real> out = deform.forward_plain(pts, deform.codes_for({frame}));
      local = {static_cast<double>(out.v[0]), static_cast<double>(out.v[1]),
               static_cast<double>(out.v[2])};
    }
    const Vec3 c = obj.aabb.center(), h = obj.aabb.half_extent();
    return {(local.x - c.x) / h.x, (local.y - c.y) / h.y, (local.z - c.z) / h.z};
  }
};

// Applies an edit script to a copy; field parameters are untouched and the
// background is never deletable.
template <class Real>
FactoredScene<Real> apply_edit(const FactoredScene<Real>& scene, const EditScript& script) {
  FactoredScene<Real> out = scene;
  for (const Edit& e : script) {
    switch (e.kind) {
      case Edit::Kind::ReplaceCameraTrajectory: {
        if (static_cast<int>(e.poses.size()) != out.num_frames)
          throw std::invalid_argument("edit: camera pose count mismatch");
        out.camera = e.poses;
        break;
      }
      case Edit::Kind::ReplaceObjectTrajectory: {
        const int idx = out.index_of(e.id);
        if (idx < 0) throw std::invalid_argument("edit: unknown object id " + std::to_string(e.id));
        if (static_cast<int>(e.poses.size()) != out.num_frames)
          throw std::invalid_argument("edit: pose count mismatch for object " + std::to_string(e.id));
        for (int t = 0; t < out.num_frames; ++t)
          out.trajectories[static_cast<size_t>(idx)].set_pose(t, e.poses[static_cast<size_t>(t)]);
        break;
      }
      case Edit::Kind::DeleteObject: {
        if (e.id == 0) throw std::invalid_argument("edit: background is not deletable");
        const int idx = out.index_of(e.id);
        if (idx < 0) throw std::invalid_argument("edit: unknown object id " + std::to_string(e.id));
        out.objects.erase(out.objects.begin() + idx);
        out.trajectories.erase(out.trajectories.begin() + idx);
        break;
      }
      case Edit::Kind::CloneObject: {
        const int idx = out.index_of(e.id);
        if (idx < 0) throw std::invalid_argument("edit: unknown object id " + std::to_string(e.id));
        if (static_cast<int>(e.poses.size()) != out.num_frames)
          throw std::invalid_argument("edit: pose count mismatch for clone of " + std::to_string(e.id));
        ObjectModel<Real> copy = out.objects[static_cast<size_t>(idx)];
        int max_id = 0;
        for (const auto& o : out.objects) max_id = std::max(max_id, o.id);
        const std::string old_prefix = "obj" + std::to_string(copy.id) + "/";
        copy.id = max_id + 1;
        const std::string new_prefix = "obj" + std::to_string(copy.id) + "/";
        copy.for_each_param([&](Param<Real>& p) {
          if (p.name.rfind(old_prefix, 0) == 0)
            p.name = new_prefix + p.name.substr(old_prefix.size());
        });
        Trajectory<Real> traj = Trajectory<Real>::identity(
            "traj" + std::to_string(copy.id), out.num_frames,
            out.trajectories[static_cast<size_t>(idx)].learnable);
        for (int t = 0; t < out.num_frames; ++t) traj.set_pose(t, e.poses[static_cast<size_t>(t)]);
        out.objects.push_back(std::move(copy));
        out.trajectories.push_back(std::move(traj));
        break;
      }
    }
  }
  out.validate();
  return out;
}

}  // namespace fnvr
