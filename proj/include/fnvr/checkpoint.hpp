#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "fnvr/scene.hpp"

namespace fnvr {

// Checkpoint file: magic "FNVR", u32 format version, little-endian throughout;
// a manifest block (object count, flags, AABBs, configs, frame count, camera)
// followed by named parameter blocks (name, shape, raw 32-bit floats).

namespace detail_ckpt {

constexpr uint32_t kVersion = 1;

struct Writer {
  std::ofstream f;
  explicit Writer(const std::string& path) : f(path, std::ios::binary) {
    if (!f) fail("checkpoint: cannot open " + path + " for writing");
  }
  void bytes(const void* p, size_t n) { f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u16(uint16_t v) { bytes(&v, 2); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u16(static_cast<uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream f;
  std::string path;
  explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
    if (!f) fail("checkpoint: cannot open " + p);
  }
  void bytes(void* p, size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (f.gcount() != static_cast<std::streamsize>(n)) fail("checkpoint: truncated file " + path);
  }
  uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
  uint16_t u16() { uint16_t v; bytes(&v, 2); return v; }
  uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    const uint16_t n = u16();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

inline void write_pose(Writer& w, const Pose& p) {
  w.f64(p.q.w); w.f64(p.q.x); w.f64(p.q.y); w.f64(p.q.z);
  w.f64(p.t.x); w.f64(p.t.y); w.f64(p.t.z);
}
inline Pose read_pose(Reader& r) {
  Pose p;
  p.q.w = r.f64(); p.q.x = r.f64(); p.q.y = r.f64(); p.q.z = r.f64();
  p.t.x = r.f64(); p.t.y = r.f64(); p.t.z = r.f64();
  return p;
}

}  // namespace detail_ckpt

template <class Real>
void save_scene(const std::string& path, FactoredScene<Real>& scene) {
  using namespace detail_ckpt;
  for (const auto& o : scene.objects)
    if (o.backend != FieldBackend::Neural)
      fail("checkpoint: analytic-backend objects are not checkpointable");
  Writer w(path);
  w.bytes("FNVR", 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(scene.objects.size()));
  w.u32(static_cast<uint32_t>(scene.num_frames));
  w.f64(scene.intrinsics.fx); w.f64(scene.intrinsics.fy);
  w.f64(scene.intrinsics.cx); w.f64(scene.intrinsics.cy);
  w.u32(static_cast<uint32_t>(scene.intrinsics.width));
  w.u32(static_cast<uint32_t>(scene.intrinsics.height));
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    w.u32(static_cast<uint32_t>(o.id));
    w.u8(static_cast<uint8_t>(o.motion));
    for (int a = 0; a < 3; ++a) w.f64(o.aabb.lo[a]);
    for (int a = 0; a < 3; ++a) w.f64(o.aabb.hi[a]);
    const SdfConfig& sc = o.sdf.cfg;
    w.u32(static_cast<uint32_t>(sc.posenc.num_frequencies));
    w.u8(sc.posenc.include_input ? 1 : 0);
    w.u32(static_cast<uint32_t>(sc.hidden));
    w.u32(static_cast<uint32_t>(sc.hidden_layers));
    w.u32(static_cast<uint32_t>(sc.skip_layer));
    w.u32(static_cast<uint32_t>(sc.feature_dim));
    w.f64(sc.softplus_beta);
    w.u8(sc.weight_norm ? 1 : 0);
    const ColorConfig& cc = o.color.cfg;
    w.u32(static_cast<uint32_t>(cc.hidden));
    w.u32(static_cast<uint32_t>(cc.hidden_layers));
    w.u32(static_cast<uint32_t>(cc.view_posenc.num_frequencies));
    w.u8(cc.view_posenc.include_input ? 1 : 0);
    w.u8(o.deform ? 1 : 0);
    if (o.deform) {
      const DeformConfig& dc = o.deform->cfg;
      w.u32(static_cast<uint32_t>(dc.hidden));
      w.u32(static_cast<uint32_t>(dc.hidden_layers));
      w.u32(static_cast<uint32_t>(dc.latent_dim));
      w.f64(dc.softplus_beta);
    }
    w.u8(scene.trajectories[i].learnable ? 1 : 0);
  }
  for (const Pose& p : scene.camera) write_pose(w, p);

  uint32_t count = 0;
  scene.for_each_param([&](Param<Real>&) { ++count; });
  w.u32(count);
  scene.for_each_param([&](Param<Real>& p) {
    w.str(p.name);
    w.u8(static_cast<uint8_t>(p.value.rank()));
    for (int d : p.value.shape) w.u32(static_cast<uint32_t>(d));
    for (Real v : p.value.v) w.f32(static_cast<float>(v));
  });
  if (!w.f) fail("checkpoint: write failed for " + path);
}

template <class Real>
FactoredScene<Real> load_scene(const std::string& path) {
  using namespace detail_ckpt;
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "FNVR", 4) != 0) fail("checkpoint: bad magic in " + path);
  const uint32_t version = r.u32();
  if (version != kVersion)
    fail("checkpoint: unsupported format version " + std::to_string(version) + " in " + path);
  const uint32_t num_objects = r.u32();
  const int frames = static_cast<int>(r.u32());
  CameraIntrinsics intr;
  intr.fx = r.f64(); intr.fy = r.f64(); intr.cx = r.f64(); intr.cy = r.f64();
  intr.width = static_cast<int>(r.u32());
  intr.height = static_cast<int>(r.u32());

  FactoredScene<Real> scene = FactoredScene<Real>::create(intr, frames);
  Rng rng(0);  // structure only; parameters are overwritten below
  for (uint32_t i = 0; i < num_objects; ++i) {
    const int id = static_cast<int>(r.u32());
    const MotionFlag motion = static_cast<MotionFlag>(r.u8());
    AABB aabb;
    for (int a = 0; a < 3; ++a) aabb.lo[a] = r.f64();
    for (int a = 0; a < 3; ++a) aabb.hi[a] = r.f64();
    ObjectConfig cfg;
    cfg.sdf.posenc.num_frequencies = static_cast<int>(r.u32());
    cfg.sdf.posenc.include_input = r.u8() != 0;
    cfg.sdf.hidden = static_cast<int>(r.u32());
    cfg.sdf.hidden_layers = static_cast<int>(r.u32());
    cfg.sdf.skip_layer = static_cast<int>(r.u32());
    cfg.sdf.feature_dim = static_cast<int>(r.u32());
    cfg.sdf.softplus_beta = r.f64();
    cfg.sdf.weight_norm = r.u8() != 0;
    cfg.color.hidden = static_cast<int>(r.u32());
    cfg.color.hidden_layers = static_cast<int>(r.u32());
    cfg.color.view_posenc.num_frequencies = static_cast<int>(r.u32());
    cfg.color.view_posenc.include_input = r.u8() != 0;
    const bool has_deform = r.u8() != 0;
    if (has_deform) {
      cfg.deform.hidden = static_cast<int>(r.u32());
      cfg.deform.hidden_layers = static_cast<int>(r.u32());
      cfg.deform.latent_dim = static_cast<int>(r.u32());
      cfg.deform.softplus_beta = r.f64();
    }
    const bool learnable = r.u8() != 0;

    ObjectModel<Real> obj;
    obj.id = id;
    obj.motion = motion;
    obj.aabb = aabb;
    obj.backend = FieldBackend::Neural;
    const std::string prefix = "obj" + std::to_string(id);
    obj.sdf = SdfNet<Real>::make(prefix + "/sdf", cfg.sdf);
    obj.color = ColorNet<Real>::make(prefix + "/color", cfg.color, cfg.sdf.posenc.output_dim(3),
                                     cfg.sdf.feature_dim, rng);
    if (has_deform)
      obj.deform = DeformationBlock<Real>::make(prefix + "/deform", cfg.deform, frames, rng);
    scene.add_object(std::move(obj),
                     Trajectory<Real>::identity("traj" + std::to_string(id), frames, learnable));
  }
  for (int t = 0; t < frames; ++t) scene.camera[static_cast<size_t>(t)] = read_pose(r);

  std::map<std::string, Param<Real>*> by_name;
  scene.for_each_param([&](Param<Real>& p) { by_name[p.name] = &p; });
  const uint32_t count = r.u32();
  size_t filled = 0;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const int rank = r.u8();
    Shape shape(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) shape[static_cast<size_t>(d)] = static_cast<int>(r.u32());
    auto it = by_name.find(name);
    if (it == by_name.end()) fail("checkpoint: unknown parameter '" + name + "' in " + path);
    Param<Real>& p = *it->second;
    if (p.value.shape != shape)
      fail("checkpoint: shape mismatch for '" + name + "': file " + shape_str(shape) +
           " vs model " + shape_str(p.value.shape));
    for (auto& v : p.value.v) v = static_cast<Real>(r.f32());
    ++filled;
  }
  if (filled != by_name.size()) fail("checkpoint: missing parameters in " + path);
  scene.validate();
  return scene;
}

}  // namespace fnvr
