#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnvr/analytic_sdf.hpp"
#include "fnvr/geometry.hpp"
#include "fnvr/image.hpp"
#include "fnvr/image_io.hpp"
#include "fnvr/scene.hpp"

namespace fnvr {

// Depth maps hold z-depth (camera-frame z), 0 marks invalid; colors are 8-bit
// PPM, masks are PGM with object id + 1 (0 = unlabeled).

struct NoiseParams {
  double sigma0 = 0.0;            // meters
  double sigma1 = 0.0;            // meters^-1: sigma(z) = sigma0 + sigma1 z^2
  double dropout_base = 0.0;      // dropout probability at fully grazing view
  double grazing_exponent = 2.0;  // p = base * (1 - |n.v|)^exponent
  int mask_erosion = 0;           // px; simulates imperfect segmentation
  uint64_t seed = 0;

  void validate() const {
    if (sigma0 < 0 || sigma1 < 0 || dropout_base < 0 || grazing_exponent < 0 || mask_erosion < 0)
      fail("noise params must be non-negative");
  }
};

// authored object of the generator scene
struct GenObject {
  int id = 0;
  AnalyticSdf shape;  // authored local frame
  Vec3 albedo{0.7, 0.7, 0.7};
  MotionFlag motion = MotionFlag::Static;
  std::vector<Pose> poses;  // authored local->world; one entry = constant
  std::optional<AxisTwistWarp> warp;  // scripted deformation, identity at frame 0
  std::optional<AABB> aabb_override;  // authored frame (required for planes)
};

struct SceneSpec {
  CameraIntrinsics intrinsics;
  int frames = 1;
  Vec3 light{0.3, -0.5, -0.8};
  std::vector<Pose> camera;  // authored camera-to-world; one entry = static
  std::vector<GenObject> objects;
  double aabb_margin = 0.15;

  Pose camera_at(int t) const {
    return camera.empty() ? Pose::identity()
                          : camera[static_cast<size_t>(std::min<int>(t, static_cast<int>(camera.size()) - 1))];
  }
};

struct ManifestObject {
  int id = 0;
  AABB aabb;  // local frame (frame-0 placement)
  MotionFlag motion = MotionFlag::Static;
  std::vector<int> keyframes{0};
};

struct SequenceManifest {
  CameraIntrinsics intrinsics;
  int frames = 0;
  std::vector<ManifestObject> objects;
  bool has_gt = false;
  NoiseParams noise;
};

struct RGBDSequence {
  SequenceManifest manifest;
  std::vector<Image<uint8_t>> color;
  std::vector<Image<float>> depth;
  std::vector<Image<uint8_t>> mask;
  std::vector<Pose> gt_camera;
  std::map<int, std::vector<Pose>> gt_objects;
  std::string dir;
};

namespace detail_ds {

inline std::string frame_name(const char* sub, int t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%06d.%s", sub, t, ext);
  return buf;
}

// sphere-traceable posed & warped analytic object in the emitted world frame
struct PosedField {
  const GenObject* obj = nullptr;
  Pose world_to_authored;  // inverse placement at the queried frame

  double eval(Vec3 world, double t) const {
    Vec3 q = pose_apply(world_to_authored, world);
    if (obj->warp) q = obj->warp->inverse(q, t);
    return obj->shape.eval(q);
  }

  Vec3 normal(Vec3 world, double t) const {
    const double h = 1e-5;
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
      Vec3 hi = world, lo = world;
      hi[a] += h;
      lo[a] -= h;
      g[a] = (eval(hi, t) - eval(lo, t)) / (2 * h);
    }
    const double n = norm(g);
    return n < 1e-12 ? Vec3{0, 0, 1} : g / n;
  }
};

inline nlohmann::json pose_json(const Pose& p) {
  return {{"q", {p.q.w, p.q.x, p.q.y, p.q.z}}, {"t", {p.t.x, p.t.y, p.t.z}}};
}
inline Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  if (j.contains("q")) {
    p.q = Quat{j["q"][0], j["q"][1], j["q"][2], j["q"][3]};
    check_unit(p.q, "pose_from_json");
  }
  if (j.contains("t")) p.t = Vec3{j["t"][0], j["t"][1], j["t"][2]};
  return p;
}

}  // namespace detail_ds

// Writes one sequence: color/%06d.ppm, depth/%06d.pfm, mask/%06d.pgm,
// manifest.json, and the ground-truth block (gt/trajectories.json +
// gt/corr/%06d_%06d.txt with per-pixel correspondences between consecutive
// frames). Every emitted pose is re-expressed so the world frame is the
// frame-0 camera and each object's local frame is its frame-0 placement.
inline SequenceManifest generate_sequence(const SceneSpec& spec, const NoiseParams& noise,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  noise.validate();
  spec.intrinsics.validate();
  if (spec.frames < 1 || spec.objects.empty()) fail("generate_sequence: empty spec");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "color", ec);
  fs::create_directories(fs::path(out_dir) / "depth", ec);
  fs::create_directories(fs::path(out_dir) / "mask", ec);
  fs::create_directories(fs::path(out_dir) / "gt" / "corr", ec);
  if (!fs::exists(fs::path(out_dir) / "gt" / "corr"))
    fail("generate_sequence: cannot create output directory " + out_dir);

  const int W = spec.intrinsics.width, H = spec.intrinsics.height, T = spec.frames;
  const Pose cam0_inv = pose_inverse(spec.camera_at(0));

  // emitted camera path (frame-0 camera = identity)
  std::vector<Pose> camera(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) camera[static_cast<size_t>(t)] = pose_compose(cam0_inv, spec.camera_at(t));

  // per-object placement in the emitted world frame
  auto placement = [&](const GenObject& o, int t) {
    const Pose authored =
        o.poses.empty()
            ? Pose::identity()
            : o.poses[static_cast<size_t>(std::min<int>(t, static_cast<int>(o.poses.size()) - 1))];
    return pose_compose(cam0_inv, authored);
  };
  const int n_obj = static_cast<int>(spec.objects.size());
  std::vector<std::vector<Pose>> place(static_cast<size_t>(n_obj));
  std::vector<std::vector<Pose>> traj(static_cast<size_t>(n_obj));  // frame-0-identity trajectories
  for (int i = 0; i < n_obj; ++i) {
    place[static_cast<size_t>(i)].resize(static_cast<size_t>(T));
    traj[static_cast<size_t>(i)].resize(static_cast<size_t>(T));
    const Pose p0_inv = pose_inverse(placement(spec.objects[static_cast<size_t>(i)], 0));
    for (int t = 0; t < T; ++t) {
      place[static_cast<size_t>(i)][static_cast<size_t>(t)] = placement(spec.objects[static_cast<size_t>(i)], t);
      traj[static_cast<size_t>(i)][static_cast<size_t>(t)] =
          pose_compose(place[static_cast<size_t>(i)][static_cast<size_t>(t)], p0_inv);
    }
  }

  // local-frame AABBs (frame-0 placement frame); warped objects get sampled hulls
  const Vec3 light = normalized(cam0_inv.q.rotate(spec.light));
  std::vector<AABB> local_aabb(static_cast<size_t>(n_obj));
  for (int i = 0; i < n_obj; ++i) {
    const GenObject& o = spec.objects[static_cast<size_t>(i)];
    const AABB authored = o.aabb_override ? *o.aabb_override : o.shape.bounds(0);
    AABB box = authored;
    if (o.warp) {
      // hull of the warped box over all frames (authored frame)
      AABB hull{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
      for (int t = 0; t < T; ++t)
        for (int gx = 0; gx <= 4; ++gx)
          for (int gy = 0; gy <= 4; ++gy)
            for (int gz = 0; gz <= 4; ++gz) {
              const Vec3 c{authored.lo.x + (authored.hi.x - authored.lo.x) * gx / 4.0,
                           authored.lo.y + (authored.hi.y - authored.lo.y) * gy / 4.0,
                           authored.lo.z + (authored.hi.z - authored.lo.z) * gz / 4.0};
              const Vec3 w = o.warp->forward(c, t);
              hull.lo = cwise_min(hull.lo, w);
              hull.hi = cwise_max(hull.hi, w);
            }
      box = hull;
    }
    // the manifest AABB lives in the object's local frame, which is its
    // frame-0 placement in the emitted world
    local_aabb[static_cast<size_t>(i)] =
        aabb_transform_hull(box, place[static_cast<size_t>(i)][0]).expanded(spec.aabb_margin);
  }

  // sphere tracing against all posed objects
  auto trace = [&](int t, Vec3 o, Vec3 d, double& t_hit, int& hit_obj) {
    double s = 1e-3;
    hit_obj = -1;
    for (int step = 0; step < 512 && s < 60.0; ++step) {
      const Vec3 p = o + s * d;
      double best = 1e300;
      int best_obj = -1;
      for (int i = 0; i < n_obj; ++i) {
        detail_ds::PosedField f{&spec.objects[static_cast<size_t>(i)],
                                pose_inverse(place[static_cast<size_t>(i)][static_cast<size_t>(t)])};
        const double g = f.eval(p, t);
        if (g < best) {
          best = g;
          best_obj = i;
        }
      }
      if (best < 1e-4) {
        t_hit = s;
        hit_obj = best_obj;
        return true;
      }
      s += 0.8 * std::max(best, 1e-4);
    }
    return false;
  };

  std::vector<Image<float>> clean_depth(static_cast<size_t>(T));
  std::vector<Image<uint8_t>> masks(static_cast<size_t>(T));

  for (int t = 0; t < T; ++t) {
    Image<uint8_t> color(W, H, 3);
    Image<float> depth(W, H, 1);
    Image<uint8_t> mask(W, H, 1);
    const Pose cam = camera[static_cast<size_t>(t)];

    parallel_for(H, [&](int64_t y0, int64_t y1) {
      for (int64_t y = y0; y < y1; ++y)
        for (int x = 0; x < W; ++x) {
          const Ray ray = pixel_to_ray(spec.intrinsics, cam, x + 0.5, static_cast<double>(y) + 0.5, t);
          double t_hit = 0;
          int hit = -1;
          if (!trace(t, ray.o, ray.d, t_hit, hit)) continue;
          const Vec3 p = ray.o + t_hit * ray.d;
          detail_ds::PosedField f{&spec.objects[static_cast<size_t>(hit)],
                                  pose_inverse(place[static_cast<size_t>(hit)][static_cast<size_t>(t)])};
          const Vec3 n = f.normal(p, t);
          const double lambert = 0.3 + 0.7 * std::max(0.0, dot(n, -light));
          const Vec3 albedo = spec.objects[static_cast<size_t>(hit)].albedo;
          auto quant = [](double v) {
            return static_cast<uint8_t>(std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255));
          };
          color.at(x, static_cast<int>(y), 0) = quant(albedo.x * lambert);
          color.at(x, static_cast<int>(y), 1) = quant(albedo.y * lambert);
          color.at(x, static_cast<int>(y), 2) = quant(albedo.z * lambert);
          // z-depth: camera-frame z of the hit point
          const Vec3 pc = pose_apply(pose_inverse(cam), p);
          depth.at(x, static_cast<int>(y), 0) = static_cast<float>(pc.z);
          mask.at(x, static_cast<int>(y), 0) =
              static_cast<uint8_t>(spec.objects[static_cast<size_t>(hit)].id + 1);
        }
    }, 1);

    clean_depth[static_cast<size_t>(t)] = depth;
    masks[static_cast<size_t>(t)] = mask;

    // sensor noise on depth only
    Image<float> noisy = depth;
    if (noise.sigma0 > 0 || noise.sigma1 > 0 || noise.dropout_base > 0) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const float z = depth.at(x, y, 0);
          if (z <= 0) continue;
          Rng prng(mix_seed(noise.seed, static_cast<uint64_t>(t),
                            static_cast<uint64_t>(y) * W + x));
          if (noise.dropout_base > 0) {
            const Ray ray = pixel_to_ray(spec.intrinsics, cam, x + 0.5, y + 0.5, t);
            double t_hit;
            int hit;
            trace(t, ray.o, ray.d, t_hit, hit);
            detail_ds::PosedField f{&spec.objects[static_cast<size_t>(hit)],
                                    pose_inverse(place[static_cast<size_t>(hit)][static_cast<size_t>(t)])};
            const Vec3 n = f.normal(ray.o + t_hit * ray.d, t);
            const double grazing = 1.0 - std::abs(dot(n, ray.d));
            if (prng.uniform() < noise.dropout_base * std::pow(grazing, noise.grazing_exponent)) {
              noisy.at(x, y, 0) = 0.0f;
              continue;
            }
          }
          const double sigma = noise.sigma0 + noise.sigma1 * z * z;
          if (sigma > 0) noisy.at(x, y, 0) = static_cast<float>(z + prng.normal(0, sigma));
        }
    }

    // optional segmentation imperfection: erode every labeled region
    Image<uint8_t> out_mask = mask;
    for (int pass = 0; pass < noise.mask_erosion; ++pass) {
      Image<uint8_t> next = out_mask;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const uint8_t id = out_mask.at(x, y, 0);
          if (id == 0) continue;
          for (int dy = -1; dy <= 1 && next.at(x, y, 0); ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx, yy = y + dy;
              if (xx < 0 || yy < 0 || xx >= W || yy >= H || out_mask.at(xx, yy, 0) != id) {
                next.at(x, y, 0) = 0;
                dy = 2;
                break;
              }
            }
        }
      out_mask = next;
    }

    write_ppm(out_dir + "/" + detail_ds::frame_name("color", t, "ppm"), color);
    write_pfm(out_dir + "/" + detail_ds::frame_name("depth", t, "pfm"), noisy);
    write_pgm(out_dir + "/" + detail_ds::frame_name("mask", t, "pgm"), out_mask);
  }

  // ground-truth correspondences between consecutive frames (noise-free
  // geometry): canonicalize the frame-t hit point, replay it at frame t+1
  for (int t = 0; t + 1 < T; ++t) {
    char name[64];
    std::snprintf(name, sizeof(name), "gt/corr/%06d_%06d.txt", t, t + 1);
    std::ofstream f(out_dir + "/" + name);
    if (!f) fail("generate_sequence: cannot write " + std::string(name));
    const Pose cam_next_inv = pose_inverse(camera[static_cast<size_t>(t + 1)]);
    for (int i = 0; i < n_obj; ++i) {
      const GenObject& o = spec.objects[static_cast<size_t>(i)];
      std::vector<std::array<double, 5>> lines;
      const Pose cam = camera[static_cast<size_t>(t)];
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (masks[static_cast<size_t>(t)].at(x, y, 0) != o.id + 1) continue;
          const float z = clean_depth[static_cast<size_t>(t)].at(x, y, 0);
          if (z <= 0) continue;
          // unproject with z-depth
          const Vec3 dir_cam{(x + 0.5 - spec.intrinsics.cx) / spec.intrinsics.fx,
                             (y + 0.5 - spec.intrinsics.cy) / spec.intrinsics.fy, 1.0};
          const Vec3 pw = pose_apply(cam, dir_cam * static_cast<double>(z));
          Vec3 q = pose_apply(pose_inverse(place[static_cast<size_t>(i)][static_cast<size_t>(t)]), pw);
          if (o.warp) q = o.warp->inverse(q, t);
          Vec3 q_next = o.warp ? o.warp->forward(q, t + 1) : q;
          const Vec3 pw_next =
              pose_apply(place[static_cast<size_t>(i)][static_cast<size_t>(t + 1)], q_next);
          const Vec3 pc = pose_apply(cam_next_inv, pw_next);
          if (pc.z <= 1e-6) continue;
          const double px = spec.intrinsics.fx * pc.x / pc.z + spec.intrinsics.cx - 0.5;
          const double py = spec.intrinsics.fy * pc.y / pc.z + spec.intrinsics.cy - 0.5;
          // only visible-to-visible pairs: the destination must land on the
          // same object, unoccluded (as an optical-flow match would)
          const int dx = static_cast<int>(std::lround(px));
          const int dy = static_cast<int>(std::lround(py));
          if (dx < 0 || dy < 0 || dx >= W || dy >= H) continue;
          if (masks[static_cast<size_t>(t + 1)].at(dx, dy, 0) != o.id + 1) continue;
          const float z_next = clean_depth[static_cast<size_t>(t + 1)].at(dx, dy, 0);
          if (z_next <= 0 || std::abs(z_next - pc.z) > 0.05) continue;
          lines.push_back({x + 0.0, y + 0.0, px, py, 1.0});
        }
      f << "object " << o.id << " " << t << " " << t + 1 << " " << lines.size() << "\n";
      for (const auto& l : lines)
        f << l[0] << " " << l[1] << " " << l[2] << " " << l[3] << " " << l[4] << "\n";
    }
  }

  // gt trajectories
  {
    nlohmann::json gt;
    nlohmann::json cam_j = nlohmann::json::array();
    for (const Pose& p : camera) cam_j.push_back(detail_ds::pose_json(p));
    gt["camera"] = cam_j;
    nlohmann::json objs = nlohmann::json::object();
    for (int i = 0; i < n_obj; ++i) {
      nlohmann::json tr = nlohmann::json::array();
      for (const Pose& p : traj[static_cast<size_t>(i)]) tr.push_back(detail_ds::pose_json(p));
      objs[std::to_string(spec.objects[static_cast<size_t>(i)].id)] = tr;
    }
    gt["objects"] = objs;
    std::ofstream f(out_dir + "/gt/trajectories.json");
    f << gt.dump(1) << "\n";
  }

  // manifest
  SequenceManifest man;
  man.intrinsics = spec.intrinsics;
  man.frames = T;
  man.has_gt = true;
  man.noise = noise;
  {
    nlohmann::json j;
    j["intrinsics"] = {{"fx", spec.intrinsics.fx}, {"fy", spec.intrinsics.fy},
                       {"cx", spec.intrinsics.cx}, {"cy", spec.intrinsics.cy},
                       {"width", spec.intrinsics.width}, {"height", spec.intrinsics.height}};
    j["frames"] = T;
    j["files"] = {{"color", "color/%06d.ppm"}, {"depth", "depth/%06d.pfm"}, {"mask", "mask/%06d.pgm"}};
    nlohmann::json objs = nlohmann::json::array();
    for (int i = 0; i < n_obj; ++i) {
      const GenObject& o = spec.objects[static_cast<size_t>(i)];
      const AABB& b = local_aabb[static_cast<size_t>(i)];
      objs.push_back({{"id", o.id},
                      {"motion", motion_name(o.motion)},
                      {"keyframes", {0}},
                      {"aabb", {{"lo", {b.lo.x, b.lo.y, b.lo.z}}, {"hi", {b.hi.x, b.hi.y, b.hi.z}}}}});
      ManifestObject mo;
      mo.id = o.id;
      mo.aabb = b;
      mo.motion = o.motion;
      man.objects.push_back(mo);
    }
    j["objects"] = objs;
    j["gt"] = {{"trajectories", "gt/trajectories.json"}, {"corr", "gt/corr/%06d_%06d.txt"}};
    std::ofstream f(out_dir + "/manifest.json");
    if (!f) fail("generate_sequence: cannot write manifest.json under " + out_dir);
    f << j.dump(1) << "\n";
  }
  return man;
}

// Applies the sensor-noise model to a depth map in place semantics (returns a
// copy): additive Gaussian with sigma(z) = sigma0 + sigma1 z^2 plus
// grazing-angle dropout using the supplied normal map.
inline Image<float> sensor_noise(const Image<float>& depth, const Image<float>& normals,
                                 const Image<uint8_t>& normal_valid, const CameraIntrinsics& intr,
                                 const NoiseParams& params, uint64_t frame = 0) {
  params.validate();
  Image<float> out = depth;
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const float z = depth.at(x, y, 0);
      if (z <= 0) continue;
      Rng prng(mix_seed(params.seed, frame, static_cast<uint64_t>(y) * depth.width + x));
      if (params.dropout_base > 0 && normal_valid.at(x, y, 0)) {
        const Vec3 v = normalized(Vec3{(x + 0.5 - intr.cx) / intr.fx, (y + 0.5 - intr.cy) / intr.fy, 1.0});
        const Vec3 n{normals.at(x, y, 0), normals.at(x, y, 1), normals.at(x, y, 2)};
        const double grazing = 1.0 - std::abs(dot(n, v));
        if (prng.uniform() < params.dropout_base * std::pow(grazing, params.grazing_exponent)) {
          out.at(x, y, 0) = 0.0f;
          continue;
        }
      }
      const double sigma = params.sigma0 + params.sigma1 * z * z;
      if (sigma > 0) out.at(x, y, 0) = static_cast<float>(z + prng.normal(0, sigma));
    }
  return out;
}

inline RGBDSequence load_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string man_path = dir + "/manifest.json";
  std::ifstream mf(man_path);
  if (!mf) fail("load_sequence: missing manifest " + man_path);
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const std::exception& e) {
    fail("load_sequence: bad manifest " + man_path + ": " + e.what());
  }

  RGBDSequence seq;
  seq.dir = dir;
  try {
    const auto& in = j.at("intrinsics");
    seq.manifest.intrinsics.fx = in.at("fx");
    seq.manifest.intrinsics.fy = in.at("fy");
    seq.manifest.intrinsics.cx = in.at("cx");
    seq.manifest.intrinsics.cy = in.at("cy");
    seq.manifest.intrinsics.width = in.at("width");
    seq.manifest.intrinsics.height = in.at("height");
    seq.manifest.frames = j.at("frames");
    for (const auto& oj : j.at("objects")) {
      ManifestObject mo;
      mo.id = oj.at("id");
      mo.motion = motion_from_name(oj.at("motion"));
      const auto& bj = oj.at("aabb");
      mo.aabb.lo = {bj.at("lo")[0], bj.at("lo")[1], bj.at("lo")[2]};
      mo.aabb.hi = {bj.at("hi")[0], bj.at("hi")[1], bj.at("hi")[2]};
      if (oj.contains("keyframes")) mo.keyframes = oj.at("keyframes").get<std::vector<int>>();
      seq.manifest.objects.push_back(mo);
    }
  } catch (const nlohmann::json::exception& e) {
    fail("load_sequence: manifest " + man_path + " missing field: " + e.what());
  }
  seq.manifest.intrinsics.validate();

  // dense ids from 0 with the background present
  {
    std::vector<int> ids;
    for (const auto& o : seq.manifest.objects) ids.push_back(o.id);
    std::sort(ids.begin(), ids.end());
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != static_cast<int>(i))
        fail("load_sequence: object ids must be dense from 0 in " + man_path);
  }

  for (int t = 0; t < seq.manifest.frames; ++t) {
    const std::string cp = dir + "/" + detail_ds::frame_name("color", t, "ppm");
    const std::string dp = dir + "/" + detail_ds::frame_name("depth", t, "pfm");
    const std::string mp = dir + "/" + detail_ds::frame_name("mask", t, "pgm");
    for (const std::string& p : {cp, dp, mp})
      if (!fs::exists(p)) fail("load_sequence: missing frame file " + p);
    seq.color.push_back(read_ppm(cp));
    seq.depth.push_back(read_pfm(dp));
    seq.mask.push_back(read_pgm(mp));
    const auto& c = seq.color.back();
    if (c.width != seq.manifest.intrinsics.width || c.height != seq.manifest.intrinsics.height)
      fail("load_sequence: frame size mismatch in " + cp);
    if (seq.depth.back().width != c.width || seq.mask.back().width != c.width)
      fail("load_sequence: frame size mismatch at frame " + std::to_string(t));
  }

  if (j.contains("gt")) {
    const std::string gp = dir + "/" + j["gt"].at("trajectories").get<std::string>();
    std::ifstream gf(gp);
    if (gf) {
      nlohmann::json gj;
      gf >> gj;
      for (const auto& pj : gj.at("camera")) seq.gt_camera.push_back(detail_ds::pose_from_json(pj));
      for (auto it = gj.at("objects").begin(); it != gj.at("objects").end(); ++it) {
        std::vector<Pose> poses;
        for (const auto& pj : it.value()) poses.push_back(detail_ds::pose_from_json(pj));
        seq.gt_objects[std::stoi(it.key())] = std::move(poses);
      }
      seq.manifest.has_gt = true;
    }
  }
  return seq;
}

// ---- scene-spec JSON (gen-data input) ----

inline AnalyticSdf shape_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  AnalyticSdf s;
  if (kind == "sphere") {
    s = AnalyticSdf::sphere({j.at("center")[0], j.at("center")[1], j.at("center")[2]}, j.at("radius"));
  } else if (kind == "box") {
    s = AnalyticSdf::box({j.at("center")[0], j.at("center")[1], j.at("center")[2]},
                         {j.at("half")[0], j.at("half")[1], j.at("half")[2]});
  } else if (kind == "plane") {
    s = AnalyticSdf::plane({j.at("normal")[0], j.at("normal")[1], j.at("normal")[2]}, j.at("offset"));
  } else if (kind == "union") {
    std::vector<AnalyticSdf> parts;
    for (const auto& pj : j.at("parts")) parts.push_back(shape_from_json(pj));
    s = AnalyticSdf::join(std::move(parts));
  } else {
    fail("scene spec: unknown shape kind '" + kind + "'");
  }
  return s;
}

inline SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  const auto& in = j.at("intrinsics");
  spec.intrinsics.fx = in.at("fx");
  spec.intrinsics.fy = in.at("fy");
  spec.intrinsics.cx = in.at("cx");
  spec.intrinsics.cy = in.at("cy");
  spec.intrinsics.width = in.at("width");
  spec.intrinsics.height = in.at("height");
  spec.frames = j.at("frames");
  if (j.contains("light")) spec.light = {j["light"][0], j["light"][1], j["light"][2]};
  if (j.contains("aabb_margin")) spec.aabb_margin = j["aabb_margin"];
  if (j.contains("camera")) {
    const auto& cj = j["camera"];
    if (cj.contains("static")) {
      spec.camera.push_back(detail_ds::pose_from_json(cj["static"]));
    } else {
      for (const auto& pj : cj.at("poses")) spec.camera.push_back(detail_ds::pose_from_json(pj));
    }
  }
  for (const auto& oj : j.at("objects")) {
    GenObject o;
    o.id = oj.at("id");
    o.shape = shape_from_json(oj.at("shape"));
    if (oj.contains("albedo")) o.albedo = {oj["albedo"][0], oj["albedo"][1], oj["albedo"][2]};
    o.motion = motion_from_name(oj.at("motion"));
    if (oj.contains("poses")) {
      for (const auto& pj : oj["poses"]) o.poses.push_back(detail_ds::pose_from_json(pj));
    } else if (oj.contains("pose")) {
      o.poses.push_back(detail_ds::pose_from_json(oj["pose"]));
    }
    if (oj.contains("velocity")) {
      const Vec3 vel{oj["velocity"][0], oj["velocity"][1], oj["velocity"][2]};
      const Pose base = o.poses.empty() ? Pose::identity() : o.poses[0];
      o.poses.clear();
      for (int t = 0; t < spec.frames; ++t)
        o.poses.push_back(Pose{base.q, base.t + static_cast<double>(t) * vel});
    }
    if (oj.contains("warp")) {
      const auto& wj = oj["warp"];
      if (wj.at("kind") != "twist-y") fail("scene spec: unknown warp kind");
      AxisTwistWarp w;
      w.amplitude = wj.at("amplitude");
      w.period = wj.at("period");
      if (wj.contains("center")) w.center = {wj["center"][0], wj["center"][1], wj["center"][2]};
      o.warp = w;
    }
    if (oj.contains("aabb")) {
      AABB b;
      b.lo = {oj["aabb"].at("lo")[0], oj["aabb"].at("lo")[1], oj["aabb"].at("lo")[2]};
      b.hi = {oj["aabb"].at("hi")[0], oj["aabb"].at("hi")[1], oj["aabb"].at("hi")[2]};
      o.aabb_override = b;
    }
    spec.objects.push_back(std::move(o));
  }
  return spec;
}

inline SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("scene spec: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    fail("scene spec: parse error in " + path + ": " + e.what());
  }
  try {
    return scene_spec_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    fail("scene spec: missing field in " + path + ": " + e.what());
  }
}

}  // namespace fnvr
