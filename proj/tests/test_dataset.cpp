#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fnvr/dataset.hpp"
#include "fnvr/tracking.hpp"

using namespace fnvr;
namespace fs = std::filesystem;

namespace {

SceneSpec sphere_spec(int frames = 2) {
  SceneSpec spec;
  spec.intrinsics.fx = spec.intrinsics.fy = 32;
  spec.intrinsics.cx = spec.intrinsics.cy = 16;
  spec.intrinsics.width = spec.intrinsics.height = 32;
  spec.frames = frames;
  GenObject bg;
  bg.id = 0;
  bg.shape = AnalyticSdf::plane({0, 0, -1}, -4.0);
  bg.aabb_override = AABB{{-4, -4, 3.5}, {4, 4, 4.2}};
  bg.motion = MotionFlag::Static;
  spec.objects.push_back(bg);
  GenObject ball;
  ball.id = 1;
  ball.shape = AnalyticSdf::sphere({0, 0, 0}, 0.5);
  ball.albedo = {0.9, 0.4, 0.1};
  ball.motion = MotionFlag::Rigid;
  for (int t = 0; t < frames; ++t)
    ball.poses.push_back(Pose{Quat::identity(), {0.02 * t, 0, 2.0}});
  spec.objects.push_back(ball);
  return spec;
}

std::string temp_dir(const char* name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p.string();
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Generate, DeterministicByteIdentical) {
  NoiseParams noise;
  noise.sigma0 = 0.004;
  noise.dropout_base = 0.3;
  noise.seed = 9;
  const std::string a = temp_dir("fnvr_gen_a"), b = temp_dir("fnvr_gen_b");
  generate_sequence(sphere_spec(), noise, a);
  generate_sequence(sphere_spec(), noise, b);
  for (const char* rel : {"color/000000.ppm", "depth/000000.pfm", "mask/000001.pgm",
                          "gt/corr/000000_000001.txt", "manifest.json", "gt/trajectories.json"})
    EXPECT_EQ(slurp(a + "/" + rel), slurp(b + "/" + rel)) << rel;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Generate, NoiselessCenterPixelDepth) {
  // sphere r=0.5 centered 2 units in front: center-pixel z-depth = 1.5
  const std::string dir = temp_dir("fnvr_gen_c");
  generate_sequence(sphere_spec(), NoiseParams{}, dir);
  const RGBDSequence seq = load_sequence(dir);
  // pixel whose ray passes through the image center: cx=16 -> sample (16,16)
  // has center offset 0.5px; check the 2x2 block around the principal point
  float best = 1e9;
  for (int y = 15; y <= 16; ++y)
    for (int x = 15; x <= 16; ++x)
      best = std::min(best, std::abs(seq.depth[0].at(x, y, 0) - 1.5f));
  EXPECT_LT(best, 2e-3);
  fs::remove_all(dir);
}

TEST(Generate, MasksMatchDepthCoverage) {
  const std::string dir = temp_dir("fnvr_gen_m");
  generate_sequence(sphere_spec(), NoiseParams{}, dir);
  const RGBDSequence seq = load_sequence(dir);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const bool has_depth = seq.depth[0].at(x, y, 0) > 0;
      const bool has_mask = seq.mask[0].at(x, y, 0) > 0;
      EXPECT_EQ(has_depth, has_mask);
    }
  fs::remove_all(dir);
}

TEST(Generate, NoiseTouchesOnlyDepth) {
  NoiseParams noise;
  noise.sigma0 = 0.01;
  noise.seed = 3;
  const std::string a = temp_dir("fnvr_gen_n0"), b = temp_dir("fnvr_gen_n1");
  generate_sequence(sphere_spec(), NoiseParams{}, a);
  generate_sequence(sphere_spec(), noise, b);
  EXPECT_EQ(slurp(a + "/color/000000.ppm"), slurp(b + "/color/000000.ppm"));
  EXPECT_EQ(slurp(a + "/mask/000000.pgm"), slurp(b + "/mask/000000.pgm"));
  EXPECT_NE(slurp(a + "/depth/000000.pfm"), slurp(b + "/depth/000000.pfm"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(SensorNoise, ZeroParamsIdentity) {
  Image<float> depth(8, 8, 1);
  for (auto& v : depth.data) v = 2.0f;
  Image<float> normals(8, 8, 3);
  Image<uint8_t> valid(8, 8, 1);
  CameraIntrinsics intr;
  intr.fx = intr.fy = 8;
  intr.cx = intr.cy = 4;
  intr.width = intr.height = 8;
  const Image<float> out = sensor_noise(depth, normals, valid, intr, NoiseParams{});
  EXPECT_EQ(std::memcmp(out.data.data(), depth.data.data(), depth.size() * sizeof(float)), 0);
}

TEST(SensorNoise, GaussianStdMatchesSigma) {
  const int n = 100;
  Image<float> depth(n, n, 1);
  for (auto& v : depth.data) v = 1.0f;
  Image<float> normals(n, n, 3);
  Image<uint8_t> valid(n, n, 1);
  CameraIntrinsics intr;
  intr.fx = intr.fy = n;
  intr.cx = intr.cy = n / 2.0;
  intr.width = intr.height = n;
  NoiseParams p;
  p.sigma0 = 0.005;
  p.seed = 11;
  const Image<float> out = sensor_noise(depth, normals, valid, intr, p);
  double mean = 0, var = 0;
  for (size_t i = 0; i < out.data.size(); ++i) mean += out.data[i] - 1.0;
  mean /= static_cast<double>(out.data.size());
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double d = out.data[i] - 1.0 - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / static_cast<double>(out.data.size()));
  EXPECT_NEAR(std_dev, 0.005, 0.0005);  // within 10%
}

TEST(SensorNoise, FrontoParallelNeverDropsOut) {
  const int n = 32;
  Image<float> depth(n, n, 1);
  for (auto& v : depth.data) v = 1.5f;
  Image<float> normals(n, n, 3);
  Image<uint8_t> valid(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      normals.at(x, y, 2) = -1.0f;
      valid.at(x, y, 0) = 1;
    }
  CameraIntrinsics intr;
  intr.fx = intr.fy = 1e6;  // near-orthographic: view dir ~ +z everywhere
  intr.cx = intr.cy = n / 2.0;
  intr.width = intr.height = n;
  NoiseParams p;
  p.dropout_base = 1.0;
  p.grazing_exponent = 2.0;
  p.seed = 13;
  const Image<float> out = sensor_noise(depth, normals, valid, intr, p);
  for (float v : out.data) EXPECT_GT(v, 0.0f);
}

TEST(SequenceIo, RoundTripBitExact) {
  const std::string dir = temp_dir("fnvr_io_rt");
  NoiseParams noise;
  noise.sigma0 = 0.003;
  noise.seed = 21;
  generate_sequence(sphere_spec(3), noise, dir);
  const RGBDSequence seq = load_sequence(dir);
  // re-encode every frame; bytes must match the files on disk
  for (int t = 0; t < 3; ++t) {
    const std::string cp = dir + "/fnvr_rt_c.ppm";
    write_ppm(cp, seq.color[static_cast<size_t>(t)]);
    char orig[64];
    std::snprintf(orig, sizeof(orig), "%s/color/%06d.ppm", dir.c_str(), t);
    EXPECT_EQ(slurp(cp), slurp(orig));
    const std::string dp = dir + "/fnvr_rt_d.pfm";
    write_pfm(dp, seq.depth[static_cast<size_t>(t)]);
    std::snprintf(orig, sizeof(orig), "%s/depth/%06d.pfm", dir.c_str(), t);
    EXPECT_EQ(slurp(dp), slurp(orig));
    const std::string mp = dir + "/fnvr_rt_m.pgm";
    write_pgm(mp, seq.mask[static_cast<size_t>(t)]);
    std::snprintf(orig, sizeof(orig), "%s/mask/%06d.pgm", dir.c_str(), t);
    EXPECT_EQ(slurp(mp), slurp(orig));
  }
  fs::remove_all(dir);
}

TEST(SequenceIo, MissingFileNamedInError) {
  const std::string dir = temp_dir("fnvr_io_missing");
  generate_sequence(sphere_spec(), NoiseParams{}, dir);
  fs::remove(dir + "/depth/000001.pfm");
  try {
    load_sequence(dir);
    FAIL() << "expected missing-file error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("depth/000001.pfm"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(SequenceIo, NegativePfmScaleIsLittleEndian) {
  const std::string path = (fs::temp_directory_path() / "fnvr_pfm_le.pfm").string();
  Image<float> img(2, 2, 1);
  img.at(0, 0, 0) = 1.25f;
  img.at(1, 1, 0) = -3.5f;
  write_pfm(path, img);
  // header scale must be negative (little-endian)
  std::ifstream f(path, std::ios::binary);
  std::string magic;
  int w, h;
  double scale;
  f >> magic >> w >> h >> scale;
  EXPECT_EQ(magic, "Pf");
  EXPECT_LT(scale, 0);
  const Image<float> back = read_pfm(path);
  EXPECT_EQ(std::memcmp(back.data.data(), img.data.data(), img.size() * sizeof(float)), 0);
  fs::remove(path);
}

TEST(Correspondences, ReprojectWithinHalfPixel) {
  const std::string dir = temp_dir("fnvr_corr_rp");
  generate_sequence(sphere_spec(3), NoiseParams{}, dir);
  const RGBDSequence seq = load_sequence(dir);
  const auto& intr = seq.manifest.intrinsics;
  for (int t = 0; t + 1 < 3; ++t) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s/gt/corr/%06d_%06d.txt", dir.c_str(), t, t + 1);
    for (const auto& block : read_correspondences(name)) {
      const Pose cam_t = seq.gt_camera[static_cast<size_t>(t)];
      const Pose cam_n = seq.gt_camera[static_cast<size_t>(t + 1)];
      const auto& traj = seq.gt_objects.at(block.object_id);
      int checked = 0;
      for (size_t i = 0; i < block.rows.size(); i += 7) {
        const auto& r = block.rows[i];
        const int x = static_cast<int>(r[0]), y = static_cast<int>(r[1]);
        const float z = seq.depth[static_cast<size_t>(t)].at(x, y, 0);
        if (z <= 0) continue;
        // unproject at t, move with the gt rigid motion, project into t+1
        const Vec3 pc{(x + 0.5 - intr.cx) / intr.fx * z, (y + 0.5 - intr.cy) / intr.fy * z, z};
        const Vec3 pw = pose_apply(cam_t, pc);
        const Pose rel = pose_compose(traj[static_cast<size_t>(t + 1)],
                                      pose_inverse(traj[static_cast<size_t>(t)]));
        const Vec3 pw_next = pose_apply(rel, pw);
        const Vec3 pn = pose_apply(pose_inverse(cam_n), pw_next);
        if (pn.z <= 0) continue;
        const double px = intr.fx * pn.x / pn.z + intr.cx - 0.5;
        const double py = intr.fy * pn.y / pn.z + intr.cy - 0.5;
        EXPECT_LT(std::hypot(px - r[2], py - r[3]), 0.5);
        ++checked;
      }
      EXPECT_GT(checked, 0);
    }
  }
  fs::remove_all(dir);
}

TEST(SceneSpecJson, ParsesShapesAndMotion) {
  nlohmann::json j = {
      {"intrinsics",
       {{"fx", 32}, {"fy", 32}, {"cx", 16}, {"cy", 16}, {"width", 32}, {"height", 32}}},
      {"frames", 3},
      {"objects",
       {{{"id", 0},
         {"motion", "static"},
         {"shape", {{"kind", "plane"}, {"normal", {0, 0, -1}}, {"offset", -4}}},
         {"aabb", {{"lo", {-4, -4, 3.5}}, {"hi", {4, 4, 4.2}}}}},
        {{"id", 1},
         {"motion", "rigid"},
         {"shape", {{"kind", "sphere"}, {"center", {0, 0, 0}}, {"radius", 0.5}}},
         {"pose", {{"t", {0, 0, 2}}}},
         {"velocity", {0.02, 0, 0}}},
        {{"id", 2},
         {"motion", "nonrigid"},
         {"shape", {{"kind", "box"}, {"center", {0, 0, 0}}, {"half", {0.2, 0.4, 0.2}}}},
         {"pose", {{"t", {1, 0, 2}}}},
         {"warp", {{"kind", "twist-y"}, {"amplitude", 0.5}, {"period", 8}}}}}}};
  const SceneSpec spec = scene_spec_from_json(j);
  EXPECT_EQ(spec.frames, 3);
  ASSERT_EQ(spec.objects.size(), 3u);
  EXPECT_EQ(spec.objects[1].poses.size(), 3u);
  EXPECT_NEAR(spec.objects[1].poses[2].t.x, 0.04, 1e-12);
  ASSERT_TRUE(spec.objects[2].warp.has_value());
  EXPECT_EQ(spec.objects[2].motion, MotionFlag::Nonrigid);
}

TEST(Warp, TwistInvertsExactly) {
  AxisTwistWarp w;
  w.amplitude = 0.6;
  w.period = 8;
  w.center = {0.3, -0.2, 0.1};
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double t = rng.uniform(0, 8);
    const Vec3 rt = w.inverse(w.forward(p, t), t);
    EXPECT_LT(norm(rt - p), 1e-12);
  }
  // identity at frame 0
  EXPECT_LT(norm(w.forward({0.5, 0.7, -0.3}, 0) - Vec3{0.5, 0.7, -0.3}), 1e-12);
}
