#include <gtest/gtest.h>

#include <filesystem>

#include "fnvr/trainer.hpp"

using namespace fnvr;
using R = float;
namespace fs = std::filesystem;

namespace {

SceneSpec tiny_spec(int frames = 2) {
  SceneSpec spec;
  spec.intrinsics.fx = spec.intrinsics.fy = 24;
  spec.intrinsics.cx = spec.intrinsics.cy = 12;
  spec.intrinsics.width = spec.intrinsics.height = 24;
  spec.frames = frames;
  GenObject bg;
  bg.id = 0;
  bg.shape = AnalyticSdf::plane({0, 0, -1}, -3.0);
  bg.aabb_override = AABB{{-3, -3, 2.5}, {3, 3, 3.2}};
  bg.motion = MotionFlag::Static;
  bg.albedo = {0.4, 0.5, 0.6};
  spec.objects.push_back(bg);
  GenObject ball;
  ball.id = 1;
  ball.shape = AnalyticSdf::sphere({0, 0, 0}, 0.4);
  ball.albedo = {0.9, 0.3, 0.2};
  ball.motion = MotionFlag::Rigid;
  for (int t = 0; t < frames; ++t)
    ball.poses.push_back(Pose{Quat::identity(), {0.02 * t, 0, 1.8}});
  spec.objects.push_back(ball);
  return spec;
}

ObjectConfig tiny_cfg() {
  ObjectConfig cfg;
  cfg.sdf.hidden = 24;
  cfg.sdf.hidden_layers = 2;
  cfg.sdf.skip_layer = 1;
  cfg.sdf.feature_dim = 8;
  cfg.sdf.posenc.num_frequencies = 3;
  cfg.color.hidden = 24;
  cfg.color.hidden_layers = 2;
  cfg.color.view_posenc.num_frequencies = 2;
  cfg.deform.hidden = 16;
  cfg.deform.latent_dim = 4;
  return cfg;
}

TrainConfig quick_train(int iters) {
  TrainConfig cfg;
  cfg.iterations = iters;
  cfg.rays_per_batch = 24;
  cfg.sampling.coarse_per_interval = 8;
  cfg.sampling.n_fine = 12;
  cfg.sampling.min_per_interval = 4;
  cfg.surface_samples = 32;
  cfg.warmup_freeze_trajectories = 2;
  cfg.seed = 3;
  return cfg;
}

struct TestSeq {
  std::string dir;
  RGBDSequence seq;
};

TestSeq make_sequence(const char* name) {
  TestSeq ts;
  ts.dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(ts.dir);
  generate_sequence(tiny_spec(), NoiseParams{}, ts.dir);
  ts.seq = load_sequence(ts.dir);
  return ts;
}

}  // namespace

TEST(SampleRayBatch, SizeMatchesRequest) {
  auto ts = make_sequence("fnvr_tr_batch");
  Rng rng(1);
  const auto batch = sample_ray_batch<R>(ts.seq, 256, rng);
  EXPECT_EQ(batch.frame.size(), 256u);
  EXPECT_EQ(batch.gt_color.dim(0), 256);
  fs::remove_all(ts.dir);
}

TEST(SampleRayBatch, DeterministicGivenSeed) {
  auto ts = make_sequence("fnvr_tr_det");
  Rng a(7), b(7);
  const auto ba = sample_ray_batch<R>(ts.seq, 64, a);
  const auto bb = sample_ray_batch<R>(ts.seq, 64, b);
  EXPECT_EQ(ba.frame, bb.frame);
  EXPECT_EQ(ba.px, bb.px);
  EXPECT_EQ(ba.py, bb.py);
  EXPECT_EQ(ba.gt_ray_depth, bb.gt_ray_depth);
  fs::remove_all(ts.dir);
}

TEST(SampleRayBatch, FrameHistogramUniform) {
  auto ts = make_sequence("fnvr_tr_hist");
  Rng rng(9);
  std::array<int, 2> hist{0, 0};
  const int draws = 100000;
  const auto batch = sample_ray_batch<R>(ts.seq, draws, rng);
  for (int f : batch.frame) ++hist[static_cast<size_t>(f)];
  for (int h : hist)
    EXPECT_NEAR(h / static_cast<double>(draws), 0.5, 0.05 * 0.5);
  fs::remove_all(ts.dir);
}

TEST(Train, ZeroIterationsLeavesSceneUntouched) {
  auto ts = make_sequence("fnvr_tr_zero");
  auto scene = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  const uint64_t before = scene.field_param_digest();
  const auto stats = train(ts.seq, scene, quick_train(0));
  EXPECT_EQ(stats.iterations_run, 0);
  EXPECT_EQ(scene.field_param_digest(), before);
  fs::remove_all(ts.dir);
}

TEST(Train, CameraFixedBitIdentical) {
  auto ts = make_sequence("fnvr_tr_cam");
  auto scene = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  const std::vector<Pose> cam_before = scene.camera;
  train(ts.seq, scene, quick_train(5));
  ASSERT_EQ(scene.camera.size(), cam_before.size());
  for (size_t t = 0; t < cam_before.size(); ++t) {
    EXPECT_EQ(std::memcmp(&scene.camera[t].q, &cam_before[t].q, sizeof(Quat)), 0);
    EXPECT_EQ(std::memcmp(&scene.camera[t].t, &cam_before[t].t, sizeof(Vec3)), 0);
  }
  fs::remove_all(ts.dir);
}

TEST(Train, QuaternionsUnitAfterEveryStep) {
  auto ts = make_sequence("fnvr_tr_quat");
  auto scene = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  TrainConfig cfg = quick_train(6);
  cfg.warmup_freeze_trajectories = 0;  // trajectories move from the start
  cfg.lr_trajectories = 1e-2;          // exaggerate drift
  train(ts.seq, scene, cfg);
  for (const auto& traj : scene.trajectories)
    for (int t = 0; t < scene.num_frames; ++t)
      EXPECT_NEAR(traj.pose(t).q.norm(), 1.0, 1e-6);
  fs::remove_all(ts.dir);
}

TEST(Train, UnseenObjectGetsNoGradient) {
  auto ts = make_sequence("fnvr_tr_unseen");
  auto scene = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  // add an object whose AABB no camera ray can hit (behind the camera)
  Rng rng(11);
  scene.add_object(make_neural_object<R>(2, MotionFlag::Rigid, AABB{{-1, -1, -9}, {1, 1, -8}},
                                         tiny_cfg(), scene.num_frames, rng),
                   Trajectory<R>::identity("traj2", scene.num_frames, true));
  const Tensor<R> trans_before = scene.trajectories[2].trans.value;
  TrainConfig cfg = quick_train(4);
  cfg.warmup_freeze_trajectories = 0;
  train(ts.seq, scene, cfg);
  for (size_t i = 0; i < trans_before.v.size(); ++i)
    EXPECT_EQ(scene.trajectories[2].trans.value.v[i], trans_before.v[i]);
  fs::remove_all(ts.dir);
}

TEST(Train, ResumeReproducesNextLoss) {
  auto ts = make_sequence("fnvr_tr_resume");
  const std::string ckpt = ts.dir + "/resume.fnvr";

  auto scene_a = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  TrainConfig three = quick_train(3);
  const auto stats_a = train(ts.seq, scene_a, three);
  ASSERT_EQ(stats_a.loss_curve.size(), 3u);

  auto scene_b = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  TrainConfig two = quick_train(2);
  train(ts.seq, scene_b, two);
  save_scene(ckpt, scene_b);
  auto resumed = load_scene<R>(ckpt);
  TrainConfig one = quick_train(1);
  one.start_iteration = 2;
  const auto stats_c = train(ts.seq, resumed, one);
  ASSERT_EQ(stats_c.loss_curve.size(), 1u);
  EXPECT_NEAR(stats_c.loss_curve[0], stats_a.loss_curve[2], 1e-6);
  fs::remove_all(ts.dir);
}

TEST(Train, LossDecreasesOnTinyOverfit) {
  auto ts = make_sequence("fnvr_tr_overfit");
  auto scene = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  TrainConfig cfg = quick_train(120);
  cfg.rays_per_batch = 48;
  const auto stats = train(ts.seq, scene, cfg);
  double early = 0, late = 0;
  for (int i = 0; i < 20; ++i) early += stats.loss_curve[static_cast<size_t>(i)];
  for (int i = 100; i < 120; ++i) late += stats.loss_curve[static_cast<size_t>(i)];
  EXPECT_LT(late, early);
  fs::remove_all(ts.dir);
}

TEST(Evaluate, SelfRenderedImagesScorePerfect) {
  auto ts = make_sequence("fnvr_tr_eval");
  // metrics on the dataset against itself via a fake report path: feed the
  // gt frames through psnr/ssim directly
  Image<float> a(ts.seq.manifest.intrinsics.width, ts.seq.manifest.intrinsics.height, 3);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) a.at(x, y, c) = static_cast<float>(ts.seq.color[0].at(x, y, c) / 255.0);
  EXPECT_DOUBLE_EQ(psnr(a, a), 99.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
  fs::remove_all(ts.dir);
}

TEST(Evaluate, DeterministicReport) {
  auto ts = make_sequence("fnvr_tr_evald");
  auto scene = build_scene_from_sequence<R>(ts.seq, tiny_cfg(), nullptr, 5);
  SamplingConfig cfg;
  cfg.coarse_per_interval = 6;
  cfg.n_fine = 8;
  cfg.min_per_interval = 2;
  cfg.seed = 13;
  const auto a = evaluate(scene, ts.seq, cfg);
  const auto b = evaluate(scene, ts.seq, cfg);
  EXPECT_EQ(a.color_psnr, b.color_psnr);
  EXPECT_EQ(a.color_ssim, b.color_ssim);
  EXPECT_EQ(a.depth_l1, b.depth_l1);
  fs::remove_all(ts.dir);
}
