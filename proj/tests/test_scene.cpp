#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "fnvr/checkpoint.hpp"
#include "fnvr/rendering.hpp"
#include "fnvr/scene.hpp"

using namespace fnvr;
using R = float;  // checkpoints store f32; float scenes round-trip bit-exactly

namespace {

CameraIntrinsics test_intr() {
  CameraIntrinsics in;
  in.fx = in.fy = 64;
  in.cx = in.cy = 32;
  in.width = in.height = 64;
  return in;
}

ObjectConfig small_cfg() {
  ObjectConfig cfg;
  cfg.sdf.hidden = 32;
  cfg.sdf.hidden_layers = 2;
  cfg.sdf.skip_layer = 1;
  cfg.sdf.feature_dim = 8;
  cfg.sdf.posenc.num_frequencies = 3;
  cfg.color.hidden = 32;
  cfg.color.hidden_layers = 2;
  cfg.color.view_posenc.num_frequencies = 2;
  cfg.deform.hidden = 16;
  cfg.deform.latent_dim = 4;
  return cfg;
}

FactoredScene<R> two_object_scene(uint64_t seed = 1) {
  Rng rng(seed);
  auto scene = FactoredScene<R>::create(test_intr(), 4);
  scene.add_object(
      make_neural_object<R>(0, MotionFlag::Static, AABB{{-2, -2, 0}, {2, 2, 4}}, small_cfg(), 4, rng),
      Trajectory<R>::identity("traj0", 4, false));
  scene.add_object(
      make_neural_object<R>(1, MotionFlag::Rigid, AABB{{-1, -1, -1}, {1, 1, 1}}, small_cfg(), 4, rng),
      Trajectory<R>::identity("traj1", 4, true));
  scene.validate();
  return scene;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(WorldToLocal, IdentityTrajectoryUnitBox) {
  auto scene = two_object_scene();
  const Vec3 p{0.3, -0.5, 0.7};
  const Vec3 local = scene.world_to_local(1, 0, p);
  EXPECT_NEAR(local.x, p.x, 1e-6);
  EXPECT_NEAR(local.y, p.y, 1e-6);
  EXPECT_NEAR(local.z, p.z, 1e-6);
}

TEST(WorldToLocal, TranslationMapsToOrigin) {
  auto scene = two_object_scene();
  Pose p;
  p.t = {1, 0, 0};
  scene.trajectories[1].set_pose(2, p);
  const Vec3 local = scene.world_to_local(1, 2, {1, 0, 0});
  EXPECT_NEAR(norm(local), 0, 1e-6);
}

TEST(WorldToLocal, StaticObjectIgnoresFrame) {
  auto scene = two_object_scene();
  const Vec3 p{0.4, 0.2, 1.5};
  const Vec3 a = scene.world_to_local(0, 0, p);
  const Vec3 b = scene.world_to_local(0, 3, p);
  EXPECT_DOUBLE_EQ(a.x, b.x);
  EXPECT_DOUBLE_EQ(a.y, b.y);
  EXPECT_DOUBLE_EQ(a.z, b.z);
}

TEST(WorldToLocal, BadIdsRejected) {
  auto scene = two_object_scene();
  EXPECT_THROW(scene.world_to_local(5, 0, {0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(scene.world_to_local(0, 9, {0, 0, 0}), std::invalid_argument);
}

TEST(Edits, EmptyScriptKeepsScene) {
  auto scene = two_object_scene();
  const uint64_t before = scene.field_param_digest();
  auto edited = apply_edit(scene, {});
  EXPECT_EQ(edited.objects.size(), scene.objects.size());
  EXPECT_EQ(edited.field_param_digest(), before);
}

TEST(Edits, DeleteKeepsRemainingObjects) {
  Rng rng(3);
  auto scene = two_object_scene();
  scene.add_object(
      make_neural_object<R>(2, MotionFlag::Rigid, AABB{{-1, -1, -1}, {1, 1, 1}}, small_cfg(), 4, rng),
      Trajectory<R>::identity("traj2", 4, true));
  Edit del;
  del.kind = Edit::Kind::DeleteObject;
  del.id = 1;
  auto edited = apply_edit(scene, {del});
  ASSERT_EQ(edited.objects.size(), 2u);
  EXPECT_EQ(edited.objects[0].id, 0);
  EXPECT_EQ(edited.objects[1].id, 2);
}

TEST(Edits, BackgroundNotDeletable) {
  auto scene = two_object_scene();
  Edit del;
  del.kind = Edit::Kind::DeleteObject;
  del.id = 0;
  EXPECT_THROW(apply_edit(scene, {del}), std::invalid_argument);
}

TEST(Edits, UnknownIdRejected) {
  auto scene = two_object_scene();
  Edit del;
  del.kind = Edit::Kind::DeleteObject;
  del.id = 42;
  EXPECT_THROW(apply_edit(scene, {del}), std::invalid_argument);
}

TEST(Edits, FieldParamsNeverChange) {
  auto scene = two_object_scene();
  const auto before = scene.field_param_digests();
  Edit repl;
  repl.kind = Edit::Kind::ReplaceObjectTrajectory;
  repl.id = 1;
  repl.poses.assign(4, Pose{Quat::from_axis_angle({0, 0, 1}, 0.3), {1, 2, 3}});
  Edit clone;
  clone.kind = Edit::Kind::CloneObject;
  clone.id = 1;
  clone.poses.assign(4, Pose{Quat::identity(), {0.5, 0, 0}});
  auto edited = apply_edit(scene, {repl, clone});
  const auto after = edited.field_param_digests();
  // every pre-existing object keeps its parameters bit for bit; the clone
  // carries the source's parameters under a fresh id
  for (const auto& [id, digest] : before) EXPECT_EQ(after.at(id), digest);
  ASSERT_EQ(edited.objects.size(), 3u);
  EXPECT_EQ(edited.objects[2].id, 2);
  EXPECT_EQ(after.at(2), before.at(1));
}

TEST(Edits, ReplacingTrajectoryWithItselfRendersIdentically) {
  auto scene = two_object_scene();
  // move object 1 into view of a test ray
  for (int t = 0; t < 4; ++t) scene.trajectories[1].set_pose(t, Pose{Quat::identity(), {0, 0, 2}});
  SamplingConfig cfg;
  cfg.coarse_per_interval = 8;
  cfg.n_fine = 16;
  cfg.seed = 5;
  Ray ray;
  ray.o = {0, 0, -1};
  ray.d = {0, 0, 1};
  const RayResult before = render_ray(scene, 1, ray, cfg);

  Edit repl;
  repl.kind = Edit::Kind::ReplaceObjectTrajectory;
  repl.id = 1;
  for (int t = 0; t < 4; ++t) repl.poses.push_back(scene.trajectories[1].pose(t));
  auto edited = apply_edit(scene, {repl});
  const RayResult after = render_ray(edited, 1, ray, cfg);
  EXPECT_EQ(std::memcmp(&before.color, &after.color, sizeof(Vec3)), 0);
  EXPECT_EQ(before.depth, after.depth);
  EXPECT_EQ(before.acc, after.acc);
}

TEST(Checkpoint, RoundTripBitExact) {
  auto scene = two_object_scene(7);
  // make object 1 nonrigid so deformation params round-trip too
  Rng rng(9);
  auto nr = make_neural_object<R>(3, MotionFlag::Nonrigid, AABB{{-1, -1, -1}, {1, 1, 1}},
                                  small_cfg(), 4, rng);
  scene.add_object(std::move(nr), Trajectory<R>::identity("traj3", 4, true));
  scene.trajectories[1].set_pose(2, Pose{Quat::from_axis_angle({0, 1, 0}, 0.4), {0.1, -0.2, 0.3}});

  const std::string path = temp_path("fnvr_ckpt_test.fnvr");
  save_scene(path, scene);
  auto loaded = load_scene<R>(path);

  ASSERT_EQ(loaded.objects.size(), scene.objects.size());
  EXPECT_EQ(loaded.field_param_digest(), scene.field_param_digest());
  std::vector<Tensor<R>*> a, b;
  scene.for_each_param([&](Param<R>& p) { a.push_back(&p.value); });
  loaded.for_each_param([&](Param<R>& p) { b.push_back(&p.value); });
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i]->shape, b[i]->shape);
    EXPECT_EQ(std::memcmp(a[i]->v.data(), b[i]->v.data(), a[i]->v.size() * sizeof(R)), 0);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptedMagicRejected) {
  auto scene = two_object_scene();
  const std::string path = temp_path("fnvr_ckpt_bad.fnvr");
  save_scene(path, scene);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_scene<R>(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncationRejected) {
  auto scene = two_object_scene();
  const std::string path = temp_path("fnvr_ckpt_trunc.fnvr");
  save_scene(path, scene);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full / 2);
  EXPECT_THROW(load_scene<R>(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Checkpoint, DefaultTwoObjectSceneUnderTenMegabytes) {
  Rng rng(11);
  auto scene = FactoredScene<R>::create(test_intr(), 8);
  ObjectConfig def;  // spec defaults: 4x128 sdf, 3x128 color, L=6
  scene.add_object(
      make_neural_object<R>(0, MotionFlag::Static, AABB{{-2, -2, 0}, {2, 2, 4}}, def, 8, rng),
      Trajectory<R>::identity("traj0", 8, false));
  scene.add_object(
      make_neural_object<R>(1, MotionFlag::Nonrigid, AABB{{-1, -1, -1}, {1, 1, 1}}, def, 8, rng),
      Trajectory<R>::identity("traj1", 8, true));
  const std::string path = temp_path("fnvr_ckpt_size.fnvr");
  save_scene(path, scene);
  EXPECT_LT(std::filesystem::file_size(path), 10u * 1024 * 1024);
  std::filesystem::remove(path);
}

TEST(Scene, ValidatesBackgroundConvention) {
  Rng rng(13);
  auto scene = FactoredScene<R>::create(test_intr(), 2);
  scene.add_object(
      make_neural_object<R>(1, MotionFlag::Rigid, AABB{{-1, -1, -1}, {1, 1, 1}}, small_cfg(), 2, rng),
      Trajectory<R>::identity("traj1", 2, true));
  EXPECT_THROW(scene.validate(), std::runtime_error);
}
