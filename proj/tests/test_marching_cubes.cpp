#include <gtest/gtest.h>

#include "fnvr/marching_cubes.hpp"

using namespace fnvr;

namespace {

// samples f over an n^3 grid spanning [-1,1]^3
template <class F>
std::vector<double> sample_grid(int n, F f, GridTransform& tf) {
  tf.origin = {-1, -1, -1};
  const double s = 2.0 / (n - 1);
  tf.spacing = {s, s, s};
  std::vector<double> v(static_cast<size_t>(n) * n * n);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        v[(static_cast<size_t>(z) * n + y) * n + x] =
            f(tf.apply(x, y, z));
  return v;
}

double trilinear(const std::vector<double>& v, int n, const GridTransform& tf, Vec3 p) {
  const double gx = (p.x - tf.origin.x) / tf.spacing.x;
  const double gy = (p.y - tf.origin.y) / tf.spacing.y;
  const double gz = (p.z - tf.origin.z) / tf.spacing.z;
  const int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, n - 2);
  const int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, n - 2);
  const int z0 = std::clamp(static_cast<int>(std::floor(gz)), 0, n - 2);
  const double fx = gx - x0, fy = gy - y0, fz = gz - z0;
  auto at = [&](int x, int y, int z) { return v[(static_cast<size_t>(z) * n + y) * n + x]; };
  double out = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        out += at(x0 + dx, y0 + dy, z0 + dz) * (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) *
               (dz ? fz : 1 - fz);
  return out;
}

}  // namespace

TEST(MarchingCubes, SphereVertexRadii) {
  const int n = 64;
  GridTransform tf;
  auto v = sample_grid(n, [](Vec3 p) { return norm(p) - 0.5; }, tf);
  const TriangleMesh mesh = marching_cubes(v, n, n, n, tf, 0.0);
  ASSERT_GT(mesh.vertices.size(), 100u);
  ASSERT_GT(mesh.triangles.size(), 100u);
  const double cell = tf.spacing.x;
  for (const Vec3& p : mesh.vertices) {
    EXPECT_GT(norm(p), 0.5 - 2 * cell);
    EXPECT_LT(norm(p), 0.5 + 2 * cell);
  }
}

TEST(MarchingCubes, AllPositiveGridIsEmpty) {
  const int n = 8;
  GridTransform tf;
  auto v = sample_grid(n, [](Vec3) { return 1.0; }, tf);
  const TriangleMesh mesh = marching_cubes(v, n, n, n, tf, 0.0);
  EXPECT_TRUE(mesh.vertices.empty());
  EXPECT_TRUE(mesh.triangles.empty());
}

TEST(MarchingCubes, PlaneAtZZero) {
  const int n = 17;
  GridTransform tf;
  auto v = sample_grid(n, [](Vec3 p) { return p.z; }, tf);
  const TriangleMesh mesh = marching_cubes(v, n, n, n, tf, 0.0);
  ASSERT_GT(mesh.vertices.size(), 0u);
  for (const Vec3& p : mesh.vertices) EXPECT_NEAR(p.z, 0.0, 1e-9);
}

TEST(MarchingCubes, DegenerateGridRejected) {
  GridTransform tf;
  std::vector<double> v(4, 1.0);
  EXPECT_THROW(marching_cubes(v, 1, 2, 2, tf, 0.0), std::invalid_argument);
}

TEST(MarchingCubes, VerticesReinterpolateToIso) {
  const int n = 24;
  GridTransform tf;
  // a lumpy field exercising ambiguous faces
  auto v = sample_grid(
      n, [](Vec3 p) { return std::sin(3 * p.x) * std::cos(2.7 * p.y) + 0.8 * std::sin(2.2 * p.z); },
      tf);
  const double iso = 0.1;
  const TriangleMesh mesh = marching_cubes(v, n, n, n, tf, iso);
  ASSERT_GT(mesh.vertices.size(), 0u);
  for (const Vec3& p : mesh.vertices) EXPECT_NEAR(trilinear(v, n, tf, p), iso, 1e-6);
}

TEST(MarchingCubes, NoDegenerateTriangles) {
  const int n = 32;
  GridTransform tf;
  auto v = sample_grid(n, [](Vec3 p) { return norm(p) - 0.6; }, tf);
  const TriangleMesh mesh = marching_cubes(v, n, n, n, tf, 0.0);
  for (const auto& t : mesh.triangles) {
    const Vec3 a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3 b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3 c = mesh.vertices[static_cast<size_t>(t[2])];
    EXPECT_GT(norm(cross(b - a, c - a)), 1e-12);
    EXPECT_NE(t[0], t[1]);
    EXPECT_NE(t[1], t[2]);
    EXPECT_NE(t[0], t[2]);
  }
}
