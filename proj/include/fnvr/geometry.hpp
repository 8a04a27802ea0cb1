#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "fnvr/common.hpp"
#include "fnvr/image.hpp"

namespace fnvr {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline Vec3 operator*(double s, Vec3 a) { return a * s; }
inline Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
inline Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return a / norm(a); }
inline Vec3 cwise_min(Vec3 a, Vec3 b) { return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)}; }
inline Vec3 cwise_max(Vec3 a, Vec3 b) { return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)}; }

// Unit quaternion (w, x, y, z), canonical sign w >= 0.
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;
  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  static Quat identity() { return {}; }
  static Quat from_axis_angle(Vec3 axis, double angle) {
    const Vec3 a = normalized(axis);
    const double h = angle * 0.5, s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized_canonical() const {
    const double n = norm();
    Quat q{w / n, x / n, y / n, z / n};
    if (q.w < 0) {
      q.w = -q.w;
      q.x = -q.x;
      q.y = -q.y;
      q.z = -q.z;
    }
    return q;
  }

  Quat conjugate() const { return {w, -x, -y, -z}; }

  Quat operator*(const Quat& r) const {
    return {w * r.w - x * r.x - y * r.y - z * r.z, w * r.x + x * r.w + y * r.z - z * r.y,
            w * r.y - x * r.z + y * r.w + z * r.x, w * r.z + x * r.y - y * r.x + z * r.w};
  }

  // scale-invariant in the quaternion norm, so small drift before
  // renormalization does not perturb the rotation action
  Vec3 rotate(Vec3 v) const {
    const Vec3 u{x, y, z};
    const Vec3 c = cross(u, v);
    const double n2 = w * w + x * x + y * y + z * z;
    return v + (2.0 / n2) * (w * c + cross(u, c));
  }
};

// Rigid transform p' = R(q) p + t. Camera poses are camera-to-world;
// convention: right-handed, +z forward, +y down in pixel space.
struct Pose {
  Quat q;
  Vec3 t;

  static Pose identity() { return {}; }
};

inline void check_unit(const Quat& q, const char* where) {
  if (std::abs(q.norm() - 1.0) > 1e-3)
    throw std::invalid_argument(std::string(where) + ": non-unit quaternion (norm " +
                                std::to_string(q.norm()) + ")");
}

inline Vec3 pose_apply(const Pose& p, Vec3 x) { return p.q.rotate(x) + p.t; }

inline Pose pose_compose(const Pose& a, const Pose& b) {
  check_unit(a.q, "pose_compose");
  check_unit(b.q, "pose_compose");
  Pose out;
  out.q = (a.q * b.q).normalized_canonical();
  out.t = a.q.rotate(b.t) + a.t;
  return out;
}

inline Pose pose_inverse(const Pose& p) {
  check_unit(p.q, "pose_inverse");
  Pose out;
  out.q = p.q.conjugate().normalized_canonical();
  out.t = -(p.q.conjugate().rotate(p.t));
  return out;
}

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0)) fail("intrinsics: focal lengths must be positive");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
      fail("intrinsics: principal point outside image");
  }
};

struct Ray {
  Vec3 o;
  Vec3 d;  // unit
  double px = 0, py = 0;
  int frame = 0;
};

// Camera ray through pixel center (x, y). Direction is the camera-to-world
// rotation of ((x-cx)/fx, (y-cy)/fy, 1), normalized; origin is the camera
// position.
inline Ray pixel_to_ray(const CameraIntrinsics& intr, const Pose& cam, double x, double y,
                        int frame = 0) {
  if (x < 0 || x >= intr.width || y < 0 || y >= intr.height)
    throw std::invalid_argument("pixel_to_ray: pixel (" + std::to_string(x) + "," +
                                std::to_string(y) + ") outside image");
  Ray r;
  r.o = cam.t;
  r.d = normalized(cam.q.rotate({(x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0}));
  r.px = x;
  r.py = y;
  r.frame = frame;
  return r;
}

// Axis-aligned box, min-corner < max-corner componentwise.
struct AABB {
  Vec3 lo, hi;

  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 half_extent() const { return (hi - lo) * 0.5; }
  bool contains(Vec3 p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  AABB expanded(double m) const { return {lo - Vec3{m, m, m}, hi + Vec3{m, m, m}}; }
};

// Conservative world-space hull of a posed box: AABB of the 8 transformed corners.
inline AABB aabb_transform_hull(const AABB& box, const Pose& pose) {
  AABB out{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
  for (int i = 0; i < 8; ++i) {
    const Vec3 c{i & 1 ? box.hi.x : box.lo.x, i & 2 ? box.hi.y : box.lo.y,
                 i & 4 ? box.hi.z : box.lo.z};
    const Vec3 w = pose_apply(pose, c);
    out.lo = cwise_min(out.lo, w);
    out.hi = cwise_max(out.hi, w);
  }
  return out;
}

// Slab intersection, clipped to t >= 0. Absent when there is no interval of
// positive extent in front of the origin.
inline std::optional<std::pair<double, double>> ray_aabb_intersect(const Ray& ray,
                                                                   const AABB& box) {
  double t0 = 0.0, t1 = 1e300;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.o[a], d = ray.d[a];
    if (std::abs(d) < 1e-15) {
      if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - o) / d;
    double tb = (box.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return std::nullopt;
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

// Per-pixel normals from a depth map by central differences of the unprojected
// points, oriented toward the camera. Pixels with depth <= 0, border pixels,
// and pixels with any invalid 4-neighbor are masked invalid.
inline void normals_from_depth(const Image<float>& depth, const CameraIntrinsics& intr,
                               Image<float>& normals, Image<uint8_t>& valid) {
  const int w = depth.width, h = depth.height;
  normals = Image<float>(w, h, 3);
  valid = Image<uint8_t>(w, h, 1);
  auto unproject = [&](int x, int y) {
    const double d = depth.at(x, y, 0);
    return Vec3{d * (x - intr.cx) / intr.fx, d * (y - intr.cy) / intr.fy, d};
  };
  auto ok = [&](int x, int y) { return depth.at(x, y, 0) > 0.0f; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1 || !ok(x, y) || !ok(x - 1, y) ||
          !ok(x + 1, y) || !ok(x, y - 1) || !ok(x, y + 1))
        continue;
      const Vec3 tx = unproject(x + 1, y) - unproject(x - 1, y);
      const Vec3 ty = unproject(x, y + 1) - unproject(x, y - 1);
      Vec3 n = cross(tx, ty);
      const double len = norm(n);
      if (len < 1e-14) continue;
      n = n / len;
      if (dot(n, unproject(x, y)) > 0) n = -n;
      normals.at(x, y, 0) = static_cast<float>(n.x);
      normals.at(x, y, 1) = static_cast<float>(n.y);
      normals.at(x, y, 2) = static_cast<float>(n.z);
      valid.at(x, y, 0) = 1;
    }
}

}  // namespace fnvr
