#pragma once

#include <memory>
#include <vector>

#include "fnvr/geometry.hpp"

namespace fnvr {

// Exact signed distance shapes; the union is a lower bound, exact for disjoint
// shapes. Serves as test oracle and ground-truth generator backend. The scale
// multiplier deliberately breaks the Eikonal property for regularizer tests.
struct AnalyticSdf {
  enum class Kind { Sphere, Box, Plane, Union };
  Kind kind = Kind::Sphere;
  Vec3 center{0, 0, 0};   // sphere, box
  double radius = 1;      // sphere
  Vec3 half{1, 1, 1};     // box half-extents
  Vec3 normal{0, 0, 1};   // plane
  double offset = 0;      // plane: g = dot(normal, x) - offset
  std::vector<AnalyticSdf> parts;  // union
  double scale = 1.0;

  static AnalyticSdf sphere(Vec3 c, double r) {
    AnalyticSdf s;
    s.kind = Kind::Sphere;
    s.center = c;
    s.radius = r;
    return s;
  }
  static AnalyticSdf box(Vec3 c, Vec3 half_extent) {
    AnalyticSdf s;
    s.kind = Kind::Box;
    s.center = c;
    s.half = half_extent;
    return s;
  }
  static AnalyticSdf plane(Vec3 n, double off) {
    AnalyticSdf s;
    s.kind = Kind::Plane;
    s.normal = normalized(n);
    s.offset = off;
    return s;
  }
  static AnalyticSdf join(std::vector<AnalyticSdf> shapes) {
    AnalyticSdf s;
    s.kind = Kind::Union;
    s.parts = std::move(shapes);
    return s;
  }

  double eval(Vec3 p) const { return scale * eval_unscaled(p); }

  double eval_unscaled(Vec3 p) const {
    switch (kind) {
      case Kind::Sphere:
        return norm(p - center) - radius;
      case Kind::Box: {
        const Vec3 q{std::abs(p.x - center.x) - half.x, std::abs(p.y - center.y) - half.y,
                     std::abs(p.z - center.z) - half.z};
        const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
        return norm(qp) + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
      }
      case Kind::Plane:
        return dot(normal, p) - offset;
      case Kind::Union: {
        double best = 1e300;
        for (const auto& s : parts) best = std::min(best, s.eval(p));
        return best;
      }
    }
    return 0;
  }

  // index of the closest part for unions; 0 otherwise
  int argmin_part(Vec3 p) const {
    if (kind != Kind::Union) return 0;
    double best = 1e300;
    int arg = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
      const double d = parts[i].eval(p);
      if (d < best) {
        best = d;
        arg = static_cast<int>(i);
      }
    }
    return arg;
  }

  // raw (unnormalized) gradient; unit-norm for true distance shapes
  Vec3 gradient(Vec3 p) const {
    switch (kind) {
      case Kind::Sphere: {
        const Vec3 d = p - center;
        const double n = norm(d);
        return n < 1e-12 ? Vec3{0, 0, scale} : d * (scale / n);
      }
      case Kind::Plane:
        return scale * normal;
      case Kind::Box:
      case Kind::Union: {
        // central differences; box corners and union seams have no unique gradient
        const double h = 1e-5;
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
          Vec3 hi = p, lo = p;
          hi[a] += h;
          lo[a] -= h;
          g[a] = (eval(hi) - eval(lo)) / (2 * h);
        }
        if (norm(g) < 1e-12) return {0, 0, scale};
        return g;
      }
    }
    return {0, 0, 1};
  }

  // local-frame AABB enclosing the shape with a margin
  AABB bounds(double margin = 0.0) const {
    switch (kind) {
      case Kind::Sphere:
        return AABB{center - Vec3{radius, radius, radius}, center + Vec3{radius, radius, radius}}
            .expanded(margin);
      case Kind::Box:
        return AABB{center - half, center + half}.expanded(margin);
      case Kind::Plane:
        // unbounded; callers must supply explicit bounds for planes
        return AABB{{-1e6, -1e6, -1e6}, {1e6, 1e6, 1e6}};
      case Kind::Union: {
        AABB out{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
        for (const auto& s : parts) {
          const AABB b = s.bounds(0);
          out.lo = cwise_min(out.lo, b.lo);
          out.hi = cwise_max(out.hi, b.hi);
        }
        return out.expanded(margin);
      }
    }
    return {};
  }
};

// Time-varying twist about the local Y axis: rotation angle depends only on
// the (rotation-invariant) y coordinate, so the warp inverts in closed form.
// observed = forward(canonical, t); fields sample via inverse.
struct AxisTwistWarp {
  double amplitude = 0.0;  // radians per unit y offset
  double period = 8.0;     // frames per sine cycle
  Vec3 center{0, 0, 0};

  double angle(double y, double t) const {
    return amplitude * std::sin(2.0 * M_PI * t / period) * (y - center.y);
  }

  Vec3 forward(Vec3 p, double t) const { return rotate_y(p, angle(p.y, t)); }
  Vec3 inverse(Vec3 p, double t) const { return rotate_y(p, -angle(p.y, t)); }

 private:
  Vec3 rotate_y(Vec3 p, double a) const {
    const double px = p.x - center.x, pz = p.z - center.z;
    const double c = std::cos(a), s = std::sin(a);
    return {center.x + c * px + s * pz, p.y, center.z - s * px + c * pz};
  }
};

}  // namespace fnvr
