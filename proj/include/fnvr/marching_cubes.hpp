#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fnvr/geometry.hpp"

namespace fnvr {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

struct GridTransform {
  Vec3 origin{-1, -1, -1};
  Vec3 spacing{1, 1, 1};  // per-axis cell size
  Vec3 apply(double ix, double iy, double iz) const {
    return {origin.x + ix * spacing.x, origin.y + iy * spacing.y, origin.z + iz * spacing.z};
  }
};

namespace detail_mc {

// Global edge identity: lattice coordinates of the lower corner plus axis.
struct EdgeKey {
  int x, y, z, axis;
  bool operator==(const EdgeKey& o) const {
    return x == o.x && y == o.y && z == o.z && axis == o.axis;
  }
};
struct EdgeKeyHash {
  size_t operator()(const EdgeKey& k) const {
    return static_cast<size_t>(mix_seed(mix_seed(static_cast<uint64_t>(k.x), static_cast<uint64_t>(k.y)),
                                        static_cast<uint64_t>(k.z), static_cast<uint64_t>(k.axis)));
  }
};

}  // namespace detail_mc

// Extracts the iso-level of a scalar grid. Per cell, iso-contours of each face
// (marching squares with the asymptotic decider on ambiguous faces) are traced
// into closed loops and fan-triangulated. All vertices lie on cell edges with
// linear interpolation, so trilinear re-interpolation at a vertex reproduces
// iso exactly; the decider is face-local, so neighboring cells agree and the
// per-cell triangulation is watertight.
//
// values: row-major with x fastest, i.e. values[(z*ny + y)*nx + x].
inline TriangleMesh marching_cubes(const std::vector<double>& values, int nx, int ny, int nz,
                                   const GridTransform& tf, double iso) {
  if (nx < 2 || ny < 2 || nz < 2)
    throw std::invalid_argument("marching_cubes: grid extents must be >= 2 per axis");
  if (static_cast<int64_t>(values.size()) != static_cast<int64_t>(nx) * ny * nz)
    throw std::invalid_argument("marching_cubes: value count does not match grid extents");

  using detail_mc::EdgeKey;
  TriangleMesh mesh;
  std::unordered_map<EdgeKey, int, detail_mc::EdgeKeyHash> edge_vertex;

  auto value = [&](int x, int y, int z) {
    return values[(static_cast<size_t>(z) * ny + y) * nx + x] - iso;
  };

  // vertex on the edge from lattice point p along axis, by linear interpolation
  auto vertex_on_edge = [&](EdgeKey k) {
    auto it = edge_vertex.find(k);
    if (it != edge_vertex.end()) return it->second;
    int x1 = k.x + (k.axis == 0), y1 = k.y + (k.axis == 1), z1 = k.z + (k.axis == 2);
    const double a = value(k.x, k.y, k.z), b = value(x1, y1, z1);
    const double t = a / (a - b);
    const Vec3 p = tf.apply(k.x + (k.axis == 0 ? t : 0.0), k.y + (k.axis == 1 ? t : 0.0),
                            k.z + (k.axis == 2 ? t : 0.0));
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(k, id);
    return id;
  };

  // cyclic corner offsets for the 6 faces of the unit cell; consecutive
  // corners differ in exactly one bit so each side is a cell edge
  static const int kFace[6][4][3] = {
      {{0, 0, 0}, {0, 1, 0}, {0, 1, 1}, {0, 0, 1}},   // x = 0
      {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}},   // x = 1
      {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}},   // y = 0
      {{0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}},   // y = 1
      {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}},   // z = 0
      {{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};  // z = 1

  auto edge_key_between = [](int cx, int cy, int cz, const int* c0, const int* c1) {
    int axis = c0[0] != c1[0] ? 0 : (c0[1] != c1[1] ? 1 : 2);
    EdgeKey k;
    k.x = cx + std::min(c0[0], c1[0]);
    k.y = cy + std::min(c0[1], c1[1]);
    k.z = cz + std::min(c0[2], c1[2]);
    k.axis = axis;
    return k;
  };

  std::vector<std::pair<int, int>> segments;  // pairs of local vertex ids per cell
  std::vector<int> seg_vert;                  // flattened unique vertex ids

  for (int cz = 0; cz < nz - 1; ++cz)
    for (int cy = 0; cy < ny - 1; ++cy)
      for (int cx = 0; cx < nx - 1; ++cx) {
        // quick reject
        bool any_in = false, any_out = false;
        for (int i = 0; i < 8; ++i) {
          const double v = value(cx + (i & 1), cy + ((i >> 1) & 1), cz + ((i >> 2) & 1));
          (v < 0 ? any_in : any_out) = true;
        }
        if (!any_in || !any_out) continue;

        segments.clear();
        for (int f = 0; f < 6; ++f) {
          const int(*corners)[3] = kFace[f];
          double v[4];
          bool in[4];
          for (int i = 0; i < 4; ++i) {
            v[i] = value(cx + corners[i][0], cy + corners[i][1], cz + corners[i][2]);
            in[i] = v[i] < 0;
          }
          int crossing[4], ncross = 0;
          for (int i = 0; i < 4; ++i)
            if (in[i] != in[(i + 1) % 4]) crossing[ncross++] = i;
          if (ncross == 0) continue;

          auto vert = [&](int side) {
            return vertex_on_edge(
                edge_key_between(cx, cy, cz, corners[side], corners[(side + 1) % 4]));
          };

          if (ncross == 2) {
            segments.emplace_back(vert(crossing[0]), vert(crossing[1]));
          } else {
            // ambiguous face (diagonal corners inside): asymptotic decider on
            // the bilinear interpolant; saddle < 0 joins the inside corners
            const double denom = v[0] - v[1] + v[2] - v[3];
            bool join = false;
            if (denom != 0.0) join = ((v[0] * v[2] - v[1] * v[3]) / denom) < 0.0;
            if (in[0] != join) {
              // pair (e0,e1), (e2,e3)
              segments.emplace_back(vert(0), vert(1));
              segments.emplace_back(vert(2), vert(3));
            } else {
              // pair (e3,e0), (e1,e2)
              segments.emplace_back(vert(3), vert(0));
              segments.emplace_back(vert(1), vert(2));
            }
          }
        }
        if (segments.size() < 3) continue;

        // trace closed loops over the cell's segments
        const int ns = static_cast<int>(segments.size());
        std::vector<bool> used(segments.size(), false);
        for (int s0 = 0; s0 < ns; ++s0) {
          if (used[s0]) continue;
          seg_vert.clear();
          used[s0] = true;
          seg_vert.push_back(segments[s0].first);
          int tail = segments[s0].second;
          while (tail != seg_vert.front()) {
            seg_vert.push_back(tail);
            bool advanced = false;
            for (int s = 0; s < ns; ++s) {
              if (used[s]) continue;
              if (segments[s].first == tail) {
                tail = segments[s].second;
                used[s] = true;
                advanced = true;
                break;
              }
              if (segments[s].second == tail) {
                tail = segments[s].first;
                used[s] = true;
                advanced = true;
                break;
              }
            }
            if (!advanced) break;  // open chain (flat contact); drop it
          }
          if (tail != seg_vert.front() || seg_vert.size() < 3) continue;

          // fan-triangulate; orient so normals point toward increasing field
          for (size_t i = 1; i + 1 < seg_vert.size(); ++i) {
            int a = seg_vert[0], b = seg_vert[static_cast<int>(i)], c = seg_vert[i + 1];
            const Vec3& pa = mesh.vertices[static_cast<size_t>(a)];
            const Vec3& pb = mesh.vertices[static_cast<size_t>(b)];
            const Vec3& pc = mesh.vertices[static_cast<size_t>(c)];
            const Vec3 n = cross(pb - pa, pc - pa);
            if (norm(n) < 1e-12) continue;  // degenerate sliver
            // field gradient estimate from cell corner differences
            Vec3 grad{0, 0, 0};
            for (int i2 = 0; i2 < 8; ++i2) {
              const int bx = i2 & 1, by = (i2 >> 1) & 1, bz = (i2 >> 2) & 1;
              const double val = value(cx + bx, cy + by, cz + bz);
              grad.x += (bx ? val : -val) / (4.0 * tf.spacing.x);
              grad.y += (by ? val : -val) / (4.0 * tf.spacing.y);
              grad.z += (bz ? val : -val) / (4.0 * tf.spacing.z);
            }
            if (dot(n, grad) < 0) std::swap(b, c);
            mesh.triangles.push_back({a, b, c});
          }
        }
      }
  return mesh;
}

inline void write_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) fail("write_obj: cannot open " + path);
  f << "# fnvr mesh\n";
  for (const Vec3& v : mesh.vertices) f << "v " << v.x << " " << v.y << " " << v.z << "\n";
  for (const auto& t : mesh.triangles)
    f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  if (!f) fail("write_obj: write failed for " + path);
}

}  // namespace fnvr
