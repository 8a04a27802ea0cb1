#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>

#include "fnvr/dataset.hpp"
#include "fnvr/geometry.hpp"

namespace fnvr {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> object_id;  // optional, parallel to points

  void validate() const {
    for (const Vec3& p : points)
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        fail("point cloud: non-finite coordinates");
  }
};

struct Correspondence {
  int src = 0, dst = 0;
  double weight = 1.0;
};

struct AlignResult {
  Pose pose;   // dst approx pose * src
  double rms = 0;
};

namespace detail_track {

inline Quat quat_from_matrix(const Eigen::Matrix3d& R) {
  Quat q;
  const double tr = R.trace();
  if (tr > 0) {
    const double s = std::sqrt(tr + 1.0) * 2;
    q.w = 0.25 * s;
    q.x = (R(2, 1) - R(1, 2)) / s;
    q.y = (R(0, 2) - R(2, 0)) / s;
    q.z = (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    const double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
    q.w = (R(2, 1) - R(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (R(0, 1) + R(1, 0)) / s;
    q.z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    const double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
    q.w = (R(0, 2) - R(2, 0)) / s;
    q.x = (R(0, 1) + R(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (R(1, 2) + R(2, 1)) / s;
  } else {
    const double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
    q.w = (R(1, 0) - R(0, 1)) / s;
    q.x = (R(0, 2) + R(2, 0)) / s;
    q.y = (R(1, 2) + R(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q.normalized_canonical();
}

}  // namespace detail_track

// Weighted least-squares rigid alignment (no scale): returns the pose
// minimizing sum w |R src + t - dst|^2, with det(R) = +1.
inline AlignResult umeyama_align(const PointCloud& src, const PointCloud& dst,
                                 const std::vector<Correspondence>& corr) {
  if (corr.size() < 3) fail("umeyama_align: need at least 3 correspondences");
  src.validate();
  dst.validate();
  double wsum = 0;
  Vec3 cs{0, 0, 0}, cd{0, 0, 0};
  for (const auto& c : corr) {
    if (c.weight < 0) fail("umeyama_align: negative weight");
    cs = cs + c.weight * src.points[static_cast<size_t>(c.src)];
    cd = cd + c.weight * dst.points[static_cast<size_t>(c.dst)];
    wsum += c.weight;
  }
  if (wsum <= 0) fail("umeyama_align: zero total weight");
  cs = cs / wsum;
  cd = cd / wsum;

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (const auto& c : corr) {
    const Vec3 a = src.points[static_cast<size_t>(c.src)] - cs;
    const Vec3 b = dst.points[static_cast<size_t>(c.dst)] - cd;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) H(i, j) += c.weight * a[i] * b[j];
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (sv(1) < 1e-12 * std::max(1.0, sv(0)))
    fail("umeyama_align: rank-deficient configuration (collinear or coincident points)");
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) D(2, 2) = -1;
  const Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();

  AlignResult out;
  out.pose.q = detail_track::quat_from_matrix(R);
  out.pose.t = cd - out.pose.q.rotate(cs);
  double se = 0;
  for (const auto& c : corr) {
    const Vec3 e = pose_apply(out.pose, src.points[static_cast<size_t>(c.src)]) -
                   dst.points[static_cast<size_t>(c.dst)];
    se += c.weight * dot(e, e);
  }
  out.rms = std::sqrt(se / wsum);
  return out;
}

namespace detail_track {

// uniform-grid nearest neighbor over the dst cloud (clouds at desk scale)
struct GridHash {
  double cell = 0.1;
  const std::vector<Vec3>* pts = nullptr;
  std::unordered_map<uint64_t, std::vector<int>> cells;

  static uint64_t key(int64_t x, int64_t y, int64_t z) {
    return mix_seed(static_cast<uint64_t>(x) * 73856093ull, static_cast<uint64_t>(y) * 19349663ull,
                    static_cast<uint64_t>(z) * 83492791ull);
  }
  void build(const std::vector<Vec3>& points, double cell_size) {
    cell = cell_size;
    pts = &points;
    cells.clear();
    for (size_t i = 0; i < points.size(); ++i)
      cells[key(static_cast<int64_t>(std::floor(points[i].x / cell)),
                static_cast<int64_t>(std::floor(points[i].y / cell)),
                static_cast<int64_t>(std::floor(points[i].z / cell)))]
          .push_back(static_cast<int>(i));
  }
  int nearest(Vec3 p, double max_dist) const {
    const int64_t cx = static_cast<int64_t>(std::floor(p.x / cell));
    const int64_t cy = static_cast<int64_t>(std::floor(p.y / cell));
    const int64_t cz = static_cast<int64_t>(std::floor(p.z / cell));
    int best = -1;
    double best_d2 = max_dist * max_dist;
    for (int64_t dz = -1; dz <= 1; ++dz)
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          auto it = cells.find(key(cx + dx, cy + dy, cz + dz));
          if (it == cells.end()) continue;
          for (int i : it->second) {
            const Vec3 d = (*pts)[static_cast<size_t>(i)] - p;
            const double d2 = dot(d, d);
            if (d2 <= best_d2) {
              best_d2 = d2;
              best = i;
            }
          }
        }
    return best;
  }
};

}  // namespace detail_track

struct IcpResult {
  Pose pose;
  double rms = 0;
  int iterations = 0;
  std::vector<double> residual_history;  // per accepted iteration
};

// Iterated closest point: alternates nearest-neighbor pairing (gated by the
// max pair distance) with closed-form rigid alignment. Stops when the pose
// update drops below 1e-6, the iteration cap is reached, or the residual
// stops improving; returns the best pose by residual.
inline IcpResult icp(const PointCloud& src, const PointCloud& dst, const Pose& init, int max_iters,
                     double max_pair_dist) {
  if (src.points.empty() || dst.points.empty()) fail("icp: empty cloud");
  src.validate();
  dst.validate();
  detail_track::GridHash hash;
  hash.build(dst.points, std::max(1e-6, max_pair_dist));

  IcpResult out;
  out.pose = init;
  double best_rms = 1e300;
  Pose best_pose = init;
  for (int iter = 1; iter <= max_iters; ++iter) {
    PointCloud moved;
    moved.points.reserve(src.points.size());
    for (const Vec3& p : src.points) moved.points.push_back(pose_apply(out.pose, p));
    std::vector<Correspondence> corr;
    double se = 0;
    for (size_t i = 0; i < moved.points.size(); ++i) {
      const int j = hash.nearest(moved.points[i], max_pair_dist);
      if (j < 0) continue;
      corr.push_back({static_cast<int>(i), j, 1.0});
      const Vec3 e = moved.points[i] - dst.points[static_cast<size_t>(j)];
      se += dot(e, e);
    }
    if (corr.size() < 3) fail("icp: no pairs within the maximum distance");
    const double rms = std::sqrt(se / static_cast<double>(corr.size()));
    out.iterations = iter;
    if (rms < best_rms) {
      best_rms = rms;
      best_pose = out.pose;
      out.residual_history.push_back(rms);
    } else if (rms > best_rms + 1e-12) {
      break;  // residual stopped improving
    }
    const AlignResult step = umeyama_align(moved, dst, corr);
    const Pose updated = pose_compose(step.pose, out.pose);
    const double dq = std::abs(step.pose.q.w) > 1 ? 0 : 2 * std::acos(std::min(1.0, std::abs(step.pose.q.w)));
    const double dt = norm(step.pose.t);
    out.pose = updated;
    if (dq < 1e-6 && dt < 1e-6) break;
  }
  // final residual for the returned pose
  {
    double se = 0;
    int n = 0;
    for (const Vec3& p : src.points) {
      const Vec3 m = pose_apply(best_pose, p);
      const int j = hash.nearest(m, max_pair_dist);
      if (j < 0) continue;
      const Vec3 e = m - dst.points[static_cast<size_t>(j)];
      se += dot(e, e);
      ++n;
    }
    out.rms = n ? std::sqrt(se / n) : best_rms;
  }
  out.pose = best_pose;
  return out;
}

// one block of a correspondence file: pixel pairs for one object/frame pair
struct CorrespondencePairs {
  int object_id = 0;
  int src_frame = 0, dst_frame = 0;
  std::vector<std::array<double, 5>> rows;  // src_px src_py dst_px dst_py weight
};

inline std::vector<CorrespondencePairs> read_correspondences(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("correspondences: cannot open " + path);
  std::vector<CorrespondencePairs> out;
  std::string tag;
  while (f >> tag) {
    if (tag != "object") fail("correspondences: bad header in " + path);
    CorrespondencePairs block;
    size_t count = 0;
    if (!(f >> block.object_id >> block.src_frame >> block.dst_frame >> count))
      fail("correspondences: bad header fields in " + path);
    block.rows.resize(count);
    for (size_t i = 0; i < count; ++i) {
      auto& r = block.rows[i];
      if (!(f >> r[0] >> r[1] >> r[2] >> r[3] >> r[4]))
        fail("correspondences: truncated pairs in " + path);
      if (r[4] < 0) fail("correspondences: negative weight in " + path);
    }
    out.push_back(std::move(block));
  }
  return out;
}

struct TrackingResult {
  std::vector<Pose> camera;                  // camera-to-world, frame 0 = identity
  std::map<int, std::vector<Pose>> objects;  // world trajectories, frame 0 = identity
  std::map<int, std::vector<uint8_t>> carried;  // 1 where a pose was carried over
};

namespace detail_track {

// unprojects an integer pixel via its own depth sample
inline bool unproject_px(const RGBDSequence& seq, int frame, int x, int y, Vec3& out) {
  const auto& intr = seq.manifest.intrinsics;
  if (x < 0 || y < 0 || x >= intr.width || y >= intr.height) return false;
  const float z = seq.depth[static_cast<size_t>(frame)].at(x, y, 0);
  if (z <= 0) return false;
  out = Vec3{(x + 0.5 - intr.cx) / intr.fx, (y + 0.5 - intr.cy) / intr.fy, 1.0} * static_cast<double>(z);
  return true;
}

// Unprojects a subpixel location. Integer pixel centers read their own depth
// sample; true subpixel positions intersect the ray with a local plane fitted
// to the 3x3 unprojected neighborhood. Depth discontinuities and strongly
// curved patches fail the fit-residual gate and are rejected, which keeps
// curvature bias out of the alignment.
inline bool unproject_subpixel(const RGBDSequence& seq, int frame, double px, double py, Vec3& out) {
  const auto& intr = seq.manifest.intrinsics;
  const int x0 = static_cast<int>(std::lround(px));
  const int y0 = static_cast<int>(std::lround(py));
  if (std::abs(px - x0) < 1e-9 && std::abs(py - y0) < 1e-9)
    return unproject_px(seq, frame, x0, y0, out);
  std::vector<Vec3> nbrs;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      Vec3 p;
      if (unproject_px(seq, frame, x0 + dx, y0 + dy, p)) nbrs.push_back(p);
    }
  if (nbrs.size() < 6) return false;
  Vec3 c{0, 0, 0};
  for (const Vec3& p : nbrs) c = c + p;
  c = c / static_cast<double>(nbrs.size());
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  for (const Vec3& p : nbrs) {
    const Vec3 d = p - c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) M(i, j) += d[i] * d[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(M);
  const Eigen::Vector3d nvec = eig.eigenvectors().col(0);
  const Vec3 n{nvec(0), nvec(1), nvec(2)};
  const double res2 = eig.eigenvalues()(0) / static_cast<double>(nbrs.size());
  if (res2 > 3e-7) return false;
  const Vec3 dir{(px + 0.5 - intr.cx) / intr.fx, (py + 0.5 - intr.cy) / intr.fy, 1.0};
  const double denom = dot(n, dir);
  if (std::abs(denom) < 1e-9) return false;
  const double s = dot(n, c) / denom;
  if (s <= 0) return false;
  out = dir * s;
  return true;
}

}  // namespace detail_track

// Initialization: chains frame-to-frame rigid alignments from provided pixel
// correspondences. The camera path comes from background (object 0)
// alignments; object world trajectories compose the per-pair object
// alignments with the camera motion. Frame 0 defines every canonical pose
// (identity). Optional ICP refinement re-aligns consecutive masked clouds
// starting from the correspondence-seeded estimate.
inline TrackingResult build_trajectories(const RGBDSequence& seq,
                                         const std::vector<std::vector<CorrespondencePairs>>& corr,
                                         bool icp_refine = false, double max_pair_dist = 0.1) {
  const int T = seq.manifest.frames;
  if (static_cast<int>(corr.size()) != T - 1)
    fail("build_trajectories: need correspondences for every consecutive frame pair");

  TrackingResult out;
  out.camera.assign(static_cast<size_t>(T), Pose::identity());
  for (const auto& mo : seq.manifest.objects) {
    out.objects[mo.id].assign(static_cast<size_t>(T), Pose::identity());
    out.carried[mo.id].assign(static_cast<size_t>(T), 0);
  }

  // per-pair camera-frame alignments A = C(t+1)^-1 C(t) per object
  for (int t = 0; t + 1 < T; ++t) {
    std::map<int, AlignResult> pair_align;
    for (const CorrespondencePairs& block : corr[static_cast<size_t>(t)]) {
      if (block.src_frame != t || block.dst_frame != t + 1)
        fail("build_trajectories: correspondence block frames do not match pair " + std::to_string(t));
      PointCloud src, dst;
      std::vector<Correspondence> pairs;
      for (const auto& r : block.rows) {
        const int sx = static_cast<int>(std::lround(r[0]));
        const int sy = static_cast<int>(std::lround(r[1]));
        const int dx = static_cast<int>(std::lround(r[2]));
        const int dy = static_cast<int>(std::lround(r[3]));
        // masks gate both endpoints: occluded or mislabeled matches drop out
        const auto& intr = seq.manifest.intrinsics;
        if (dx < 0 || dy < 0 || dx >= intr.width || dy >= intr.height) continue;
        if (seq.mask[static_cast<size_t>(t)].at(std::clamp(sx, 0, intr.width - 1),
                                                std::clamp(sy, 0, intr.height - 1), 0) !=
            block.object_id + 1)
          continue;
        if (seq.mask[static_cast<size_t>(t + 1)].at(dx, dy, 0) != block.object_id + 1) continue;
        Vec3 ps, pd;
        if (!detail_track::unproject_px(seq, t, sx, sy, ps)) continue;
        if (!detail_track::unproject_subpixel(seq, t + 1, r[2], r[3], pd)) continue;
        pairs.push_back({static_cast<int>(src.points.size()), static_cast<int>(dst.points.size()),
                         r[4]});
        src.points.push_back(ps);
        dst.points.push_back(pd);
      }
      if (pairs.size() < 3) continue;
      AlignResult align = umeyama_align(src, dst, pairs);
      if (icp_refine) {
        // full masked clouds for this object at both frames
        PointCloud full_src, full_dst;
        const auto& intr = seq.manifest.intrinsics;
        for (int y = 0; y < intr.height; ++y)
          for (int x = 0; x < intr.width; ++x) {
            Vec3 p;
            if (seq.mask[static_cast<size_t>(t)].at(x, y, 0) == block.object_id + 1 &&
                detail_track::unproject_px(seq, t, x, y, p))
              full_src.points.push_back(p);
            if (seq.mask[static_cast<size_t>(t + 1)].at(x, y, 0) == block.object_id + 1 &&
                detail_track::unproject_px(seq, t + 1, x, y, p))
              full_dst.points.push_back(p);
          }
        if (full_src.points.size() >= 3 && full_dst.points.size() >= 3) {
          const IcpResult refined = icp(full_src, full_dst, align.pose, 30, max_pair_dist);
          align.pose = refined.pose;
          align.rms = refined.rms;
        }
      }
      pair_align[block.object_id] = align;
    }

    // camera from the background alignment
    if (auto it = pair_align.find(0); it != pair_align.end()) {
      out.camera[static_cast<size_t>(t + 1)] =
          pose_compose(out.camera[static_cast<size_t>(t)], pose_inverse(it->second.pose));
    } else {
      out.camera[static_cast<size_t>(t + 1)] = out.camera[static_cast<size_t>(t)];
    }

    // object world trajectories composed with camera motion
    for (auto& [id, traj] : out.objects) {
      if (id == 0) continue;  // background is the world anchor
      auto it = pair_align.find(id);
      if (it == pair_align.end()) {
        traj[static_cast<size_t>(t + 1)] = traj[static_cast<size_t>(t)];
        out.carried[id][static_cast<size_t>(t + 1)] = 1;
        continue;
      }
      const Pose rel = pose_compose(
          out.camera[static_cast<size_t>(t + 1)],
          pose_compose(it->second.pose, pose_inverse(out.camera[static_cast<size_t>(t)])));
      traj[static_cast<size_t>(t + 1)] = pose_compose(rel, traj[static_cast<size_t>(t)]);
    }
  }
  return out;
}

// loads the per-pair correspondence files referenced by a sequence
inline std::vector<std::vector<CorrespondencePairs>> load_sequence_correspondences(
    const RGBDSequence& seq) {
  std::vector<std::vector<CorrespondencePairs>> out;
  for (int t = 0; t + 1 < seq.manifest.frames; ++t) {
    char name[64];
    std::snprintf(name, sizeof(name), "/gt/corr/%06d_%06d.txt", t, t + 1);
    out.push_back(read_correspondences(seq.dir + name));
  }
  return out;
}

inline void save_tracks(const std::string& path, const TrackingResult& tracks) {
  nlohmann::json j;
  nlohmann::json cam = nlohmann::json::array();
  for (const Pose& p : tracks.camera) cam.push_back(detail_ds::pose_json(p));
  j["camera"] = cam;
  nlohmann::json objs = nlohmann::json::object();
  for (const auto& [id, traj] : tracks.objects) {
    nlohmann::json tr = nlohmann::json::array();
    for (const Pose& p : traj) tr.push_back(detail_ds::pose_json(p));
    objs[std::to_string(id)] = tr;
  }
  j["objects"] = objs;
  std::ofstream f(path);
  if (!f) fail("save_tracks: cannot open " + path);
  f << j.dump(1) << "\n";
}

inline TrackingResult load_tracks(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("load_tracks: cannot open " + path);
  nlohmann::json j;
  f >> j;
  TrackingResult out;
  for (const auto& pj : j.at("camera")) out.camera.push_back(detail_ds::pose_from_json(pj));
  for (auto it = j.at("objects").begin(); it != j.at("objects").end(); ++it) {
    std::vector<Pose> poses;
    for (const auto& pj : it.value()) poses.push_back(detail_ds::pose_from_json(pj));
    out.objects[std::stoi(it.key())] = std::move(poses);
  }
  return out;
}

}  // namespace fnvr
