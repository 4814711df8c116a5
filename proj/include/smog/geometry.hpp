#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "smog/kdtree.hpp"

namespace smog {

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline bool finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

struct PointCloud {
  std::vector<Vec3> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  int64_t count() const { return static_cast<int64_t>(points.size()); }
  bool empty() const { return points.empty(); }

  void check_finite() const {
    for (const Vec3& p : points)
      if (!finite(p)) throw std::invalid_argument("point cloud has non-finite coordinates");
  }
};

// Centroid shift + uniform scale taking a cloud to the unit ball and back.
struct NormalizationTransform {
  Vec3 centroid{0, 0, 0};
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const {
    return {(p[0] - centroid[0]) / scale, (p[1] - centroid[1]) / scale,
            (p[2] - centroid[2]) / scale};
  }
  Vec3 invert(const Vec3& p) const {
    return {p[0] * scale + centroid[0], p[1] * scale + centroid[1], p[2] * scale + centroid[2]};
  }
};

struct Patch {
  PointCloud cloud;
  int64_t seed_index = 0;             // index into the parent cloud
  std::vector<int64_t> indices;       // parent index of each patch point
};

// k nearest neighbors of `query`, ascending by distance, ties broken by
// lower index.
inline std::vector<int64_t> knn(const PointCloud& points, const Vec3& query, int64_t k) {
  if (k <= 0) throw std::invalid_argument("empty query");
  if (k > points.count()) throw std::invalid_argument("insufficient points");
  points.check_finite();
  if (!finite(query)) throw std::invalid_argument("query has non-finite coordinates");
  KdTree tree(points.points);
  return tree.knn(query, k);
}

// Neighbor indices for every point against the same cloud, flattened row
// major: entry i*k+t is the t-th neighbor of point i.
inline std::vector<int64_t> knn_all(const std::vector<Vec3>& pts, int64_t k) {
  if (k <= 0) throw std::invalid_argument("empty query");
  if (k > static_cast<int64_t>(pts.size())) throw std::invalid_argument("insufficient points");
  KdTree tree(pts);
  std::vector<int64_t> out;
  out.reserve(pts.size() * static_cast<size_t>(k));
  for (const Vec3& p : pts) {
    const auto nb = tree.knn(p, k);
    out.insert(out.end(), nb.begin(), nb.end());
  }
  return out;
}

// Greedy farthest point sampling. Each pick maximizes the minimum distance
// to the already-selected set; ties go to the lower index.
inline std::vector<int64_t> farthest_point_sample(const PointCloud& points, int64_t m,
                                                  int64_t start_index = 0) {
  const int64_t n = points.count();
  if (m < 1 || m > n) throw std::invalid_argument("farthest_point_sample: m out of range");
  if (start_index < 0 || start_index >= n)
    throw std::invalid_argument("farthest_point_sample: start index out of range");
  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(m));
  std::vector<double> min_d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  int64_t cur = start_index;
  picked.push_back(cur);
  for (int64_t step = 1; step < m; ++step) {
    const Vec3& last = points.points[static_cast<size_t>(cur)];
    int64_t best = -1;
    double best_d2 = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      double& d2 = min_d2[static_cast<size_t>(i)];
      d2 = std::min(d2, dist_sq(points.points[static_cast<size_t>(i)], last));
      if (d2 > best_d2 && d2 > 0.0) {
        // skip already-picked points (their min distance is 0)
        best_d2 = d2;
        best = i;
      }
    }
    if (best < 0) {
      // all remaining candidates coincide with picked points; take the
      // lowest unpicked index for determinism
      std::vector<bool> in(static_cast<size_t>(n), false);
      for (int64_t p : picked) in[static_cast<size_t>(p)] = true;
      for (int64_t i = 0; i < n; ++i)
        if (!in[static_cast<size_t>(i)]) {
          best = i;
          break;
        }
    }
    picked.push_back(best);
    cur = best;
  }
  return picked;
}

// Center at the centroid and scale so the farthest point sits on the unit
// sphere. Degenerate (single-position) clouds keep scale 1.
inline std::pair<PointCloud, NormalizationTransform> normalize(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("normalize: empty cloud");
  cloud.check_finite();
  NormalizationTransform t;
  Vec3 c{0, 0, 0};
  for (const Vec3& p : cloud.points) c = c + p;
  t.centroid = c * (1.0 / static_cast<double>(cloud.count()));
  double max_norm = 0.0;
  for (const Vec3& p : cloud.points) max_norm = std::max(max_norm, norm(p - t.centroid));
  t.scale = max_norm > 0.0 ? max_norm : 1.0;
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(t.apply(p));
  return {std::move(out), t};
}

inline PointCloud denormalize(const PointCloud& cloud, const NormalizationTransform& t) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(t.invert(p));
  return out;
}

namespace detail {

// Undirected k-NN graph (k excludes the self edge).
inline std::vector<std::vector<std::pair<int64_t, double>>> knn_graph(
    const std::vector<Vec3>& pts, int64_t k) {
  const int64_t n = static_cast<int64_t>(pts.size());
  const int64_t kk = std::min<int64_t>(k + 1, n);  // +1: self comes back first
  const auto idx = knn_all(pts, kk);
  std::vector<std::vector<std::pair<int64_t, double>>> adj(static_cast<size_t>(n));
  auto add_edge = [&](int64_t a, int64_t b) {
    const double d = std::sqrt(dist_sq(pts[static_cast<size_t>(a)], pts[static_cast<size_t>(b)]));
    adj[static_cast<size_t>(a)].emplace_back(b, d);
    adj[static_cast<size_t>(b)].emplace_back(a, d);
  };
  for (int64_t i = 0; i < n; ++i)
    for (int64_t t = 0; t < kk; ++t) {
      const int64_t j = idx[static_cast<size_t>(i * kk + t)];
      if (j != i) add_edge(i, j);
    }
  return adj;
}

inline std::vector<double> dijkstra(
    const std::vector<std::vector<std::pair<int64_t, double>>>& adj, int64_t src) {
  const int64_t n = static_cast<int64_t>(adj.size());
  std::vector<double> dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  dist[static_cast<size_t>(src)] = 0.0;
  using Item = std::pair<double, int64_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  pq.emplace(0.0, src);
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[static_cast<size_t>(u)]) continue;
    for (const auto& [v, w] : adj[static_cast<size_t>(u)]) {
      const double nd = d + w;
      if (nd < dist[static_cast<size_t>(v)]) {
        dist[static_cast<size_t>(v)] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  return dist;
}

}  // namespace detail

// Overlapping patches of `patch_size` points geodesically close to FPS
// seeds (Dijkstra over a k=16 Euclidean kNN graph). When a seed's graph
// component is smaller than the patch, the remainder is filled with
// Euclidean nearest points. Every input point is covered by at least one
// patch.
inline std::vector<Patch> extract_patches(const PointCloud& cloud, int64_t patch_size,
                                          int64_t target_coverage = 1) {
  const int64_t n = cloud.count();
  if (patch_size < 1 || patch_size > n)
    throw std::invalid_argument("extract_patches: patch size exceeds cloud");
  if (target_coverage < 1) throw std::invalid_argument("extract_patches: coverage must be >= 1");

  const int64_t num_seeds =
      std::max<int64_t>(1, (target_coverage * n + patch_size - 1) / patch_size);
  std::vector<int64_t> seeds = farthest_point_sample(cloud, std::min(num_seeds, n), 0);

  const auto adj = detail::knn_graph(cloud.points, 16);
  KdTree tree(cloud.points);

  std::vector<Patch> patches;
  std::vector<bool> covered(static_cast<size_t>(n), false);

  auto build_patch = [&](int64_t seed) {
    const auto geo = detail::dijkstra(adj, seed);
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      const double da = geo[static_cast<size_t>(a)];
      const double db = geo[static_cast<size_t>(b)];
      return da != db ? da < db : a < b;
    });
    std::vector<int64_t> members;
    members.reserve(static_cast<size_t>(patch_size));
    for (int64_t i = 0; i < n && static_cast<int64_t>(members.size()) < patch_size; ++i) {
      if (std::isfinite(geo[static_cast<size_t>(order[static_cast<size_t>(i)])]))
        members.push_back(order[static_cast<size_t>(i)]);
    }
    if (static_cast<int64_t>(members.size()) < patch_size) {
      // component too small: top up with Euclidean neighbors of the seed
      std::vector<bool> in(static_cast<size_t>(n), false);
      for (int64_t m : members) in[static_cast<size_t>(m)] = true;
      const auto near = tree.knn(cloud.points[static_cast<size_t>(seed)], n);
      for (int64_t j : near) {
        if (static_cast<int64_t>(members.size()) >= patch_size) break;
        if (!in[static_cast<size_t>(j)]) members.push_back(j);
      }
    }
    Patch p;
    p.seed_index = seed;
    p.indices = members;
    p.cloud.points.reserve(members.size());
    for (int64_t m : members) {
      p.cloud.points.push_back(cloud.points[static_cast<size_t>(m)]);
      covered[static_cast<size_t>(m)] = true;
    }
    patches.push_back(std::move(p));
  };

  for (int64_t s : seeds) build_patch(s);
  for (int64_t i = 0; i < n; ++i)
    if (!covered[static_cast<size_t>(i)]) build_patch(i);
  return patches;
}

// De-normalize per-patch outputs, concatenate, and FPS down to the target
// count.
inline PointCloud merge_patches(const std::vector<PointCloud>& upsampled,
                                const std::vector<NormalizationTransform>& transforms,
                                int64_t target_count) {
  if (upsampled.empty()) throw std::invalid_argument("merge_patches: empty patch list");
  if (upsampled.size() != transforms.size())
    throw std::invalid_argument("merge_patches: patch/transform count mismatch");
  PointCloud merged;
  for (size_t i = 0; i < upsampled.size(); ++i)
    for (const Vec3& p : upsampled[i].points) merged.points.push_back(transforms[i].invert(p));
  if (target_count > merged.count()) throw std::invalid_argument("insufficient points");
  if (target_count == merged.count()) return merged;
  const auto keep = farthest_point_sample(merged, target_count, 0);
  PointCloud out;
  out.points.reserve(keep.size());
  for (int64_t i : keep) out.points.push_back(merged.points[static_cast<size_t>(i)]);
  return out;
}

}  // namespace smog
