#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "smog/geometry.hpp"
#include "smog/rng.hpp"

namespace smog {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int64_t, 3>> faces;

  int64_t vertex_count() const { return static_cast<int64_t>(vertices.size()); }
  int64_t face_count() const { return static_cast<int64_t>(faces.size()); }

  void validate() const {
    const int64_t nv = vertex_count();
    for (const auto& f : faces) {
      for (int64_t v : f)
        if (v < 0 || v >= nv) throw std::invalid_argument("mesh face index out of range");
      if (f[0] == f[1] && f[1] == f[2])
        throw std::invalid_argument("mesh has a degenerate face");
    }
  }

  double face_area(int64_t fi) const {
    const auto& f = faces[static_cast<size_t>(fi)];
    const Vec3& a = vertices[static_cast<size_t>(f[0])];
    const Vec3& b = vertices[static_cast<size_t>(f[1])];
    const Vec3& c = vertices[static_cast<size_t>(f[2])];
    return 0.5 * norm(cross(b - a, c - a));
  }

  double total_area() const {
    double s = 0.0;
    for (int64_t i = 0; i < face_count(); ++i) s += face_area(i);
    return s;
  }
};

// Area-weighted uniform surface sampling. Face picks use the cumulative
// area table; positions use the standard sqrt barycentric warp. Fixed seed
// gives bit-identical output.
inline PointCloud sample_mesh(const TriangleMesh& mesh, int64_t n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_mesh: n must be >= 1");
  if (mesh.face_count() == 0) throw std::invalid_argument("sample_mesh: mesh has no faces");
  mesh.validate();

  std::vector<double> cum(static_cast<size_t>(mesh.face_count()));
  double total = 0.0;
  for (int64_t i = 0; i < mesh.face_count(); ++i) {
    total += mesh.face_area(i);
    cum[static_cast<size_t>(i)] = total;
  }
  if (total <= 0.0) throw std::invalid_argument("sample_mesh: zero total area");

  Rng rng(seed);
  PointCloud out;
  out.points.reserve(static_cast<size_t>(n));
  for (int64_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * total;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const size_t fi = std::min(static_cast<size_t>(it - cum.begin()), cum.size() - 1);
    const auto& f = mesh.faces[fi];
    const Vec3& a = mesh.vertices[static_cast<size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(f[2])];
    const double su = std::sqrt(rng.uniform());
    const double v = rng.uniform();
    const double w0 = 1.0 - su;
    const double w1 = su * (1.0 - v);
    const double w2 = su * v;
    out.points.push_back(a * w0 + b * w1 + c * w2);
  }
  return out;
}

// Exact point-to-triangle squared distance (region decomposition over the
// triangle's parameter plane).
inline double point_triangle_dist_sq(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;

  const double d1 = dot(ab, ap);
  const double d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return dot(ap, ap);  // vertex a

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp);
  const double d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return dot(bp, bp);  // vertex b

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {  // edge ab
    const double t = d1 / (d1 - d3);
    const Vec3 q = ap - ab * t;
    return dot(q, q);
  }

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp);
  const double d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return dot(cp, cp);  // vertex c

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {  // edge ac
    const double t = d2 / (d2 - d6);
    const Vec3 q = ap - ac * t;
    return dot(q, q);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {  // edge bc
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    const Vec3 q = bp - (c - b) * t;
    return dot(q, q);
  }

  // interior
  const double denom = va + vb + vc;
  const double v = vb / denom;
  const double w = vc / denom;
  const Vec3 q = ap - (ab * v + ac * w);
  return dot(q, q);
}

inline double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh) {
  if (mesh.face_count() == 0) throw std::invalid_argument("point_mesh_distance: empty mesh");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.faces) {
    best = std::min(best, point_triangle_dist_sq(p, mesh.vertices[static_cast<size_t>(f[0])],
                                                 mesh.vertices[static_cast<size_t>(f[1])],
                                                 mesh.vertices[static_cast<size_t>(f[2])]));
  }
  return std::sqrt(best);
}

}  // namespace smog
