#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smog/geometry.hpp"
#include "smog/kdtree.hpp"
#include "smog/mesh.hpp"

namespace smog {

namespace detail {

inline double mean_min_sq(const PointCloud& x, const KdTree& z_tree) {
  double s = 0.0;
  for (const Vec3& p : x.points) {
    double d2 = 0.0;
    z_tree.nearest(p, &d2);
    s += d2;
  }
  return s / static_cast<double>(x.count());
}

inline double max_min_dist(const PointCloud& x, const KdTree& z_tree) {
  double worst = 0.0;
  for (const Vec3& p : x.points) {
    double d2 = 0.0;
    z_tree.nearest(p, &d2);
    worst = std::max(worst, d2);
  }
  return std::sqrt(worst);
}

}  // namespace detail

// Sum of the two directed mean squared nearest-neighbor distances.
inline double chamfer(const PointCloud& x, const PointCloud& z) {
  if (x.empty() || z.empty()) throw std::invalid_argument("chamfer: empty cloud");
  KdTree xt(x.points), zt(z.points);
  return detail::mean_min_sq(x, zt) + detail::mean_min_sq(z, xt);
}

// Symmetric, unsquared max-min distance.
inline double hausdorff(const PointCloud& x, const PointCloud& z) {
  if (x.empty() || z.empty()) throw std::invalid_argument("hausdorff: empty cloud");
  KdTree xt(x.points), zt(z.points);
  return std::max(detail::max_min_dist(x, zt), detail::max_min_dist(z, xt));
}

// Max (not sum) of the two directed terms.
inline double acd_metric(const PointCloud& x, const PointCloud& z) {
  if (x.empty() || z.empty()) throw std::invalid_argument("acd: empty cloud");
  KdTree xt(x.points), zt(z.points);
  return std::max(detail::mean_min_sq(x, zt), detail::mean_min_sq(z, xt));
}

// Mean/stddev of exact point-to-surface distance, prediction -> mesh only.
inline std::pair<double, double> p2f(const PointCloud& x, const TriangleMesh& mesh) {
  if (mesh.face_count() == 0) throw std::invalid_argument("p2f: empty mesh");
  if (x.empty()) throw std::invalid_argument("p2f: empty cloud");
  mesh.validate();
  std::vector<double> d(static_cast<size_t>(x.count()));
  for (int64_t i = 0; i < x.count(); ++i)
    d[static_cast<size_t>(i)] = point_mesh_distance(x.points[static_cast<size_t>(i)], mesh);
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d.size());
  return {mean, std::sqrt(var)};
}

// Values are stored in units of 1e-3 of the normalized frame, matching the
// CSV output.
struct MetricReport {
  std::string shape;
  double cd = 0.0;
  double hd = 0.0;
  double p2f_mean = 0.0;
  double p2f_std = 0.0;
  bool has_p2f = false;
};

inline MetricReport make_report(const std::string& shape, double cd_raw, double hd_raw) {
  MetricReport r;
  r.shape = shape;
  r.cd = cd_raw * 1e3;
  r.hd = hd_raw * 1e3;
  return r;
}

inline MetricReport make_report(const std::string& shape, double cd_raw, double hd_raw,
                                double p2f_mean_raw, double p2f_std_raw) {
  MetricReport r = make_report(shape, cd_raw, hd_raw);
  r.p2f_mean = p2f_mean_raw * 1e3;
  r.p2f_std = p2f_std_raw * 1e3;
  r.has_p2f = true;
  return r;
}

inline std::string metric_csv_header() { return "shape,cd,hd,p2f_mean,p2f_std"; }

inline std::string metric_csv_row(const MetricReport& r) {
  char buf[256];
  if (r.has_p2f)
    std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,%.3f,%.3f", r.shape.c_str(), r.cd, r.hd,
                  r.p2f_mean, r.p2f_std);
  else
    std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,,", r.shape.c_str(), r.cd, r.hd);
  return buf;
}

}  // namespace smog
