#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "smog/geometry.hpp"
#include "smog/kdtree.hpp"
#include "smog/tensor.hpp"

namespace smog {

struct ProjectionConfig {
  double sharpness = 1e3;      // weight exponent alpha
  int64_t neighbor_count = 4;  // k nearest points used by the projection
};

struct LossWeights {
  double lambda1 = 0.01;  // coarse projection term
  double lambda2 = 0.01;  // refined projection term
  double lambda3 = 1.0;   // reconstruction ACD term
};

namespace detail {

template <class T>
std::vector<Vec3> tensor_rows_to_points(const Tensor<T>& t) {
  if (t.rank() != 2 || t.dim(1) != 3)
    throw std::invalid_argument("expected an Mx3 tensor, got " + shape_str(t.shape()));
  std::vector<Vec3> pts(static_cast<size_t>(t.dim(0)));
  for (int64_t i = 0; i < t.dim(0); ++i)
    pts[static_cast<size_t>(i)] = {static_cast<double>(t.value()[static_cast<size_t>(3 * i)]),
                                   static_cast<double>(t.value()[static_cast<size_t>(3 * i + 1)]),
                                   static_cast<double>(t.value()[static_cast<size_t>(3 * i + 2)])};
  return pts;
}

}  // namespace detail

// Soft projection of every row of x onto the cloud z (both Mx3 tensors on
// the tape). Neighbor indices come from the current values and act as
// constants of the forward pass; gradients flow through the weights and
// the gathered coordinates.
template <class T>
Tensor<T> project_points(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& z,
                         const ProjectionConfig& cfg) {
  const auto xp = detail::tensor_rows_to_points(x);
  const auto zp = detail::tensor_rows_to_points(z);
  if (zp.empty()) throw std::invalid_argument("project_points: empty target cloud");
  const int64_t n = static_cast<int64_t>(xp.size());
  const int64_t k = std::min<int64_t>(cfg.neighbor_count, static_cast<int64_t>(zp.size()));

  KdTree tree(zp);
  std::vector<int64_t> nbr_idx;
  nbr_idx.reserve(static_cast<size_t>(n * k));
  std::vector<int64_t> center_idx;
  center_idx.reserve(static_cast<size_t>(n * k));
  for (int64_t i = 0; i < n; ++i) {
    const auto nb = tree.knn(xp[static_cast<size_t>(i)], k);
    for (int64_t j : nb) {
      nbr_idx.push_back(j);
      center_idx.push_back(i);
    }
  }

  auto xg = tape.gather_rows(x, center_idx);                   // (n*k, 3)
  auto zg = tape.gather_rows(z, nbr_idx);                      // (n*k, 3)
  auto diff = tape.sub(xg, zg);
  auto d2 = tape.sum_axis(tape.mul(diff, diff), 1);            // (n*k)
  auto logits = tape.mul_scalar(tape.reshape(d2, {n, k}), static_cast<T>(-cfg.sharpness));
  auto w = tape.softmax(logits, 1);                            // (n, k), normalized weights
  auto weighted = tape.mul_bcast_last(tape.reshape(zg, {n, k, 3}), tape.reshape(w, {n, k, 1}));
  return tape.sum_axis(weighted, 1);                           // (n, 3)
}

// Mean squared deviation of x from its projection onto z.
template <class T>
Tensor<T> projection_distance(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& z,
                              const ProjectionConfig& cfg) {
  if (x.dim(0) == 0 || z.dim(0) == 0)
    throw std::invalid_argument("projection_distance: empty cloud");
  auto proj = project_points(tape, x, z, cfg);
  auto d = tape.sub(x, proj);
  return tape.mean_all(tape.sum_axis(tape.mul(d, d), 1));
}

// Bidirectional sum, symmetric in its arguments.
template <class T>
Tensor<T> projection_loss(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& z,
                          const ProjectionConfig& cfg) {
  return tape.add(projection_distance(tape, x, z, cfg), projection_distance(tape, z, x, cfg));
}

// Augmented Chamfer Distance: max of the two directed mean-min squared
// distances. Nearest indices are recomputed per forward pass.
template <class T>
Tensor<T> acd_loss(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& z) {
  const auto xp = detail::tensor_rows_to_points(x);
  const auto zp = detail::tensor_rows_to_points(z);
  if (xp.empty() || zp.empty()) throw std::invalid_argument("acd: empty cloud");

  auto directed = [&](const Tensor<T>& a, const std::vector<Vec3>& ap, const Tensor<T>& b,
                      const std::vector<Vec3>& bp) {
    KdTree tree(bp);
    std::vector<int64_t> idx(ap.size());
    for (size_t i = 0; i < ap.size(); ++i) idx[i] = tree.nearest(ap[i]);
    auto bg = tape.gather_rows(b, idx);
    auto d = tape.sub(a, bg);
    return tape.mean_all(tape.sum_axis(tape.mul(d, d), 1));
  };
  return tape.maximum(directed(x, xp, z, zp), directed(z, zp, x, xp));
}

// Training composite: lambda1 * proj(coarse4, gt4) + lambda2 *
// proj(refined4, gt4) + lambda3 * acd(recon, input).
template <class T>
struct TotalLoss {
  Tensor<T> total;
  Tensor<T> proj_coarse;
  Tensor<T> proj_refined;
  Tensor<T> acd;
};

template <class T>
TotalLoss<T> total_loss(Tape<T>& tape, const Tensor<T>& coarse4, const Tensor<T>& refined4,
                        const Tensor<T>& gt4, const Tensor<T>& recon, const Tensor<T>& input,
                        const LossWeights& w, const ProjectionConfig& cfg) {
  for (const Tensor<T>* t : {&coarse4, &refined4, &gt4, &recon, &input})
    if (t->dim(0) == 0) throw std::invalid_argument("total_loss: empty cloud");
  TotalLoss<T> out;
  out.proj_coarse = projection_loss(tape, coarse4, gt4, cfg);
  out.proj_refined = projection_loss(tape, refined4, gt4, cfg);
  out.acd = acd_loss(tape, recon, input);
  out.total = tape.add(tape.add(tape.mul_scalar(out.proj_coarse, static_cast<T>(w.lambda1)),
                                tape.mul_scalar(out.proj_refined, static_cast<T>(w.lambda2))),
                       tape.mul_scalar(out.acd, static_cast<T>(w.lambda3)));
  return out;
}

// Plain (non-tape) soft projection of one point, same math as
// project_points.
inline Vec3 project_point(const Vec3& x, const PointCloud& z, const ProjectionConfig& cfg) {
  if (z.empty()) throw std::invalid_argument("project_point: empty cloud");
  const int64_t k = std::min<int64_t>(cfg.neighbor_count, z.count());
  KdTree tree(z.points);
  const auto nb = tree.knn(x, k);
  double dmin = std::numeric_limits<double>::infinity();
  for (int64_t j : nb) dmin = std::min(dmin, dist_sq(x, z.points[static_cast<size_t>(j)]));
  double wsum = 0.0;
  Vec3 acc{0, 0, 0};
  for (int64_t j : nb) {
    // common exp(alpha*dmin) factor cancels in the normalized combination
    const double w = std::exp(-cfg.sharpness * (dist_sq(x, z.points[static_cast<size_t>(j)]) - dmin));
    wsum += w;
    acc = acc + z.points[static_cast<size_t>(j)] * w;
  }
  return acc * (1.0 / wsum);
}

inline double projection_distance(const PointCloud& x, const PointCloud& z,
                                  const ProjectionConfig& cfg) {
  if (x.empty() || z.empty()) throw std::invalid_argument("projection_distance: empty cloud");
  double s = 0.0;
  for (const Vec3& p : x.points) {
    const Vec3 pr = project_point(p, z, cfg);
    s += dist_sq(p, pr);
  }
  return s / static_cast<double>(x.count());
}

inline double projection_loss(const PointCloud& x, const PointCloud& z,
                              const ProjectionConfig& cfg) {
  return projection_distance(x, z, cfg) + projection_distance(z, x, cfg);
}

}  // namespace smog
