#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "smog/geometry.hpp"
#include "smog/rng.hpp"

namespace smog {

using Mat2 = std::array<std::array<double, 2>, 2>;

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kCholeskyJitter = 1e-9;

struct SphericalCoord {
  double theta = 0.0;  // azimuth in [0, 2*pi)
  double phi = 0.0;    // elevation in [0, pi]
};

// Mixture on the unit sphere: Cartesian means, covariances in (theta, phi)
// coordinates, equal weights when produced by the network head.
struct SmogParams {
  std::vector<Vec3> means;
  std::vector<Mat2> covariances;
  std::vector<double> weights;

  int64_t count() const { return static_cast<int64_t>(means.size()); }

  void validate() const;
};

inline double softplus_value(double x) {
  const double ax = std::abs(x);
  return std::max(x, 0.0) + std::log1p(std::exp(-ax));
}

// Closed-form eigenvalues of a symmetric 2x2 matrix, largest first.
inline std::pair<double, double> eigenvalues_2x2(const Mat2& m) {
  if (std::abs(m[0][1] - m[1][0]) >= 1e-9)
    throw std::invalid_argument("eigenvalues_2x2: matrix is not symmetric");
  const double a = m[0][0], b = m[0][1], c = m[1][1];
  const double disc = (a + c) * (a + c) - 4.0 * (a * c - b * b);
  const double root = std::sqrt(std::max(disc, 0.0));
  return {(a + c + root) / 2.0, (a + c - root) / 2.0};
}

// Covariance from raw network outputs: softplus-floored variances and the
// off-diagonal clamped into [-sigma_t*sigma_p, +sigma_t*sigma_p], which is
// exactly the PSD acceptance region.
inline Mat2 build_covariance_clamped(double raw_var_theta, double raw_var_phi, double raw_cov) {
  const double vt = softplus_value(raw_var_theta) + kVarianceFloor;
  const double vp = softplus_value(raw_var_phi) + kVarianceFloor;
  const double bound = std::sqrt(vt * vp);
  const double cov = std::clamp(raw_cov, -bound, bound);
  return {{{vt, cov}, {cov, vp}}};
}

// Alternative construction: R(angle) * diag(d1, d2) * R(angle)^T with
// softplus-floored diagonal, PSD by construction.
inline Mat2 build_covariance_rotdiag(double angle, double raw_d1, double raw_d2) {
  const double d1 = softplus_value(raw_d1) + kVarianceFloor;
  const double d2 = softplus_value(raw_d2) + kVarianceFloor;
  const double cs = std::cos(angle), sn = std::sin(angle);
  // R D R^T
  const double m00 = cs * cs * d1 + sn * sn * d2;
  const double m11 = sn * sn * d1 + cs * cs * d2;
  const double m01 = cs * sn * (d1 - d2);
  return {{{m00, m01}, {m01, m11}}};
}

// Convention: v = (sin(phi)cos(theta), sin(phi)sin(theta), cos(phi)).
inline Vec3 sph_to_cart(const SphericalCoord& s) {
  const double sp = std::sin(s.phi);
  return {sp * std::cos(s.theta), sp * std::sin(s.theta), std::cos(s.phi)};
}

inline SphericalCoord cart_to_sph(const Vec3& v) {
  const double n = norm(v);
  if (std::abs(n - 1.0) > 1e-6)
    throw std::invalid_argument("cart_to_sph: vector is not unit norm");
  SphericalCoord s;
  const double z = std::clamp(v[2], -1.0, 1.0);
  s.phi = std::acos(z);
  if (std::abs(v[2]) > 1.0 - 1e-12) {
    s.theta = 0.0;  // azimuth undefined at the poles
    return s;
  }
  s.theta = std::atan2(v[1], v[0]);
  if (s.theta < 0) s.theta += 2.0 * std::numbers::pi;
  if (s.theta >= 2.0 * std::numbers::pi) s.theta = 0.0;
  return s;
}

inline void SmogParams::validate() const {
  if (means.size() != covariances.size() || means.size() != weights.size())
    throw std::invalid_argument("SmogParams: field lengths disagree");
  if (means.empty()) throw std::invalid_argument("SmogParams: empty mixture");
  double wsum = 0.0;
  for (size_t i = 0; i < means.size(); ++i) {
    if (std::abs(norm(means[i]) - 1.0) > 1e-6)
      throw std::invalid_argument("SmogParams: mean " + std::to_string(i) + " is not unit norm");
    const auto [l1, l2] = eigenvalues_2x2(covariances[i]);
    (void)l1;
    if (l2 < -1e-9)
      throw std::invalid_argument("SmogParams: covariance " + std::to_string(i) +
                                  " is not positive semi-definite");
    wsum += weights[i];
  }
  if (std::abs(wsum - 1.0) > 1e-6)
    throw std::invalid_argument("SmogParams: weights do not sum to 1");
}

namespace detail {

struct Chol2 {
  double l11, l21, l22;
};

inline Chol2 cholesky_jittered(const Mat2& m) {
  const double a = m[0][0] + kCholeskyJitter;
  const double c = m[1][1] + kCholeskyJitter;
  const double b = m[0][1];
  Chol2 ch;
  ch.l11 = std::sqrt(a);
  ch.l21 = b / ch.l11;
  ch.l22 = std::sqrt(std::max(c - ch.l21 * ch.l21, 0.0));
  return ch;
}

// wrap theta into [0, 2*pi), reflect phi into [0, pi] (theta shifts by pi
// on each reflection)
inline SphericalCoord canonicalize(double theta, double phi) {
  constexpr double pi = std::numbers::pi;
  while (phi < 0.0 || phi > pi) {
    if (phi < 0.0) {
      phi = -phi;
      theta += pi;
    } else {
      phi = 2.0 * pi - phi;
      theta += pi;
    }
  }
  theta = std::fmod(theta, 2.0 * pi);
  if (theta < 0.0) theta += 2.0 * pi;
  if (theta >= 2.0 * pi) theta = 0.0;
  return {theta, phi};
}

}  // namespace detail

// Draw m points from the mixture. The per-sample stream is derived from
// (seed, sample index), so results are bit-identical regardless of how the
// loop is scheduled. Returns the points and the component index that
// generated each one.
inline std::pair<std::vector<Vec3>, std::vector<int64_t>> sample_smog(const SmogParams& params,
                                                                      int64_t m, uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample_smog: m must be >= 1");
  params.validate();
  const int64_t k = params.count();

  std::vector<double> cum(static_cast<size_t>(k));
  double acc = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    acc += params.weights[static_cast<size_t>(i)];
    cum[static_cast<size_t>(i)] = acc;
  }

  std::vector<SphericalCoord> mean_sph(static_cast<size_t>(k));
  std::vector<detail::Chol2> chol(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    mean_sph[static_cast<size_t>(i)] = cart_to_sph(params.means[static_cast<size_t>(i)]);
    chol[static_cast<size_t>(i)] = detail::cholesky_jittered(params.covariances[static_cast<size_t>(i)]);
  }

  std::vector<Vec3> points(static_cast<size_t>(m));
  std::vector<int64_t> comp(static_cast<size_t>(m));
  for (int64_t s = 0; s < m; ++s) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(s), 0x5350u));
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const int64_t ci = std::min<int64_t>(static_cast<int64_t>(it - cum.begin()), k - 1);
    const double n1 = rng.normal();
    const double n2 = rng.normal();
    const auto& ch = chol[static_cast<size_t>(ci)];
    const double dtheta = ch.l11 * n1;
    const double dphi = ch.l21 * n1 + ch.l22 * n2;
    const auto& ms = mean_sph[static_cast<size_t>(ci)];
    const SphericalCoord sc = detail::canonicalize(ms.theta + dtheta, ms.phi + dphi);
    points[static_cast<size_t>(s)] = sph_to_cart(sc);
    comp[static_cast<size_t>(s)] = ci;
  }
  return {std::move(points), std::move(comp)};
}

// Mixture density at a unit vector, evaluated in (theta, phi) offset
// coordinates with the shortest angular difference per axis.
inline double likelihood(const SmogParams& params, const Vec3& z) {
  params.validate();
  const SphericalCoord zs = cart_to_sph(z);
  double total = 0.0;
  for (int64_t i = 0; i < params.count(); ++i) {
    const SphericalCoord ms = cart_to_sph(params.means[static_cast<size_t>(i)]);
    const double dtheta = std::remainder(zs.theta - ms.theta, 2.0 * std::numbers::pi);
    const double dphi = zs.phi - ms.phi;
    const Mat2& cv = params.covariances[static_cast<size_t>(i)];
    double a = cv[0][0], b = cv[0][1], c = cv[1][1];
    double det = a * c - b * b;
    if (det < 1e-18) {
      a += kCholeskyJitter;
      c += kCholeskyJitter;
      det = a * c - b * b;
    }
    const double quad = (dtheta * dtheta * c - 2.0 * dtheta * dphi * b + dphi * dphi * a) / det;
    const double dens = std::exp(-0.5 * quad) / (2.0 * std::numbers::pi * std::sqrt(det));
    total += params.weights[static_cast<size_t>(i)] * dens;
  }
  return total;
}

// Debug dump, one row per component.
inline void write_smog_csv(const std::string& path, const SmogParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "i,mu_x,mu_y,mu_z,var_theta,var_phi,cov,weight\n";
  char buf[256];
  for (int64_t i = 0; i < params.count(); ++i) {
    const auto& mu = params.means[static_cast<size_t>(i)];
    const auto& cv = params.covariances[static_cast<size_t>(i)];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(i), mu[0], mu[1], mu[2], cv[0][0], cv[1][1], cv[0][1],
                  params.weights[static_cast<size_t>(i)]);
    out << buf;
  }
}

}  // namespace smog
