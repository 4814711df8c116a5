#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "smog/rng.hpp"
#include "smog/smog.hpp"

using namespace smog;
constexpr double kPi = std::numbers::pi;

namespace {

// inverse of softplus(x) + floor, so tests can pin post-softplus variances
double raw_for_variance(double v) { return std::log(std::exp(v - kVarianceFloor) - 1.0); }

SmogParams single_component(const Vec3& mu, const Mat2& cov) {
  SmogParams p;
  p.means = {mu};
  p.covariances = {cov};
  p.weights = {1.0};
  return p;
}

}  // namespace

TEST_CASE("clamped covariance saturates at the PSD bound") {
  // sigma_t = 0.5, sigma_p = 0.4 after softplus => bound 0.2
  const Mat2 m = build_covariance_clamped(raw_for_variance(0.25), raw_for_variance(0.16), 0.3);
  REQUIRE(m[0][0] == Catch::Approx(0.25).epsilon(1e-9));
  REQUIRE(m[1][1] == Catch::Approx(0.16).epsilon(1e-9));
  REQUIRE(m[0][1] == Catch::Approx(0.2).epsilon(1e-9));
  REQUIRE(m[0][1] == m[1][0]);
}

TEST_CASE("clamped covariance keeps interior values") {
  const Mat2 m = build_covariance_clamped(raw_for_variance(0.25), raw_for_variance(0.16), 0.0);
  REQUIRE(m[0][1] == 0.0);
  const auto [l1, l2] = eigenvalues_2x2(m);
  REQUIRE(l1 == Catch::Approx(0.25));
  REQUIRE(l2 == Catch::Approx(0.16));
}

TEST_CASE("both constructions are PSD over random raw inputs") {
  Rng rng(101);
  for (int i = 0; i < 10000; ++i) {
    const Mat2 a =
        build_covariance_clamped(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    REQUIRE(eigenvalues_2x2(a).second >= -1e-9);
    const Mat2 b =
        build_covariance_rotdiag(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    REQUIRE(eigenvalues_2x2(b).second >= -1e-9);
  }
}

TEST_CASE("rotdiag identity and quarter turn") {
  const Mat2 id = build_covariance_rotdiag(0.0, raw_for_variance(1.0), raw_for_variance(2.0));
  REQUIRE(id[0][0] == Catch::Approx(1.0));
  REQUIRE(id[1][1] == Catch::Approx(2.0));
  REQUIRE(id[0][1] == Catch::Approx(0.0).margin(1e-12));
  const Mat2 q = build_covariance_rotdiag(kPi / 2, raw_for_variance(1.0), raw_for_variance(2.0));
  REQUIRE(q[0][0] == Catch::Approx(2.0));
  REQUIRE(q[1][1] == Catch::Approx(1.0));
  REQUIRE(q[0][1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("rotdiag eigenvalues are the diagonal entries") {
  Rng rng(55);
  for (int i = 0; i < 100; ++i) {
    const double angle = rng.uniform(-kPi, kPi);
    const double r1 = rng.uniform(-3, 3), r2 = rng.uniform(-3, 3);
    const double d1 = softplus_value(r1) + kVarianceFloor;
    const double d2 = softplus_value(r2) + kVarianceFloor;
    const Mat2 m = build_covariance_rotdiag(angle, r1, r2);
    REQUIRE(std::abs(m[0][1] - m[1][0]) < 1e-12);
    const auto [l1, l2] = eigenvalues_2x2(m);
    REQUIRE(l1 == Catch::Approx(std::max(d1, d2)).margin(1e-9));
    REQUIRE(l2 == Catch::Approx(std::min(d1, d2)).margin(1e-9));
  }
}

TEST_CASE("eigenvalue hand cases") {
  REQUIRE(eigenvalues_2x2({{{2, 0}, {0, 3}}}) == std::pair<double, double>{3, 2});
  REQUIRE(eigenvalues_2x2({{{1, 1}, {1, 1}}}) == std::pair<double, double>{2, 0});
  REQUIRE(eigenvalues_2x2({{{2, 1}, {1, 2}}}) == std::pair<double, double>{3, 1});
  REQUIRE_THROWS_WITH(eigenvalues_2x2({{{1, 0.5}, {0.2, 1}}}),
                      Catch::Matchers::ContainsSubstring("symmetric"));
}

TEST_CASE("clamp bound equals unit correlation bound") {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const double vt = rng.uniform(0.01, 4.0), vp = rng.uniform(0.01, 4.0);
    const double cov = rng.uniform(-3.0, 3.0);
    const bool within_clamp = cov >= -std::sqrt(vt * vp) && cov <= std::sqrt(vt * vp);
    const double rho = cov / std::sqrt(vt * vp);
    REQUIRE(within_clamp == (std::abs(rho) <= 1.0));
  }
}

TEST_CASE("spherical conversion fixed points") {
  const auto north = cart_to_sph({0, 0, 1});
  REQUIRE(north.theta == 0.0);
  REQUIRE(north.phi == Catch::Approx(0.0).margin(1e-12));
  const auto x = cart_to_sph({1, 0, 0});
  REQUIRE(x.theta == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(x.phi == Catch::Approx(kPi / 2));
  REQUIRE_THROWS_WITH(cart_to_sph({1, 1, 1}), Catch::Matchers::ContainsSubstring("unit"));
}

TEST_CASE("spherical round trip") {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    v = v * (1.0 / n);
    const Vec3 back = sph_to_cart(cart_to_sph(v));
    REQUIRE(norm(back - v) < 1e-9);
  }
}

TEST_CASE("sampling with floor variance stays near the mean") {
  const Mat2 tiny = build_covariance_clamped(-40.0, -40.0, 0.0);  // softplus ~ 0
  const auto p = single_component({1, 0, 0}, tiny);
  const auto [pts, comp] = sample_smog(p, 5, 9);
  REQUIRE(pts.size() == 5);
  for (const auto& q : pts) REQUIRE(norm(q - Vec3{1, 0, 0}) < 0.01);
  for (int64_t c : comp) REQUIRE(c == 0);
}

TEST_CASE("component assignment follows the weights") {
  SmogParams p;
  p.means = {{1, 0, 0}, {0, 1, 0}};
  const Mat2 cv = build_covariance_clamped(-5, -5, 0.0);
  p.covariances = {cv, cv};
  p.weights = {0.5, 0.5};
  const int64_t n = 100000;
  const auto [pts, comp] = sample_smog(p, n, 123);
  int64_t c0 = 0;
  for (int64_t c : comp) c0 += (c == 0);
  const double sigma = std::sqrt(n * 0.25);
  REQUIRE(std::abs(static_cast<double>(c0) - n / 2.0) <= 3 * sigma);
}

TEST_CASE("offset covariance matches the parameters") {
  const Mat2 cv{{{0.04, 0.0}, {0.0, 0.01}}};
  const Vec3 mu{1, 0, 0};  // equator
  const auto p = single_component(mu, cv);
  const int64_t n = 100000;
  const auto [pts, comp] = sample_smog(p, n, 2024);
  const auto ms = cart_to_sph(mu);
  double s11 = 0, s22 = 0, s12 = 0, m1 = 0, m2 = 0;
  std::vector<double> dts, dps;
  dts.reserve((size_t)n);
  dps.reserve((size_t)n);
  for (const auto& q : pts) {
    REQUIRE(std::abs(norm(q) - 1.0) < 1e-6);
    const auto qs = cart_to_sph(q);
    const double dt = std::remainder(qs.theta - ms.theta, 2 * kPi);
    const double dp = qs.phi - ms.phi;
    dts.push_back(dt);
    dps.push_back(dp);
    m1 += dt;
    m2 += dp;
  }
  m1 /= n;
  m2 /= n;
  for (int64_t i = 0; i < n; ++i) {
    s11 += (dts[(size_t)i] - m1) * (dts[(size_t)i] - m1);
    s22 += (dps[(size_t)i] - m2) * (dps[(size_t)i] - m2);
    s12 += (dts[(size_t)i] - m1) * (dps[(size_t)i] - m2);
  }
  s11 /= (n - 1);
  s22 /= (n - 1);
  s12 /= (n - 1);
  // standard errors of normal (co)variance estimates
  const double se11 = std::sqrt(2.0 / (n - 1)) * 0.04;
  const double se22 = std::sqrt(2.0 / (n - 1)) * 0.01;
  const double se12 = std::sqrt((0.04 * 0.01) / (n - 1));
  REQUIRE(std::abs(s11 - 0.04) <= 3 * se11);
  REQUIRE(std::abs(s22 - 0.01) <= 3 * se22);
  REQUIRE(std::abs(s12 - 0.0) <= 3 * se12);
}

TEST_CASE("sampling is deterministic") {
  SmogParams p;
  p.means = {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
  p.covariances = {build_covariance_clamped(0.1, -0.3, 0.01),
                   build_covariance_clamped(-1, 0.5, -0.2),
                   build_covariance_clamped(0.2, 0.2, 5.0)};
  p.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto a = sample_smog(p, 257, 77);
  const auto b = sample_smog(p, 257, 77);
  REQUIRE(a.first == b.first);
  REQUIRE(a.second == b.second);
  const auto c = sample_smog(p, 257, 78);
  REQUIRE(a.first != c.first);
}

TEST_CASE("sampling rejects broken covariances") {
  SmogParams p = single_component({0, 0, 1}, {{{1.0, 2.0}, {2.0, 1.0}}});  // eigenvalue -1
  REQUIRE_THROWS_WITH(sample_smog(p, 3, 0).first.size(),
                      Catch::Matchers::ContainsSubstring("positive semi-definite"));
}

TEST_CASE("likelihood peak value") {
  const Mat2 cv{{{0.02, 0.005}, {0.005, 0.01}}};
  const Vec3 mu = sph_to_cart({1.2, 1.1});
  const auto p = single_component(mu, cv);
  const double det = 0.02 * 0.01 - 0.005 * 0.005;
  REQUIRE(likelihood(p, mu) == Catch::Approx(1.0 / (2 * kPi * std::sqrt(det))).epsilon(1e-9));
}

TEST_CASE("likelihood of two equal components at the midpoint") {
  SmogParams p;
  p.means = {sph_to_cart({1.0, kPi / 2}), sph_to_cart({1.4, kPi / 2})};
  const Mat2 cv{{{0.05, 0.0}, {0.0, 0.05}}};
  p.covariances = {cv, cv};
  p.weights = {0.5, 0.5};
  const Vec3 z = sph_to_cart({1.2, kPi / 2});
  const double each = std::exp(-0.5 * (0.2 * 0.2) / 0.05) / (2 * kPi * std::sqrt(0.05 * 0.05));
  REQUIRE(likelihood(p, z) == Catch::Approx(each).epsilon(1e-9));
}

TEST_CASE("likelihood matches a direct density computation") {
  Rng rng(404);
  for (int rep = 0; rep < 20; ++rep) {
    SmogParams p;
    const int64_t k = 1 + rng.index(4);
    for (int64_t i = 0; i < k; ++i) {
      Vec3 v{rng.normal(), rng.normal(), rng.normal()};
      p.means.push_back(v * (1.0 / norm(v)));
      p.covariances.push_back(
          build_covariance_clamped(rng.uniform(-2, 0), rng.uniform(-2, 0), rng.uniform(-0.1, 0.1)));
      p.weights.push_back(1.0 / static_cast<double>(k));
    }
    Vec3 z{rng.normal(), rng.normal(), rng.normal()};
    z = z * (1.0 / norm(z));
    // independent direct evaluation
    const auto zs = cart_to_sph(z);
    double want = 0;
    for (int64_t i = 0; i < k; ++i) {
      const auto ms = cart_to_sph(p.means[(size_t)i]);
      double dt = zs.theta - ms.theta;
      while (dt > kPi) dt -= 2 * kPi;
      while (dt < -kPi) dt += 2 * kPi;
      const double dp = zs.phi - ms.phi;
      const auto& m = p.covariances[(size_t)i];
      const double det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
      const double q =
          (dt * dt * m[1][1] - 2 * dt * dp * m[0][1] + dp * dp * m[0][0]) / det;
      want += p.weights[(size_t)i] * std::exp(-0.5 * q) / (2 * kPi * std::sqrt(det));
    }
    REQUIRE(likelihood(p, z) == Catch::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("likelihood is nonnegative and integrates to one for small variances") {
  const Mat2 cv{{{0.01, 0.002}, {0.002, 0.005}}};
  const auto p = single_component(sph_to_cart({2.0, kPi / 2}), cv);
  const int nt = 400, np = 200;
  const double dt = 2 * kPi / nt, dp = kPi / np;
  double integral = 0;
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < np; ++j) {
      const double theta = (i + 0.5) * dt;
      const double phi = (j + 0.5) * dp;
      const double u = likelihood(p, sph_to_cart({theta, phi}));
      REQUIRE(u >= 0.0);
      integral += u * dt * dp;
    }
  REQUIRE(integral == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("smog csv dump") {
  SmogParams p = single_component({0, 0, 1}, build_covariance_clamped(0, 0, 0.1));
  const std::string path = "/tmp/smog_params_test.csv";
  write_smog_csv(path, p);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "i,mu_x,mu_y,mu_z,var_theta,var_phi,cov,weight");
  std::string row;
  REQUIRE(std::getline(in, row).good());
  std::remove(path.c_str());
}
