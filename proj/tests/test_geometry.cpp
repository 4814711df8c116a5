#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "oracles.hpp"
#include "smog/geometry.hpp"
#include "smog/mesh.hpp"
#include "smog/rng.hpp"

using namespace smog;

TEST_CASE("knn collinear points") {
  PointCloud c({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
  const auto idx = knn(c, {0, 0, 0}, 2);
  REQUIRE(idx == std::vector<int64_t>{0, 1});
}

TEST_CASE("knn self query returns self") {
  Rng rng(7);
  auto c = oracle::random_cloud(rng, 40);
  c.points[13] = c.points[5];  // duplicate position, tie must go to index 5
  REQUIRE(knn(c, c.points[5], 1) == std::vector<int64_t>{5});
  REQUIRE(knn(c, c.points[20], 1) == std::vector<int64_t>{20});
}

TEST_CASE("knn errors") {
  PointCloud c({{0, 0, 0}, {1, 0, 0}});
  REQUIRE_THROWS_WITH(knn(c, {0, 0, 0}, 3), Catch::Matchers::ContainsSubstring("insufficient"));
  REQUIRE_THROWS_WITH(knn(c, {0, 0, 0}, 0), Catch::Matchers::ContainsSubstring("empty query"));
}

TEST_CASE("knn matches exhaustive scan on random clouds") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const auto c = oracle::random_cloud(rng, 50);
    const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    REQUIRE(knn(c, q, 5) == oracle::knn(c, q, 5));
  }
}

TEST_CASE("knn equals brute force on clouds up to 200 points") {
  Rng rng(1234);
  for (int64_t n : {1, 2, 3, 7, 50, 200}) {
    const auto c = oracle::random_cloud(rng, n);
    for (int rep = 0; rep < 5; ++rep) {
      const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const int64_t k = 1 + rng.index(n);
      REQUIRE(knn(c, q, k) == oracle::knn(c, q, k));
    }
  }
  // clustered duplicates to exercise tie-breaking
  PointCloud dup;
  Rng rng2(5);
  for (int i = 0; i < 60; ++i) {
    const int cell = static_cast<int>(rng2.index(4));
    dup.points.push_back({static_cast<double>(cell), 0, 0});
  }
  for (int rep = 0; rep < 10; ++rep) {
    const Vec3 q{rng2.uniform(-1, 4), 0, 0};
    const int64_t k = 1 + rng2.index(dup.count());
    REQUIRE(knn(dup, q, k) == oracle::knn(dup, q, k));
  }
}

TEST_CASE("fps on a line") {
  PointCloud c({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 0}});
  REQUIRE(farthest_point_sample(c, 2, 0) == std::vector<int64_t>{0, 4});
}

TEST_CASE("fps with m equal to count is a permutation") {
  Rng rng(3);
  const auto c = oracle::random_cloud(rng, 17);
  const auto idx = farthest_point_sample(c, 17, 4);
  std::set<int64_t> s(idx.begin(), idx.end());
  REQUIRE(s.size() == 17);
}

TEST_CASE("fps matches greedy reference") {
  Rng rng(99);
  const auto c = oracle::random_cloud(rng, 30);
  for (int64_t start : {0, 7, 29})
    REQUIRE(farthest_point_sample(c, 8, start) == oracle::fps(c, 8, start));
}

TEST_CASE("fps greedy optimality invariant") {
  Rng rng(17);
  const auto c = oracle::random_cloud(rng, 40);
  const auto idx = farthest_point_sample(c, 12, 0);
  std::vector<bool> sel(40, false);
  sel[0] = true;
  for (size_t step = 1; step < idx.size(); ++step) {
    auto min_to_sel = [&](int64_t i) {
      double best = std::numeric_limits<double>::infinity();
      for (int64_t s = 0; s < 40; ++s)
        if (sel[(size_t)s]) best = std::min(best, oracle::d2(c.points[(size_t)i], c.points[(size_t)s]));
      return best;
    };
    const double chosen = min_to_sel(idx[step]);
    for (int64_t i = 0; i < 40; ++i)
      if (!sel[(size_t)i]) REQUIRE(chosen >= min_to_sel(i) - 1e-12);
    sel[(size_t)idx[step]] = true;
  }
}

TEST_CASE("fps errors") {
  PointCloud c({{0, 0, 0}});
  REQUIRE_THROWS(farthest_point_sample(c, 2, 0));
  REQUIRE_THROWS(farthest_point_sample(c, 1, 5));
}

TEST_CASE("normalize simple pair") {
  PointCloud c({{2, 0, 0}, {4, 0, 0}});
  const auto [out, t] = normalize(c);
  REQUIRE(t.centroid[0] == Catch::Approx(3.0));
  REQUIRE(t.scale == Catch::Approx(1.0));
  REQUIRE(out.points[0][0] == Catch::Approx(-1.0));
  REQUIRE(out.points[1][0] == Catch::Approx(1.0));
}

TEST_CASE("normalize idempotent on unit-ball cloud") {
  Rng rng(8);
  PointCloud c;
  for (int i = 0; i < 64; ++i) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    c.points.push_back(v * (rng.uniform() / n));
  }
  // force exact centroid 0 and max norm 1
  auto [c1, t1] = normalize(c);
  auto [c2, t2] = normalize(c1);
  for (int64_t i = 0; i < c1.count(); ++i)
    REQUIRE(norm(c2.points[(size_t)i] - c1.points[(size_t)i]) < 1e-9);
}

TEST_CASE("normalize round trip") {
  Rng rng(15);
  auto c = oracle::random_cloud(rng, 50, 3.0, 9.0);
  const auto [n, t] = normalize(c);
  const auto back = denormalize(n, t);
  for (int64_t i = 0; i < c.count(); ++i)
    REQUIRE(norm(back.points[(size_t)i] - c.points[(size_t)i]) < 1e-6 * norm(c.points[(size_t)i]));
  // invariants
  Vec3 centroid{0, 0, 0};
  double max_norm = 0;
  for (const auto& p : n.points) centroid = centroid + p;
  centroid = centroid * (1.0 / n.count());
  for (const auto& p : n.points) max_norm = std::max(max_norm, norm(p));
  REQUIRE(norm(centroid) < 1e-9);
  REQUIRE(max_norm == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("normalize degenerate cloud") {
  PointCloud c({{5, 5, 5}, {5, 5, 5}});
  const auto [out, t] = normalize(c);
  REQUIRE(t.scale == 1.0);
  REQUIRE(out.points[0][0] == 0.0);
}

TEST_CASE("extract_patches whole cloud") {
  Rng rng(21);
  const auto c = oracle::random_cloud(rng, 256);
  const auto patches = extract_patches(c, 256, 1);
  REQUIRE(patches.size() == 1);
  REQUIRE(patches[0].cloud.count() == 256);
}

TEST_CASE("extract_patches coverage") {
  Rng rng(22);
  const auto c = oracle::random_cloud(rng, 512);
  const auto patches = extract_patches(c, 256, 2);
  REQUIRE(patches.size() >= 4);
  std::set<int64_t> seen;
  for (const auto& p : patches) {
    REQUIRE(p.cloud.count() == 256);
    for (int64_t i : p.indices) seen.insert(i);
  }
  REQUIRE(seen.size() == 512);
}

TEST_CASE("extract_patches respects geodesic components") {
  Rng rng(23);
  PointCloud c;
  for (int i = 0; i < 256; ++i)
    c.points.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
  for (int i = 0; i < 256; ++i)
    c.points.push_back({rng.uniform(100, 101), rng.uniform(0, 1), rng.uniform(0, 1)});
  const auto patches = extract_patches(c, 256, 2);
  for (const auto& p : patches) {
    bool low = false, high = false;
    for (int64_t i : p.indices) (i < 256 ? low : high) = true;
    REQUIRE((low ^ high));
  }
}

TEST_CASE("extract_patches errors") {
  PointCloud c({{0, 0, 0}});
  REQUIRE_THROWS(extract_patches(c, 2, 1));
}

TEST_CASE("merge_patches identity") {
  Rng rng(31);
  const auto c = oracle::random_cloud(rng, 1024);
  NormalizationTransform id;
  const auto merged = merge_patches({c}, {id}, 1024);
  REQUIRE(merged.count() == 1024);
  for (int64_t i = 0; i < 1024; ++i) REQUIRE(norm(merged.points[(size_t)i] - c.points[(size_t)i]) == 0.0);
}

TEST_CASE("merge_patches dedupes with fps spread") {
  Rng rng(32);
  const auto c = oracle::random_cloud(rng, 128);
  NormalizationTransform id;
  const auto merged = merge_patches({c, c}, {id, id}, 128);
  REQUIRE(merged.count() == 128);
  // FPS keeps a spread subset: min pairwise distance at least that of the
  // densest pair in the input
  double min_in = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < c.count(); ++i)
    for (int64_t j = i + 1; j < c.count(); ++j)
      min_in = std::min(min_in, oracle::d2(c.points[(size_t)i], c.points[(size_t)j]));
  (void)min_in;
  std::set<std::array<double, 3>> uniq(merged.points.begin(), merged.points.end());
  REQUIRE(uniq.size() >= 64);  // duplicates mostly pruned by FPS spread
}

TEST_CASE("merge_patches insufficient points") {
  Rng rng(33);
  std::vector<PointCloud> patches;
  std::vector<NormalizationTransform> ts(4);
  for (int i = 0; i < 4; ++i) patches.push_back(oracle::random_cloud(rng, 1024));
  REQUIRE_THROWS_WITH(merge_patches(patches, ts, 8192),
                      Catch::Matchers::ContainsSubstring("insufficient"));
  REQUIRE_THROWS(merge_patches({}, {}, 1));
}

TEST_CASE("sample_mesh containment") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  const auto pts = sample_mesh(m, 1000, 7);
  REQUIRE(pts.count() == 1000);
  for (const auto& p : pts.points) {
    REQUIRE(p[0] >= -1e-12);
    REQUIRE(p[1] >= -1e-12);
    REQUIRE(p[0] + p[1] <= 1.0 + 1e-12);
    REQUIRE(std::abs(p[2]) < 1e-12);
  }
}

TEST_CASE("sample_mesh area weighting") {
  TriangleMesh m;
  // area ratio 3:1
  m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {10, 0, 0}, {11, 0, 0}, {10, 2, 0}};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  const auto pts = sample_mesh(m, 10000, 11);
  int64_t big = 0;
  for (const auto& p : pts.points)
    if (p[0] < 5) ++big;
  const double sigma = std::sqrt(10000 * 0.75 * 0.25);
  REQUIRE(std::abs(static_cast<double>(big) - 7500.0) <= 3 * sigma);
}

TEST_CASE("sample_mesh determinism and surface distance") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 1}};
  m.faces = {{0, 1, 2}, {1, 3, 2}};
  const auto a = sample_mesh(m, 500, 123);
  const auto b = sample_mesh(m, 500, 123);
  for (int64_t i = 0; i < 500; ++i) {
    REQUIRE(a.points[(size_t)i] == b.points[(size_t)i]);
    REQUIRE(point_mesh_distance(a.points[(size_t)i], m) < 1e-9);
  }
}

TEST_CASE("sample_mesh errors") {
  TriangleMesh degenerate;
  degenerate.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  degenerate.faces = {{0, 1, 2}};  // collinear: zero area
  REQUIRE_THROWS_WITH(sample_mesh(degenerate, 10, 0),
                      Catch::Matchers::ContainsSubstring("zero total area"));
}
