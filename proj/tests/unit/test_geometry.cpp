#include "doctest.h"

#include <cmath>

#include "otplug/core/error.hpp"
#include "otplug/core/geometry.hpp"
#include "otplug/core/quadrature.hpp"
#include "otplug/core/rng.hpp"

using namespace otplug;

TEST_CASE("torus distance examples") {
  Point x{{0.1}, Domain::torus}, y{{0.9}, Domain::torus};
  CHECK(torus_distance(x, y) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(torus_distance(x, x) == 0.0);
  Point a{{0.1, 0.1}, Domain::torus}, b{{0.9, 0.9}, Domain::torus};
  CHECK(torus_distance(a, b) == doctest::Approx(std::sqrt(0.08)).epsilon(1e-14));
  Point c{{0.1}, Domain::cube};
  CHECK_THROWS_AS(torus_distance(c, y), InvalidArgument);
  CHECK_THROWS_AS(torus_distance(a, y), InvalidArgument);
}

TEST_CASE("torus distance is a metric and matches shift enumeration") {
  Rng rng(11);
  for (std::size_t d : {1u, 2u, 3u, 5u}) {
    for (int t = 0; t < 200; ++t) {
      Point p[3];
      for (auto& q : p) {
        q.domain = Domain::torus;
        for (std::size_t c = 0; c < d; ++c) q.coords.push_back(rng.uniform());
      }
      const double xy = torus_distance(p[0], p[1]);
      CHECK(xy == doctest::Approx(torus_distance_enumerated(p[0], p[1])).epsilon(1e-14));
      CHECK(xy == torus_distance(p[1], p[0]));
      CHECK(xy <= std::sqrt(double(d)) / 2 + 1e-15);
      CHECK(xy <= torus_distance(p[0], p[2]) + torus_distance(p[2], p[1]) + 1e-12);
    }
  }
}

TEST_CASE("weighted cloud validation") {
  CHECK_NOTHROW(WeightedCloud(1, Domain::cube, {0.0, 1.0}, {0.5, 0.5}));
  CHECK_THROWS_AS(WeightedCloud(1, Domain::cube, {0.0, 1.0}, {0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(WeightedCloud(1, Domain::cube, {0.0, 1.0}, {1.5, -0.5}), InvalidArgument);
  CHECK_THROWS_AS(WeightedCloud(1, Domain::torus, {0.0, 1.0}, {0.5, 0.5}), InvalidArgument);
  CHECK_THROWS_AS(WeightedCloud(1, Domain::cube, {0.0, 1.2}, {0.5, 0.5}), InvalidArgument);
  auto u = WeightedCloud::uniform(2, Domain::cube, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  CHECK(u.size() == 3);
  CHECK(u.has_uniform_weights());
  CHECK(u.weight(1) == doctest::Approx(1.0 / 3));
}

TEST_CASE("grid midpoints") {
  auto g = grid(1, 4, Domain::cube);
  REQUIRE(g.size() == 4);
  const double expect[] = {0.125, 0.375, 0.625, 0.875};
  for (int i = 0; i < 4; ++i) {
    CHECK(g.point(i)[0] == expect[i]);
    CHECK(g.weight(i) == 0.25);
  }
  auto g2 = grid(2, 3, Domain::torus);
  CHECK(g2.size() == 9);
  CHECK(compensated_sum(g2.weights()) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(grid(1, 1, Domain::cube), InvalidArgument);
  CHECK_THROWS_AS(grid(10, 100, Domain::cube), InvalidArgument);
}

TEST_CASE("gauss legendre integrates polynomials exactly") {
  for (std::size_t k : {1u, 2u, 5u, 8u, 10u}) {
    const auto& r = gauss_legendre(k);
    double w = 0.0;
    for (double v : r.weights) w += v;
    CHECK(w == doctest::Approx(2.0).epsilon(1e-14));
    const int deg = 2 * static_cast<int>(k) - 1;
    double s = 0.0;
    for (std::size_t q = 0; q < k; ++q) s += r.weights[q] * std::pow(r.nodes[q], deg - 1);
    CHECK(s == doctest::Approx(2.0 / deg).epsilon(1e-13));
  }
  CHECK(integrate([](double x) { return std::sin(x); }, 0.0, M_PI) ==
        doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("rng determinism and streams") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  bool differ = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differ |= x != c.next_u64();
  }
  CHECK(differ);
  Rng u(1);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = u.uniform();
    CHECK((v >= 0.0 && v < 1.0));
    mean += v;
  }
  CHECK(mean / 100000 == doctest::Approx(0.5).epsilon(0.01));
  CHECK(derive_seed(1, 100, 0) != derive_seed(1, 100, 1));
  CHECK(derive_seed(1, 100, 0) != derive_seed(1, 200, 0));
}
