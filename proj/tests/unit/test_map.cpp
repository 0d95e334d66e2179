#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "otplug/core/error.hpp"
#include "otplug/core/ground_truth.hpp"
#include "otplug/core/quadrature.hpp"
#include "otplug/map/map_estimate.hpp"

using namespace otplug;

namespace {

MapFunction truth_of(const GroundTruth& gt) {
  return [&gt](std::span<const double> p, std::span<double> o) { gt.map(p, o); };
}

// In 1D the semi-discrete map from U[0,1] onto an empirical measure with
// sorted atoms y_(k) sends x to y_(ceil(n x)).
double quantile_map_risk(const GroundTruth& gt, std::vector<double> y) {
  std::sort(y.begin(), y.end());
  const std::size_t n = y.size();
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = double(k) / n, b = double(k + 1) / n;
    total += integrate([&](double x) { const double r = gt.profile(x) - y[k]; return r * r; }, a, b, 8, 8);
  }
  return total;
}

}  // namespace

TEST_CASE("semi-discrete examples") {
  auto id = GroundTruth::make({"identity", 1, -1});
  WeightedCloud single(1, Domain::cube, {0.3}, {1.0});
  auto m1 = estimate_semidiscrete(id, single, 64);
  for (double x : {0.0, 0.2, 0.9, 1.0}) CHECK(m1.evaluate(std::vector<double>{x})[0] == doctest::Approx(0.3));

  auto two = WeightedCloud::uniform(1, Domain::cube, {0.75, 0.25});
  auto m2 = estimate_semidiscrete(id, two, 64);
  CHECK(m2.evaluate(std::vector<double>{0.1})[0] == doctest::Approx(0.25));
  CHECK(m2.evaluate(std::vector<double>{0.49})[0] == doctest::Approx(0.25));
  CHECK(m2.evaluate(std::vector<double>{0.51})[0] == doctest::Approx(0.75));
  CHECK(m2.cost() == doctest::Approx(1.0 / 48).epsilon(1e-3));

  auto gt = GroundTruth::make({"sine1d", 1, -1});
  Rng rng(8);
  auto y = gt.sample(Which::target, 200, rng);
  auto sd = estimate_semidiscrete(gt, y, 2048);
  Rng r2(1);
  const double risk = l2p_risk(sd, gt, 4096, r2).risk;
  const double oracle = quantile_map_risk(gt, y.coords());
  CHECK(risk <= 2 * oracle);
  CHECK(risk >= oracle / 2);
}

TEST_CASE("empty grid cells inherit the nearest occupied cell") {
  auto hat = haar_estimate(WeightedCloud::uniform(2, Domain::cube, {0.1, 0.1, 0.9, 0.9}), 1, 8);
  WeightedCloud y = WeightedCloud::uniform(2, Domain::cube, {0.2, 0.2, 0.8, 0.8});
  auto m = estimate_semidiscrete(hat, y);
  CHECK(m.evaluate(std::vector<double>{0.05, 0.05})[0] == doctest::Approx(0.2));
  CHECK(m.evaluate(std::vector<double>{0.95, 0.95})[1] == doctest::Approx(0.8));
  CHECK(m.evaluate(std::vector<double>{0.3, 0.1})[0] == doctest::Approx(0.2));
}

TEST_CASE("1nn estimator") {
  WeightedCloud x1(1, Domain::cube, {0.4}, {1.0}), y1(1, Domain::cube, {0.9}, {1.0});
  auto s1 = solve_discrete_ot(x1, y1, Metric::euclidean_sq);
  auto m1 = estimate_1nn(x1, y1, s1.coupling);
  CHECK(m1.evaluate(std::vector<double>{0.0})[0] == 0.9);

  auto x = WeightedCloud::uniform(1, Domain::cube, {0.1, 0.9});
  auto y = WeightedCloud::uniform(1, Domain::cube, {0.8, 0.2});
  auto s = solve_discrete_ot(x, y, Metric::euclidean_sq);
  auto m = estimate_1nn(x, y, s.coupling);
  CHECK(m.evaluate(std::vector<double>{0.3})[0] == 0.2);
  CHECK(m.evaluate(std::vector<double>{0.7})[0] == 0.8);
  CHECK(m.evaluate(std::vector<double>{0.5})[0] == 0.2);

  Rng rng(3);
  auto gt = GroundTruth::make({"product-sine", 2, -1});
  auto p = gt.sample(Which::source, 50, rng);
  auto same = solve_discrete_ot(p, p, Metric::euclidean_sq);
  auto fixed = estimate_1nn(p, p, same.coupling);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto v = fixed.evaluate(p.point(i));
    CHECK(v[0] == doctest::Approx(p.point(i)[0]));
    CHECK(v[1] == doctest::Approx(p.point(i)[1]));
  }

  auto q = gt.sample(Which::target, 60, rng);
  auto pq = solve_discrete_ot(p, q, Metric::euclidean_sq);
  auto mq = estimate_1nn(p, q, pq.coupling);
  double lo0 = 1, hi0 = 0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    lo0 = std::min(lo0, q.point(j)[0]);
    hi0 = std::max(hi0, q.point(j)[0]);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(mq.targets()[2 * i] >= lo0 - 1e-15);
    CHECK(mq.targets()[2 * i] <= hi0 + 1e-15);
  }
  WeightedCloud nonuni(1, Domain::cube, {0.1, 0.2}, {0.3, 0.7});
  CHECK_THROWS_AS(estimate_1nn(nonuni, nonuni, solve_discrete_ot(nonuni, nonuni, Metric::euclidean_sq).coupling),
                  InvalidArgument);
}

TEST_CASE("density plugin map") {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  auto p = exact_density(gt, Which::source, 512);
  auto q = exact_density(gt, Which::target, 512);
  auto same = estimate_density_plugin(q, q);
  CHECK(same.cost() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(same.evaluate(std::vector<double>{0.3 / 512 + 100.0 / 512})[0] == doctest::Approx(100.5 / 512));

  auto fwd = estimate_density_plugin(p, q);
  auto back = estimate_density_plugin(q, p);
  for (std::size_t k = 0; k < 512; ++k) {
    const double x = (k + 0.5) / 512;
    const double t = fwd.evaluate(std::vector<double>{x})[0];
    CHECK(std::abs(t - gt.profile(x)) <= 2.0 / 512);
    CHECK(std::abs(back.evaluate(std::vector<double>{t})[0] - x) <= 4.0 / 512);
  }
  auto coarse = exact_density(gt, Which::target, 256);
  CHECK_THROWS_AS(estimate_density_plugin(p, coarse), InvalidArgument);
}

TEST_CASE("risk evaluator") {
  auto id = GroundTruth::make({"identity", 1, -1});
  Rng rng(1);
  MapFunction half = [](std::span<const double>, std::span<double> o) { o[0] = 0.5; };
  CHECK(l2p_risk(half, "const", id, 64, rng).risk == doctest::Approx(1.0 / 12).epsilon(1e-13));
  MapFunction c2 = [](std::span<const double>, std::span<double> o) { o[0] = 0.2; };
  CHECK(l2p_risk(c2, "const", id, 64, rng).risk == doctest::Approx(0.04 - 0.2 + 1.0 / 3).epsilon(1e-13));

  auto gt = GroundTruth::make({"sine1d", 1, -1});
  CHECK(l2p_risk(truth_of(gt), "truth", gt, 32, rng).risk == 0.0);
  auto gt3 = GroundTruth::make({"product-sine", 3, -1});
  auto r3 = l2p_risk(truth_of(gt3), "truth", gt3, 1000, rng);
  CHECK(r3.monte_carlo);
  CHECK(r3.risk <= 3 * r3.standard_error + 1e-300);
  auto tor = GroundTruth::make({"torus-sep", 2, -1});
  MapFunction idmap = [](std::span<const double> p, std::span<double> o) { o[0] = p[0]; o[1] = p[1]; };
  auto rt = l2p_risk(idmap, "id", tor, 20000, rng);
  CHECK(rt.risk == doctest::Approx(tor.w2sq()).epsilon(0.05));
}

TEST_CASE("1nn risk decreases with n") {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  double mean[2] = {0, 0};
  const std::size_t sizes[2] = {250, 1000};
  for (int s = 0; s < 2; ++s)
    for (int rep = 0; rep < 30; ++rep) {
      Rng rng(derive_seed(5, sizes[s], rep));
      auto x = gt.sample(Which::source, sizes[s], rng);
      auto y = gt.sample(Which::target, sizes[s], rng);
      auto sol = solve_discrete_ot(x, y, Metric::euclidean_sq);
      mean[s] += l2p_risk(estimate_1nn(x, y, sol.coupling), gt, 2048, rng).risk / 30;
    }
  CHECK(mean[1] < mean[0]);
}

TEST_CASE("convex least squares") {
  SUBCASE("identity data") {
    auto x = WeightedCloud::uniform(1, Domain::cube, {0.1, 0.35, 0.6, 0.8});
    auto s = solve_discrete_ot(x, x, Metric::euclidean_sq);
    auto m = estimate_convex_ls(x, x, s.coupling, 1.0);
    CHECK(m.objective() <= 1e-10);
    for (std::size_t i = 0; i < 4; ++i) CHECK(m.gradients()[i] == doctest::Approx(x.point(i)[0]).epsilon(1e-6));
    auto v = constraint_violation(m, 1.0);
    CHECK(v.convexity <= 1e-8);
    CHECK(v.lipschitz <= 1e-8);
  }
  SUBCASE("unconstrained optimum feasible") {
    auto x = WeightedCloud::uniform(2, Domain::cube, {0.1, 0.1, 0.5, 0.4, 0.9, 0.8});
    auto y = WeightedCloud::uniform(2, Domain::cube, {0.15, 0.1, 0.6, 0.45, 0.95, 0.85});
    auto s = solve_discrete_ot(x, y, Metric::euclidean_sq);
    auto m = estimate_convex_ls(x, y, s.coupling, 3.0);
    CHECK(m.objective() == doctest::Approx(0.0).scale(1).epsilon(1e-8));
  }
  SUBCASE("dominance and feasibility on sine1d") {
    auto gt = GroundTruth::make({"sine1d", 1, -1});
    Rng rng(4);
    auto x = gt.sample(Which::source, 100, rng);
    auto y = gt.sample(Which::target, 100, rng);
    auto s = solve_discrete_ot(x, y, Metric::euclidean_sq);
    auto m = estimate_convex_ls(x, y, s.coupling, gt.lambda());
    auto v = constraint_violation(m, gt.lambda());
    CHECK(v.convexity <= 1e-8);
    CHECK(v.lipschitz <= 1e-8);
    MapFunction t0 = truth_of(gt);
    CHECK(m.objective() <= displacement_cost(s.coupling, x, y, t0) + 1e-8);
    auto json = m.to_json();
    auto back = MapEstimate::from_json(json);
    CHECK(back.evaluate(std::vector<double>{0.37})[0] == m.evaluate(std::vector<double>{0.37})[0]);
  }
  auto x = WeightedCloud::uniform(1, Domain::cube, {0.1, 0.2});
  auto s = solve_discrete_ot(x, x, Metric::euclidean_sq);
  CHECK_THROWS_AS(estimate_convex_ls(x, x, s.coupling, 0.5), InvalidArgument);
}

TEST_CASE("map estimate JSON round trip") {
  auto gt = GroundTruth::make({"torus-sep", 2, -1});
  Rng rng(2);
  auto y = gt.sample(Which::target, 30, rng);
  auto m = estimate_semidiscrete(gt, y, 16);
  auto back = MapEstimate::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.variant() == MapVariant::grid_assign);
  CHECK(back.targets() == m.targets());
  auto x = gt.sample(Which::source, 30, rng);
  auto n1 = estimate_1nn(x, y, solve_discrete_ot(x, y, Metric::torus_sq).coupling);
  auto b1 = MapEstimate::from_json(n1.to_json());
  CHECK(b1.targets() == n1.targets());
  CHECK_THROWS_AS(MapEstimate::from_json(nlohmann::json{{"variant", "nope"}}), InvalidArgument);
}
