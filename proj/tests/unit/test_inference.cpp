#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "otplug/core/error.hpp"
#include "otplug/core/ground_truth.hpp"
#include "otplug/inference/inference.hpp"
#include "otplug/inference/oracle1d.hpp"

using namespace otplug;

namespace {

double sorted_cost(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.84) == doctest::Approx(0.994457883209753).epsilon(1e-13));
  CHECK(normal_quantile(0.5) == 0.0);
  for (double p : {1e-300, 1e-20, 1e-9, 0.001, 0.02, 0.3, 0.5 + 1e-9, 0.7, 0.9, 0.99, 0.999999}) {
    const double z = normal_quantile(p);
    CHECK(normal_cdf(z) == doctest::Approx(p).epsilon(1e-12));
    if (p >= 1e-9) CHECK(normal_quantile(1.0 - p) == doctest::Approx(-z).epsilon(1e-7));
  }
  CHECK_THROWS_AS(normal_quantile(1.5), InvalidArgument);
}

TEST_CASE("plugin w2sq") {
  Rng rng(11);
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  for (int rep = 0; rep < 5; ++rep) {
    auto x = gt.sample(Which::source, 300, rng);
    auto y = gt.sample(Which::target, 300, rng);
    auto e = plugin_w2sq(x, y);
    CHECK(e.value == doctest::Approx(sorted_cost(x.coords(), y.coords())).epsilon(1e-12));
    CHECK(plugin_w2sq(y, x).value == doctest::Approx(e.value).epsilon(1e-10));
    CHECK(plugin_w2sq(x, x).value == 0.0);
    CHECK(e.n == 300);
    CHECK(e.m == 300);
  }
  int inside = 0;
  for (int rep = 0; rep < 10; ++rep) {
    Rng r(derive_seed(77, 10000, rep));
    auto x = gt.sample(Which::source, 10000, r);
    auto y = gt.sample(Which::target, 10000, r);
    if (std::abs(plugin_w2sq(x, y).value - 0.02) <= 0.005) ++inside;
  }
  CHECK(inside >= 8);

  auto p = exact_density(gt, Which::source, 128), q = exact_density(gt, Which::target, 128);
  auto dens = plugin_w2sq(p, q, 0, 0);
  CHECK(dens.plugin == PluginKind::exact_oracle);
  CHECK(dens.grid_m == 128);
  CHECK(dens.value == doctest::Approx(0.02).epsilon(2e-2));
  CHECK_THROWS_AS(plugin_w2sq(p, exact_density(gt, Which::target, 64)), InvalidArgument);
  auto tor = GroundTruth::make({"torus-sep", 1, -1});
  CHECK_THROWS_AS(plugin_w2sq(gt.sample(Which::source, 3, rng), tor.sample(Which::source, 3, rng)), InvalidArgument);
}

TEST_CASE("potentials") {
  Rng rng(5);
  auto gt = GroundTruth::make({"product-sine", 2, -1});
  auto x = gt.sample(Which::source, 10, rng);
  auto y = gt.sample(Which::target, 10, rng);
  auto solve = plugin_solve(PluginMeasure::empirical(x), PluginMeasure::empirical(y));
  auto pot = extract_potentials(solve);
  CHECK(*std::max_element(pot.phi.begin(), pot.phi.end()) == 0.0);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      CHECK(pot.phi[i] + pot.psi[j] <= squared_cost(x.point(i), y.point(j), Domain::cube) + 1e-9);
  for (const auto& e : solve.solution.coupling.entries)
    CHECK(pot.phi[e.i] + pot.psi[e.j] == doctest::Approx(squared_cost(x.point(e.i), y.point(e.j), Domain::cube)).epsilon(1e-12));
  // c-transform extensions agree with the duals at sample points.
  for (std::size_t j = 0; j < 10; ++j) CHECK(pot.psi_at(y.point(j)) == doctest::Approx(pot.psi[j]).epsilon(1e-12));
  for (std::size_t i = 0; i < 10; ++i) CHECK(pot.phi_at(x.point(i)) == doctest::Approx(pot.phi[i]).epsilon(1e-12));

  // Identical clouds: zero cost and psi = -phi on the diagonal.
  auto same = plugin_solve(PluginMeasure::empirical(x), PluginMeasure::empirical(x));
  auto ps = extract_potentials(same);
  CHECK(same.estimate.value == 0.0);
  for (std::size_t i = 0; i < 10; ++i) CHECK(ps.phi[i] + ps.psi[i] == doctest::Approx(0.0).epsilon(1e-12));
  WeightedCloud one(1, Domain::cube, {0.3}, {1.0});
  auto single = extract_potentials(plugin_solve(PluginMeasure::empirical(one), PluginMeasure::empirical(one)));
  CHECK(single.phi[0] == 0.0);
  CHECK(single.psi[0] == 0.0);

  auto line = GroundTruth::make({"sine1d", 1, -1});
  Rng r2(9);
  auto xs = line.sample(Which::source, 2000, r2);
  auto ys = line.sample(Which::target, 2000, r2);
  auto pl = extract_potentials(plugin_solve(PluginMeasure::empirical(xs), PluginMeasure::empirical(ys)));
  double mean = 0.0;
  for (double v : pl.phi) mean += v / 2000.0;
  const double target = -0.4 / std::numbers::pi;  // mean of phi0 minus its maximum
  const double se = std::sqrt(line.var_source_potential() / 2000.0);
  CHECK(std::abs(mean - target) <= 3 * se);
}

TEST_CASE("variance estimates") {
  std::vector<double> c(5, 2.0), d(7, -1.0);
  auto v0 = variance_estimates(c, d);
  CHECK(v0.sigma0sq == 0.0);
  CHECK(v0.sigma1sq == 0.0);
  CHECK(v0.pooled == 0.0);
  std::vector<double> a{1, 2, 4, 8}, b{0, 3, 3};
  auto v = variance_estimates(a, b);
  CHECK(v.sigma0sq == doctest::Approx(7.1875));
  CHECK(v.sigma1sq == doctest::Approx(2.0));
  CHECK(v.pooled == doctest::Approx((3 * 7.1875 + 4 * 2.0) / 7));
  std::vector<double> a5 = a;
  for (double& t : a5) t += 5;
  CHECK(variance_estimates(a5, b).sigma0sq == doctest::Approx(v.sigma0sq).epsilon(1e-14));
  CHECK_THROWS_AS(variance_estimates(std::vector<double>{1.0}, b), InvalidArgument);

  auto gt = GroundTruth::make({"sine1d", 1, -1});
  std::vector<double> s0;
  for (int rep = 0; rep < 5; ++rep) {
    Rng r(derive_seed(3, 4000, rep));
    auto x = gt.sample(Which::source, 4000, r);
    auto y = gt.sample(Which::target, 4000, r);
    auto pot = extract_potentials(plugin_solve(PluginMeasure::empirical(x), PluginMeasure::empirical(y)));
    s0.push_back(variance_estimates(pot.phi, pot.psi).sigma0sq);
  }
  std::sort(s0.begin(), s0.end());
  CHECK(s0[2] == doctest::Approx(0.0081057).epsilon(0.2));
}

TEST_CASE("confidence interval") {
  W2Estimate w{0.02, PluginKind::empirical, 2000, 2000, 0};
  VarianceEstimates var;
  var.sigma0sq = var.sigma1sq = var.pooled = 0.09 * 0.09;
  var.n = var.m = 2000;
  auto ci = confidence_interval(w, var, 0.05);
  CHECK(ci.half_width == doctest::Approx(1.959964 * 0.09 * std::sqrt(4000.0 / 4e6)).epsilon(1e-6));
  CHECK(ci.half_width == doctest::Approx(0.005577).epsilon(1e-3));
  auto wide = confidence_interval(w, var, 0.32);
  CHECK(wide.half_width / ci.half_width == doctest::Approx(0.99446 / 1.95996).epsilon(1e-5));
  CHECK(confidence_interval(w, var, 1.0).half_width == 0.0);
  VarianceEstimates zero;
  auto deg = confidence_interval(w, zero, 0.05);
  CHECK(deg.lo() == deg.hi());
  CHECK(deg.contains(0.02));
  W2Estimate one{0.02, PluginKind::empirical, 400, 0, 0};
  CHECK(confidence_interval(one, var, 0.05).half_width == doctest::Approx(0.09 * normal_quantile(0.975) / 20));
  CHECK_THROWS_AS(confidence_interval(w, var, 0.0), InvalidArgument);
  auto j = ci_to_json(ci, w, var);
  for (const char* k : {"w2sq", "sigma0sq", "sigma1sq", "sigma_pooled_sq", "level", "lo", "hi", "n", "m", "plugin"})
    CHECK(j.contains(k));
  CHECK(j.size() == 10);
}

TEST_CASE("quantile oracles") {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  Rng rng(21);
  auto x = gt.sample(Which::source, 137, rng);
  auto y = gt.sample(Which::target, 137, rng);
  CHECK(w2sq_1d(Quantile1d::atoms(x), Quantile1d::atoms(y)) ==
        doctest::Approx(sorted_cost(x.coords(), y.coords())).epsilon(1e-12));

  WeightedCloud a(1, Domain::cube, {0.1, 0.5, 0.9}, {0.2, 0.3, 0.5});
  WeightedCloud b(1, Domain::cube, {0.3, 0.8}, {0.6, 0.4});
  CHECK(w2sq_1d(Quantile1d::atoms(a), Quantile1d::atoms(b)) ==
        doctest::Approx(solve_discrete_ot(a, b, Metric::euclidean_sq).coupling.cost).epsilon(1e-12));

  auto uni = Quantile1d::smooth([](double u) { return u; });
  std::vector<double> flat(16, 1.0 / 16);
  CHECK(w2sq_1d(Quantile1d::histogram(flat), uni) == doctest::Approx(0.0).scale(1).epsilon(1e-15));
  CHECK(w2sq_1d(uni, Quantile1d::smooth([](double) { return 0.5; })) == doctest::Approx(1.0 / 12).epsilon(1e-13));
  auto tq = Quantile1d::smooth([&gt](double u) { return gt.profile(u); });
  CHECK(w2sq_1d(uni, tq) == doctest::Approx(gt.w2sq()).epsilon(1e-12));
  std::vector<double> masses{0.5, 0.0, 0.5};
  auto h = Quantile1d::histogram(masses);
  CHECK(h(0.25) == doctest::Approx(1.0 / 6));
  CHECK(h(0.75) == doctest::Approx(2.0 / 3 + 1.0 / 6));
  CHECK(h.expect([](double v) { return v; }) == doctest::Approx(0.5));
}

TEST_CASE("stability sandwich oracles") {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  auto exact = one_sample_sandwich(gt, Quantile1d::smooth([&gt](double u) { return gt.profile(u); }), gt.lambda());
  CHECK(std::abs(exact.lower_residual) <= 1e-13);
  CHECK(std::abs(exact.upper_residual) <= 1e-13);
  for (int rep = 0; rep < 5; ++rep) {
    Rng r(derive_seed(4, 500, rep));
    auto y = gt.sample(Which::target, 500, r);
    auto t = one_sample_sandwich(gt, Quantile1d::atoms(y), gt.lambda());
    CHECK(t.lower_residual >= -1e-12);
    CHECK(t.upper_residual >= -1e-12);
    if (rep == 0)
      CHECK(t.w2_plugin == doctest::Approx(plugin_w2sq(grid(1, 4096, Domain::cube), y).value).epsilon(1e-4));
    auto x = gt.sample(Which::source, 500, r);
    auto two = two_sample_sandwich(gt, x, y, gt.lambda());
    CHECK(two.w2_plugin == doctest::Approx(plugin_w2sq(x, y).value).epsilon(1e-12));
    CHECK(two.lower_residual >= -1e-12);
    CHECK(two.upper_residual >= 0.0);
    CHECK(two.lin_se > 0.0);
  }
  Rng r(8);
  auto y = gt.sample(Which::target, 200, r);
  auto sd = semidiscrete_sandwich(gt, y, 4096, gt.lambda());
  auto ex = one_sample_sandwich(gt, Quantile1d::atoms(y), gt.lambda());
  CHECK(sd.w2_plugin == doctest::Approx(ex.w2_plugin).epsilon(1e-4));
  CHECK(sd.lower_residual >= -1e-3);
  CHECK(sd.upper_residual >= -1e-3);
  CHECK_THROWS_AS(one_sample_sandwich(GroundTruth::make({"product-sine", 2, -1}), Quantile1d::atoms(y), 2.0),
                  InvalidArgument);
}
