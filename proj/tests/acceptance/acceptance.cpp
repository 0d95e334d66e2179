// Acceptance checks. Each criterion prints one line:
//   PASS|FAIL <k> <name>: <measurements> runtime=<s>s budget=<s>s

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "otplug/core/ground_truth.hpp"
#include "otplug/density/density.hpp"
#include "otplug/density/kernel.hpp"
#include "otplug/harness/experiments.hpp"
#include "otplug/inference/inference.hpp"
#include "otplug/inference/oracle1d.hpp"
#include "otplug/map/map_estimate.hpp"
#include "otplug/ot/discrete_ot.hpp"

using namespace otplug;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) { return fmt("%.6g", v); }

constexpr std::uint64_t kSeed = 20261015;

struct Streams {
  Rng x, y, eval;
  explicit Streams(std::uint64_t seed) : x(seed, 1), y(seed, 2), eval(seed, 3) {}
};

WeightedCloud random_cloud(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> c(n * d);
  for (auto& v : c) v = rng.uniform();
  return WeightedCloud::uniform(d, Domain::cube, std::move(c));
}

// 1. network simplex against brute force over permutations
Outcome discrete_exactness() {
  Rng rng(kSeed, 11);
  double worst_cost = 0.0, worst_gap = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 7);
    const std::size_t d = 1 + static_cast<std::size_t>(inst % 3);
    auto x = random_cloud(n, d, rng);
    auto y = random_cloud(n, d, rng);
    auto s = solve_discrete_ot(x, y, Metric::euclidean_sq);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += squared_cost(x.point(i), y.point(perm[i]), Domain::cube);
      best = std::min(best, c / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    worst_cost = std::max(worst_cost, std::abs(s.coupling.cost - best));
    worst_gap = std::max(worst_gap, s.duals.gap);
  }
  return {worst_cost <= 1e-10 && worst_gap <= 1e-9,
          "max|cost-bruteforce|=" + num(worst_cost) + " max_dual_gap=" + num(worst_gap)};
}

// 2. empirical plugin against sorted matching
Outcome quantile_equivalence() {
  Rng rng(kSeed, 12);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 500);
    auto x = random_cloud(n, 1, rng);
    auto y = random_cloud(n, 1, rng);
    std::vector<double> a = x.coords(), b = y.coords();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double sorted = 0.0;
    for (std::size_t i = 0; i < n; ++i) sorted += (a[i] - b[i]) * (a[i] - b[i]);
    sorted /= static_cast<double>(n);
    worst = std::max(worst, std::abs(plugin_w2sq(x, y).value - sorted));
  }
  return {worst <= 1e-12, "max|plugin-sorted|=" + num(worst)};
}

// 3. sine1d two-sample recovery at n = m = 10^4
Outcome sine_recovery() {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  const double truth = 0.02;
  const std::size_t n = 10000;
  int inside = 0;
  double worst = 0.0;
  for (std::size_t rep = 0; rep < 50; ++rep) {
    Streams s(derive_seed(kSeed, n, rep));
    auto x = gt.sample(Which::source, n, s.x);
    auto y = gt.sample(Which::target, n, s.y);
    const double err = std::abs(plugin_w2sq(x, y).value - truth);
    worst = std::max(worst, err);
    if (err <= 0.005) ++inside;
  }
  return {inside >= 45, "within_0.005=" + std::to_string(inside) + "/50 max_err=" + num(worst) +
                            " closed_form=" + num(gt.w2sq())};
}

// 4. one-sample sandwich for three estimates of Q
Outcome sandwich() {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  const double lambda = gt.lambda();
  const std::size_t n = 500;
  double lo[3] = {INFINITY, INFINITY, INFINITY}, up[3] = {INFINITY, INFINITY, INFINITY};
  for (std::size_t rep = 0; rep < 50; ++rep) {
    Streams s(derive_seed(kSeed, n, rep));
    auto y = gt.sample(Which::target, n, s.y);
    SandwichTerms t[3] = {one_sample_sandwich(gt, Quantile1d::atoms(y), lambda),
                          one_sample_sandwich(gt, Quantile1d::histogram(haar_estimate(y, 4, 16).cell_masses()), lambda),
                          semidiscrete_sandwich(gt, y, 4096, lambda)};
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], t[k].lower_residual);
      up[k] = std::min(up[k], t[k].upper_residual);
    }
  }
  bool ok = true;
  std::string detail = "lambda=" + num(lambda);
  const char* names[3] = {"empirical", "haar_J4", "semidiscrete_M4096"};
  for (int k = 0; k < 3; ++k) {
    ok = ok && lo[k] >= -1e-3 && up[k] >= -1e-3;
    detail += std::string(" ") + names[k] + ":min_lower=" + num(lo[k]) + ",min_upper=" + num(up[k]);
  }
  return {ok, detail};
}

// 5. two-sample lower bound
Outcome two_sample_lower() {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  const std::size_t n = 500;
  int ok = 0;
  double worst = INFINITY;
  for (std::size_t rep = 0; rep < 50; ++rep) {
    Streams s(derive_seed(kSeed, n, rep));
    auto x = gt.sample(Which::source, n, s.x);
    auto y = gt.sample(Which::target, n, s.y);
    auto t = two_sample_sandwich(gt, x, y, gt.lambda());
    worst = std::min(worst, t.lower_residual / t.lin_se);
    if (t.lower_residual >= -3.0 * t.lin_se) ++ok;
  }
  return {ok >= 48, "above_-3SE=" + std::to_string(ok) + "/50 min_statistic_in_SE=" + num(worst)};
}

bool slope_in_band(const SlopeFit& f, double lo, double hi) {
  return !f.degenerate && f.slope + f.slope_se >= lo && f.slope - f.slope_se <= hi;
}

// 6. rate slopes in d = 3 and d = 5
Outcome rate_slopes(std::size_t threads) {
  struct Case {
    std::size_t d;
    std::vector<std::size_t> ns;
    double lo, hi;
  };
  const Case cases[2] = {{3, {256, 512, 1024, 2048, 4096}, -1.0, -0.40}, {5, {256, 512, 1024, 2048}, -0.65, -0.20}};
  bool ok = true;
  std::string detail;
  for (const auto& cs : cases) {
    for (const char* est : {"semidiscrete", "1nn"}) {
      ExperimentConfig c;
      c.experiment = "rates";
      c.family = {"product-sine", cs.d, -1};
      c.estimator = est;
      c.n_list = cs.ns;
      c.m_rule = std::string(est) == "semidiscrete" ? "none" : "n";
      c.reps = 30;
      c.seed = kSeed;
      c.threads = threads;
      auto r = run_rates(c);
      const bool pass = slope_in_band(r.fit, cs.lo, cs.hi);
      ok = ok && pass;
      detail += (detail.empty() ? "" : " ") + std::string("d") + std::to_string(cs.d) + "/" + est +
                ":slope=" + num(r.fit.slope) + "+-" + num(r.fit.slope_se) + (pass ? "" : "(out)");
    }
  }
  return {ok, detail};
}

// 7. smoothed plugin against empirical plugin, paired
Outcome smooth_improvement() {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  const std::size_t n = 2000, m = 1024;
  const double alpha = 8.0;
  const Kernel kernel = build_order_kernel(8);
  const double h = tune_bandwidth(n, alpha, 1, m);
  int wins = 0;
  double sum_smooth = 0.0, sum_emp = 0.0;
  for (std::size_t rep = 0; rep < 30; ++rep) {
    Streams s(derive_seed(kSeed, n, rep));
    auto x = gt.sample(Which::source, n, s.x);
    auto y = gt.sample(Which::target, n, s.y);
    auto px = kernel_estimate_reflected(x, h, kernel, m);
    auto qy = kernel_estimate_reflected(y, h, kernel, m);
    const double e_smooth = std::abs(plugin_w2sq(px, qy, n, n).value - gt.w2sq());
    const double e_emp = std::abs(plugin_w2sq(x, y).value - gt.w2sq());
    sum_smooth += e_smooth;
    sum_emp += e_emp;
    if (e_smooth <= e_emp) ++wins;
  }
  return {wins >= 24, "smooth_not_worse=" + std::to_string(wins) + "/30 h=" + num(h) +
                          " mean_abs_err_smooth=" + num(sum_smooth / 30) + " mean_abs_err_empirical=" +
                          num(sum_emp / 30)};
}

// 8. empirical measure against its dyadic projection
Outcome dyadic_bound() {
  double worst_ratio = 0.0;
  bool ok = true;
  for (std::size_t d = 1; d <= 2; ++d) {
    for (int j = 1; j <= 5; ++j) {
      const std::size_t m = std::size_t{64} << j;
      const double bound = std::sqrt(double(d)) * std::ldexp(1.0, -j) + 2.0 * std::sqrt(double(d)) / double(m);
      for (std::size_t rep = 0; rep < 20; ++rep) {
        Rng rng(derive_seed(kSeed, 200 + d, rep), 1);
        auto x = random_cloud(200, d, rng);
        auto proj = dyadic_project(x, j, m);
        auto masses = proj.cell_masses();
        auto s = solve_grid_to_cloud(d, m, Domain::cube, masses, x);
        const double w2 = std::sqrt(std::max(0.0, s.solution.coupling.cost));
        worst_ratio = std::max(worst_ratio, w2 / bound);
        ok = ok && w2 <= bound;
      }
    }
  }
  return {ok, "max_W2_over_bound=" + num(worst_ratio)};
}

// 9. potential variance at n = m = 4000
Outcome variance_consistency() {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  const std::size_t n = 4000;
  std::vector<double> s0;
  for (std::size_t rep = 0; rep < 20; ++rep) {
    Streams s(derive_seed(kSeed, n, rep));
    auto x = gt.sample(Which::source, n, s.x);
    auto y = gt.sample(Which::target, n, s.y);
    auto pot = extract_potentials(plugin_solve(PluginMeasure::empirical(x), PluginMeasure::empirical(y)));
    s0.push_back(variance_estimates(pot.phi, pot.psi).sigma0sq);
  }
  std::sort(s0.begin(), s0.end());
  const double median = 0.5 * (s0[9] + s0[10]);
  const double target = 0.0081057;
  return {std::abs(median - target) <= 0.2 * target,
          "median_sigma0sq=" + num(median) + " closed_form=" + num(gt.var_source_potential())};
}

// 10. interval coverage and width scaling
Outcome ci_coverage(std::size_t threads) {
  ExperimentConfig c;
  c.experiment = "coverage";
  c.family = {"sine1d", 1, -1};
  c.estimator = "empirical";
  c.level = 0.95;
  c.seed = kSeed;
  c.threads = threads;
  c.n_list = {2000};
  c.reps = 200;
  auto main_run = run_coverage(c);
  c.n_list = {1000, 4000};
  c.reps = 50;
  auto width_run = run_coverage(c);
  const double cov = main_run.points[0].coverage;
  const double ratio = width_run.points[1].mean_width / width_run.points[0].mean_width;
  return {cov >= 0.88 && cov <= 0.99 && ratio >= 0.4 && ratio <= 0.6,
          "coverage_n2000=" + num(cov) + " width_ratio_4000_1000=" + num(ratio)};
}

// 11. order-4 kernel certification
Outcome kernel_certification() {
  const Kernel k = build_order_kernel(4);
  double worst = 0.0;
  for (int j = 1; j <= 3; ++j) worst = std::max(worst, std::abs(k.moment(j)));
  const bool ok = std::isfinite(k.kappa()) && worst <= 1e-6 && std::abs(k.moment(0) - 1.0) <= 1e-6;
  return {ok, "kappa=" + num(k.kappa()) + " max|moment_1..3|=" + num(worst)};
}

// 12. convex least squares feasibility and dominance
Outcome convex_ls() {
  auto gt = GroundTruth::make({"sine1d", 1, -1});
  const double lambda = gt.lambda();
  const std::size_t n = 100;
  MapFunction t0 = [&gt](std::span<const double> p, std::span<double> o) { gt.map(p, o); };
  double worst_violation = 0.0, worst_excess = -INFINITY;
  for (std::size_t rep = 0; rep < 30; ++rep) {
    Streams s(derive_seed(kSeed, n, rep));
    auto x = gt.sample(Which::source, n, s.x);
    auto y = gt.sample(Which::target, n, s.y);
    auto sol = solve_discrete_ot(x, y, Metric::euclidean_sq);
    auto est = estimate_convex_ls(x, y, sol.coupling, lambda);
    auto v = constraint_violation(est, lambda);
    worst_violation = std::max({worst_violation, v.convexity, v.lipschitz});
    worst_excess = std::max(worst_excess, est.objective() - displacement_cost(sol.coupling, x, y, t0));
  }
  return {worst_violation <= 1e-8 && worst_excess <= 1e-8,
          "max_violation=" + num(worst_violation) + " max(objective-delta_nm)=" + num(worst_excess)};
}

// 13. outputs independent of the thread count
Outcome determinism() {
  std::vector<std::pair<std::string, std::function<std::string(std::size_t)>>> runs;
  runs.emplace_back("rates", [](std::size_t t) {
    ExperimentConfig c;
    c.experiment = "rates";
    c.family = {"product-sine", 2, -1};
    c.estimator = "1nn";
    c.n_list = {64, 128, 256};
    c.reps = 8;
    c.seed = kSeed;
    c.threads = t;
    const auto r = run_rates(c);
    return rates_csv(r) + rates_summary_csv(r);
  });
  runs.emplace_back("rates-semidiscrete", [](std::size_t t) {
    ExperimentConfig c;
    c.experiment = "rates";
    c.family = {"sine1d", 1, -1};
    c.estimator = "semidiscrete";
    c.m_rule = "none";
    c.n_list = {100, 200, 400};
    c.reps = 8;
    c.seed = kSeed;
    c.threads = t;
    return rates_csv(run_rates(c));
  });
  runs.emplace_back("coverage", [](std::size_t t) {
    ExperimentConfig c;
    c.experiment = "coverage";
    c.family = {"sine1d", 1, -1};
    c.estimator = "empirical";
    c.n_list = {200, 400};
    c.reps = 12;
    c.seed = kSeed;
    c.threads = t;
    return coverage_csv(run_coverage(c));
  });
  runs.emplace_back("stability", [](std::size_t t) {
    ExperimentConfig c;
    c.experiment = "stability";
    c.family = {"sine1d", 1, -1};
    c.estimator = "two-sample";
    c.n_list = {300};
    c.reps = 12;
    c.seed = kSeed;
    c.threads = t;
    return stability_csv(run_stability(c));
  });
  bool ok = true;
  std::string detail;
  for (auto& [name, run] : runs) {
    const bool same = run(1) == run(4);
    ok = ok && same;
    detail += (detail.empty() ? "" : " ") + name + (same ? ":identical" : ":differs");
  }
  return {ok, detail};
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome(std::size_t)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> chosen;
  std::vector<int> known;
  std::size_t threads = 1;
  app.add_option("--criterion", chosen, "criteria to run (default all)")->check(CLI::Range(1, 13));
  app.add_option("--known-failure", known,
                 "criteria whose FAIL is reported but does not change the exit status")
      ->check(CLI::Range(1, 13));
  app.add_option("--threads", threads, "worker threads for experiment runs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::map<int, Criterion> all = {
      {1, {"discrete-solver-exactness", 10, [](std::size_t) { return discrete_exactness(); }}},
      {2, {"quantile-equivalence", 30, [](std::size_t) { return quantile_equivalence(); }}},
      {3, {"sine1d-w2-recovery", 600, [](std::size_t) { return sine_recovery(); }}},
      {4, {"stability-sandwich", 300, [](std::size_t) { return sandwich(); }}},
      {5, {"two-sample-lower-bound", 300, [](std::size_t) { return two_sample_lower(); }}},
      {6, {"rate-slopes", 3600, rate_slopes}},
      {7, {"smooth-plugin-improvement", 900, [](std::size_t) { return smooth_improvement(); }}},
      {8, {"dyadic-projection-bound", 300, [](std::size_t) { return dyadic_bound(); }}},
      {9, {"variance-consistency", 600, [](std::size_t) { return variance_consistency(); }}},
      {10, {"ci-coverage", 1800, ci_coverage}},
      {11, {"kernel-certification", 5, [](std::size_t) { return kernel_certification(); }}},
      {12, {"convex-ls-feasibility", 600, [](std::size_t) { return convex_ls(); }}},
      {13, {"determinism", 600, [](std::size_t) { return determinism(); }}},
  };
  if (chosen.empty())
    for (const auto& [k, c] : all) chosen.push_back(k);
  const std::set<int> tolerated(known.begin(), known.end());

  int status = 0;
  for (int k : chosen) {
    const Criterion& c = all.at(k);
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(threads);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %d %s: %s runtime=%.1fs budget=%.0fs\n", o.pass ? "PASS" : "FAIL", k, c.name, o.detail.c_str(),
                secs, c.budget_s);
    std::fflush(stdout);
    if (!o.pass && !tolerated.count(k)) status = 1;
  }
  return status;
}
