#include "otplug/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "otplug/core/error.hpp"
#include "otplug/core/ground_truth.hpp"
#include "otplug/density/density.hpp"
#include "otplug/density/kernel.hpp"
#include "otplug/inference/inference.hpp"
#include "otplug/inference/oracle1d.hpp"
#include "otplug/map/map_estimate.hpp"

namespace otplug {

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= count) return;
      try {
        body(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (k < failed_at) {
          failed_at = k;
          failure = std::current_exception();
        }
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SlopeFit fit_slope(const std::vector<double>& n, const std::vector<double>& mean, double floor) {
  if (n.size() != mean.size()) throw InvalidArgument("fit_slope: length mismatch");
  std::vector<double> xs(n);
  std::sort(xs.begin(), xs.end());
  if (std::unique(xs.begin(), xs.end()) - xs.begin() < 3) throw InvalidArgument("fit_slope: need three distinct n");
  SlopeFit fit;
  for (double m : mean)
    if (!(m >= floor)) {
      fit.degenerate = true;
      return fit;
    }
  const std::size_t k = n.size();
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    sx += std::log2(n[i]);
    sy += std::log2(mean[i]);
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double dx = std::log2(n[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log2(mean[i]) - my);
  }
  fit.slope = sxy / sxx;
  double rss = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = std::log2(mean[i]) - my - fit.slope * (std::log2(n[i]) - mx);
    rss += r * r;
  }
  fit.slope_se = std::sqrt(rss / static_cast<double>(k - 2) / sxx);
  return fit;
}

namespace {

constexpr std::size_t kQuadraturePanels = 256;
constexpr std::size_t kMonteCarloDraws = 4096;

struct Streams {
  Rng x, y, eval;
  explicit Streams(std::uint64_t seed) : x(seed, 1), y(seed, 2), eval(seed, 3) {}
};

std::size_t risk_evaluations(const GroundTruth& gt) {
  return gt.dim() == 1 && gt.domain() == Domain::cube ? kQuadraturePanels : kMonteCarloDraws;
}

// Smallest M with M^d >= 10 n.
std::size_t default_grid(std::size_t n, std::size_t d) {
  auto m = static_cast<std::size_t>(std::ceil(std::pow(10.0 * static_cast<double>(n), 1.0 / static_cast<double>(d))));
  while (m > 1 && checked_pow(m - 1, d, SIZE_MAX / 2) >= 10 * n) --m;
  while (checked_pow(m, d, SIZE_MAX / 2) < 10 * n) ++m;
  return m;
}

double require_alpha(const ExperimentConfig& c) {
  if (!(c.alpha > 1.0)) throw ConfigError("estimator '" + c.estimator + "' needs alpha > 1");
  return c.alpha;
}

int kernel_order(double alpha) {
  const int z = 2 * static_cast<int>(std::ceil(alpha / 2.0));
  return std::clamp(z, 2, 8);
}

double lambda_of(const ExperimentConfig& c, const GroundTruth& gt) { return c.lambda > 0.0 ? c.lambda : gt.lambda(); }

MapFunction truth(const GroundTruth& gt) {
  return [&gt](std::span<const double> p, std::span<double> o) { gt.map(p, o); };
}

using DensityPair = std::pair<DensityEstimate, DensityEstimate>;

DensityPair density_pair(const std::string& kind, double alpha, std::size_t grid, const GroundTruth* gt,
                         const WeightedCloud& x, const WeightedCloud& y, const Kernel* kernel) {
  const std::size_t d = x.dim(), n = x.size(), m = y.size();
  if (!(alpha > 1.0)) throw ConfigError("estimator '" + kind + "' needs alpha > 1");
  if (kind == "haar") {
    const int jp = tune_level(n, alpha, d), jq = tune_level(m, alpha, d);
    const std::size_t cells = std::size_t{1} << std::max(jp, jq);
    std::size_t grid_m = grid ? grid : default_grid(std::min(n, m), d);
    grid_m = cells * ((grid_m + cells - 1) / cells);
    return {haar_estimate(x, jp, grid_m), haar_estimate(y, jq, grid_m)};
  }
  if (x.domain() != Domain::torus || (gt && gt->domain() != Domain::torus))
    throw ConfigError("kernel estimator needs a torus family");
  std::optional<Kernel> own;
  if (!kernel) kernel = &own.emplace(build_order_kernel(kernel_order(alpha)));
  const std::size_t grid_m = grid ? grid : default_grid(std::min(n, m), d);
  return {kernel_estimate(x, tune_bandwidth(n, alpha, d, grid_m), *kernel, grid_m),
          kernel_estimate(y, tune_bandwidth(m, alpha, d, grid_m), *kernel, grid_m)};
}

void rates_rep(const ExperimentConfig& c, const GroundTruth& gt, const Kernel* kernel, RateRow& row) {
  Streams s(row.seed);
  const std::size_t n = row.n;
  const std::size_t m = c.m_for(n);
  const std::size_t evals = risk_evaluations(gt);
  if (c.estimator == "semidiscrete") {
    auto y = gt.sample(Which::target, m ? m : n, s.y);
    const MapEstimate map = estimate_semidiscrete(gt, y, c.grid_m ? c.grid_m : default_grid(y.size(), gt.dim()));
    row.risk_l2p = l2p_risk(map, gt, evals, s.eval).risk;
    row.w2sq_hat = map.cost();
    return;
  }
  if (m == 0) throw ConfigError("estimator '" + c.estimator + "' needs two samples (m_rule)");
  auto x = gt.sample(Which::source, n, s.x);
  auto y = gt.sample(Which::target, m, s.y);
  if (c.estimator == "1nn" || c.estimator == "convex-ls") {
    const OtSolution sol = solve_discrete_ot(x, y, metric_for(gt.domain()));
    const MapEstimate map = c.estimator == "1nn" ? estimate_1nn(x, y, sol.coupling)
                                                 : estimate_convex_ls(x, y, sol.coupling, lambda_of(c, gt));
    row.risk_l2p = l2p_risk(map, gt, evals, s.eval).risk;
    row.w2sq_hat = sol.coupling.cost;
    row.delta_nm = displacement_cost(sol.coupling, x, y, truth(gt));
    return;
  }
  auto dens = density_pair(c.estimator, c.alpha, c.grid_m, &gt, x, y, kernel);
  const MapEstimate map = estimate_density_plugin(dens.first, dens.second);
  row.risk_l2p = l2p_risk(map, gt, evals, s.eval).risk;
  row.w2sq_hat = map.cost();
}

void check_estimator(const std::string& e, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (e == a) return;
  throw ConfigError("unknown estimator '" + e + "' for this experiment");
}

std::string join_csv(std::initializer_list<std::string> fields) {
  std::string s;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) s += ',';
    s += f;
    first = false;
  }
  s += '\n';
  return s;
}

}  // namespace

std::pair<DensityEstimate, DensityEstimate> density_estimates(const std::string& kind, const WeightedCloud& x,
                                                             const WeightedCloud& y, double alpha, std::size_t grid_m,
                                                             const Kernel* kernel) {
  if (kind != "haar" && kind != "kernel") throw ConfigError("unknown density estimator '" + kind + "'");
  return density_pair(kind, alpha, grid_m, nullptr, x, y, kernel);
}

std::pair<PluginMeasure, PluginMeasure> plugin_measures(const std::string& plugin, const WeightedCloud& x,
                                                        const WeightedCloud& y, double alpha, std::size_t grid_m,
                                                        const Kernel* kernel) {
  if (plugin == "empirical") return {PluginMeasure::empirical(x), PluginMeasure::empirical(y)};
  if (plugin != "haar" && plugin != "kernel") throw ConfigError("unknown plugin '" + plugin + "'");
  auto dens = density_pair(plugin, alpha, grid_m, nullptr, x, y, kernel);
  return {PluginMeasure::density(dens.first, x.size()), PluginMeasure::density(dens.second, y.size())};
}

RateResult run_rates(const ExperimentConfig& c) {
  check_estimator(c.estimator, {"semidiscrete", "1nn", "convex-ls", "haar", "kernel"});
  const GroundTruth gt = GroundTruth::make(c.family);
  std::optional<Kernel> kernel;
  if (c.estimator == "kernel") {
    if (gt.domain() != Domain::torus) throw ConfigError("kernel estimator needs a torus family");
    kernel = build_order_kernel(kernel_order(require_alpha(c)));
  }
  if (c.estimator == "haar") require_alpha(c);
  if (c.estimator == "convex-ls" && gt.domain() != Domain::cube) throw ConfigError("convex-ls needs a cube family");

  RateResult r;
  r.estimator = c.estimator;
  for (std::size_t n : c.n_list)
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      RateRow row;
      row.estimator = c.estimator;
      row.d = gt.dim();
      row.alpha = c.alpha > 0.0 ? c.alpha : kUnset;
      row.n = n;
      row.rep = rep;
      row.seed = derive_seed(c.seed, n, rep);
      row.w2sq_true = gt.w2sq();
      r.rows.push_back(row);
    }
  const Kernel* kp = kernel ? &*kernel : nullptr;
  parallel_for(r.rows.size(), c.threads, [&](std::size_t k) {
    const auto start = std::chrono::steady_clock::now();
    rates_rep(c, gt, kp, r.rows[k]);
    if (c.timing)
      r.rows[k].runtime_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });

  std::vector<double> ns, means;
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    RatePoint p;
    p.n = c.n_list[i];
    p.reps = c.reps;
    double sum = 0, sq = 0;
    for (std::size_t rep = 0; rep < c.reps; ++rep) sum += r.rows[i * c.reps + rep].risk_l2p;
    p.mean_risk = sum / c.reps;
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      const double dv = r.rows[i * c.reps + rep].risk_l2p - p.mean_risk;
      sq += dv * dv;
    }
    p.standard_error = c.reps > 1 ? std::sqrt(sq / (c.reps - 1) / c.reps) : 0.0;
    r.points.push_back(p);
    ns.push_back(static_cast<double>(p.n));
    means.push_back(p.mean_risk);
  }
  if (ns.size() >= 3) r.fit = fit_slope(ns, means);
  const double alpha = (c.estimator == "haar" || c.estimator == "kernel") ? c.alpha : 1.0;
  const double d = static_cast<double>(gt.dim());
  r.target_exponent = std::max(-2.0 * alpha / (2.0 * (alpha - 1.0) + d), -1.0);
  return r;
}

std::string rates_csv(const RateResult& r) {
  std::string s = "estimator,d,alpha,n,rep,seed,risk_l2p,w2sq_hat,w2sq_true,delta_nm,runtime_ms\n";
  for (const auto& row : r.rows)
    s += join_csv({row.estimator, std::to_string(row.d), format_double(row.alpha), std::to_string(row.n),
                   std::to_string(row.rep), std::to_string(row.seed), format_double(row.risk_l2p),
                   format_double(row.w2sq_hat), format_double(row.w2sq_true), format_double(row.delta_nm),
                   format_double(row.runtime_ms)});
  return s;
}

std::string rates_summary_csv(const RateResult& r) {
  std::string s = "estimator,n,reps,mean_risk,standard_error\n";
  for (const auto& p : r.points)
    s += join_csv({r.estimator, std::to_string(p.n), std::to_string(p.reps), format_double(p.mean_risk),
                   format_double(p.standard_error)});
  return s;
}

nlohmann::json slopes_json(const RateResult& r) {
  nlohmann::json j{{"estimator", r.estimator}, {"target_exponent", r.target_exponent}, {"degenerate", r.fit.degenerate}};
  j["slope"] = std::isnan(r.fit.slope) ? nlohmann::json(nullptr) : nlohmann::json(r.fit.slope);
  j["slope_se"] = std::isnan(r.fit.slope_se) ? nlohmann::json(nullptr) : nlohmann::json(r.fit.slope_se);
  j["n_range"] = r.points.empty() ? nlohmann::json::array()
                                  : nlohmann::json::array({r.points.front().n, r.points.back().n});
  return j;
}

CoverageResult run_coverage(const ExperimentConfig& c) {
  check_estimator(c.estimator, {"empirical", "haar", "kernel"});
  const GroundTruth gt = GroundTruth::make(c.family);
  if (gt.degenerate()) throw ConfigError("CLT degenerate: coverage needs P != Q");
  if (c.one_sample()) throw ConfigError("coverage needs two samples (m_rule)");
  std::optional<Kernel> kernel;
  if (c.estimator == "kernel") {
    if (gt.domain() != Domain::torus) throw ConfigError("kernel estimator needs a torus family");
    kernel = build_order_kernel(kernel_order(require_alpha(c)));
  }
  const double delta = 1.0 - c.level;
  CoverageResult r;
  r.estimator = c.estimator;
  r.level = c.level;
  for (std::size_t n : c.n_list)
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      CoverageRow row;
      row.n = n;
      row.m = c.m_for(n);
      row.rep = rep;
      row.seed = derive_seed(c.seed, n, rep);
      row.w2sq_true = gt.w2sq();
      r.rows.push_back(row);
    }
  parallel_for(r.rows.size(), c.threads, [&](std::size_t k) {
    CoverageRow& row = r.rows[k];
    Streams s(row.seed);
    auto x = gt.sample(Which::source, row.n, s.x);
    auto y = gt.sample(Which::target, row.m, s.y);
    auto [pm, qm] = plugin_measures(c.estimator, x, y, c.alpha, c.grid_m, kernel ? &*kernel : nullptr);
    const PluginSolve solve = plugin_solve(pm, qm);
    const Potentials pot = extract_potentials(solve);
    const VarianceEstimates var = variance_estimates(pot.phi, solve.source.weights(), pot.psi,
                                                     solve.target.weights(), row.n, row.m);
    const ConfidenceInterval ci = confidence_interval(solve.estimate, var, delta);
    row.w2sq_hat = solve.estimate.value;
    row.sigma_pooled_sq = var.pooled;
    row.lo = ci.lo();
    row.hi = ci.hi();
    row.covered = delta < 1.0 && ci.contains(gt.w2sq());
  });
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    CoveragePoint p;
    p.n = c.n_list[i];
    p.m = c.m_for(p.n);
    p.reps = c.reps;
    double hits = 0, width = 0;
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      const auto& row = r.rows[i * c.reps + rep];
      hits += row.covered ? 1.0 : 0.0;
      width += row.hi - row.lo;
    }
    p.coverage = hits / c.reps;
    p.mean_width = width / c.reps;
    r.points.push_back(p);
  }
  return r;
}

std::string coverage_csv(const CoverageResult& r) {
  std::string s = "estimator,n,m,rep,seed,w2sq_hat,w2sq_true,sigma_pooled_sq,lo,hi,covered\n";
  for (const auto& row : r.rows)
    s += join_csv({r.estimator, std::to_string(row.n), std::to_string(row.m), std::to_string(row.rep),
                   std::to_string(row.seed), format_double(row.w2sq_hat), format_double(row.w2sq_true),
                   format_double(row.sigma_pooled_sq), format_double(row.lo), format_double(row.hi),
                   row.covered ? "1" : "0"});
  return s;
}

nlohmann::json coverage_json(const CoverageResult& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points)
    pts.push_back({{"n", p.n}, {"m", p.m}, {"coverage", p.coverage}, {"mean_width", p.mean_width}, {"reps", p.reps}});
  return {{"estimator", r.estimator}, {"level", r.level}, {"points", pts}};
}

StabilityResult run_stability(const ExperimentConfig& c) {
  check_estimator(c.estimator, {"empirical", "haar", "semidiscrete", "exact", "two-sample"});
  const GroundTruth gt = GroundTruth::make(c.family);
  if (gt.dim() != 1 || gt.domain() != Domain::cube) throw ConfigError("stability needs a one-dimensional cube family");
  if (c.n_list.size() != 1) throw ConfigError("stability takes a single n");
  if (c.estimator == "haar") require_alpha(c);
  const double lambda = lambda_of(c, gt);
  StabilityResult r;
  r.estimator = c.estimator;
  r.n = c.n_list[0];
  r.rows.resize(c.reps);
  parallel_for(c.reps, c.threads, [&](std::size_t rep) {
    StabilityRow& row = r.rows[rep];
    row.rep = rep;
    row.seed = derive_seed(c.seed, r.n, rep);
    Streams s(row.seed);
    SandwichTerms t;
    if (c.estimator == "exact") {
      auto q = exact_density(gt, Which::target, c.grid_m ? c.grid_m : 4096);
      t = one_sample_sandwich(gt, Quantile1d::histogram(q.cell_masses()), lambda);
    } else if (c.estimator == "two-sample") {
      auto x = gt.sample(Which::source, r.n, s.x);
      auto y = gt.sample(Which::target, c.m_for(r.n) ? c.m_for(r.n) : r.n, s.y);
      t = two_sample_sandwich(gt, x, y, lambda);
    } else {
      auto y = gt.sample(Which::target, r.n, s.y);
      if (c.estimator == "empirical") {
        t = one_sample_sandwich(gt, Quantile1d::atoms(y), lambda);
      } else if (c.estimator == "haar") {
        const int j = tune_level(r.n, c.alpha, 1);
        auto h = haar_estimate(y, j, std::size_t{1} << j);
        t = one_sample_sandwich(gt, Quantile1d::histogram(h.cell_masses()), lambda);
      } else {
        t = semidiscrete_sandwich(gt, y, c.grid_m ? c.grid_m : 4096, lambda);
      }
    }
    row.w2_plugin = t.w2_plugin;
    row.w2_true = t.w2_true;
    row.lin_term = t.lin_term;
    row.lower_residual = t.lower_residual;
    row.upper_residual = t.upper_residual;
    row.lambda = t.lambda;
    row.lin_se = t.lin_se;
  });
  r.min_lower = r.rows[0].lower_residual;
  r.min_upper = r.rows[0].upper_residual;
  for (const auto& row : r.rows) {
    r.min_lower = std::min(r.min_lower, row.lower_residual);
    r.min_upper = std::min(r.min_upper, row.upper_residual);
  }
  return r;
}

std::string stability_csv(const StabilityResult& r) {
  std::string s = "rep,w2_plugin,w2_true,lin_term,lower_residual,upper_residual,lambda\n";
  for (const auto& row : r.rows)
    s += join_csv({std::to_string(row.rep), format_double(row.w2_plugin), format_double(row.w2_true),
                   format_double(row.lin_term), format_double(row.lower_residual), format_double(row.upper_residual),
                   format_double(row.lambda)});
  return s;
}

nlohmann::json stability_json(const StabilityResult& r) {
  std::size_t within = 0;
  for (const auto& row : r.rows)
    if (row.lower_residual >= -3.0 * row.lin_se) ++within;
  return {{"estimator", r.estimator},
          {"n", r.n},
          {"reps", r.rows.size()},
          {"min_lower_residual", r.min_lower},
          {"min_upper_residual", r.min_upper},
          {"lower_within_3se", within}};
}

}  // namespace otplug
