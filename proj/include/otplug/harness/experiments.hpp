#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "otplug/harness/config.hpp"
#include "otplug/inference/inference.hpp"

namespace otplug {

/// Runs body(k) for k in [0, count) on `threads` workers. Tasks are handed
/// out in index order; the exception of the lowest failing index, if any,
/// is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

/// %.17g, or empty for NaN.
std::string format_double(double v);

class Kernel;

/// Plugin measures for a pair of samples: "empirical", "haar" (level and
/// grid tuned from alpha and n) or "kernel" (torus only; order from alpha,
/// built on demand when `kernel` is null). grid_m = 0 picks the smallest M
/// with M^d >= 10 min(n, m).
std::pair<PluginMeasure, PluginMeasure> plugin_measures(const std::string& plugin, const WeightedCloud& x,
                                                        const WeightedCloud& y, double alpha, std::size_t grid_m,
                                                        const Kernel* kernel = nullptr);

/// The two density estimates behind a "haar" or "kernel" plugin, tuned as
/// in plugin_measures.
std::pair<DensityEstimate, DensityEstimate> density_estimates(const std::string& kind, const WeightedCloud& x,
                                                             const WeightedCloud& y, double alpha, std::size_t grid_m,
                                                             const Kernel* kernel = nullptr);

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

struct RateRow {
  std::string estimator;
  std::size_t d = 0;
  double alpha = kUnset;
  std::size_t n = 0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  double risk_l2p = kUnset;
  double w2sq_hat = kUnset;
  double w2sq_true = kUnset;
  double delta_nm = kUnset;
  double runtime_ms = kUnset;
};

struct RatePoint {
  std::size_t n = 0;
  double mean_risk = 0.0;
  double standard_error = 0.0;
  std::size_t reps = 0;
};

/// OLS fit of log2(mean) on log2(n). `degenerate` when some mean lies below
/// the risk floor 1e-12, in which case slope and slope_se are NaN.
struct SlopeFit {
  double slope = kUnset;
  double slope_se = kUnset;
  bool degenerate = false;
};

SlopeFit fit_slope(const std::vector<double>& n, const std::vector<double>& mean, double floor = 1e-12);

struct RateResult {
  std::string estimator;
  std::vector<RateRow> rows;
  std::vector<RatePoint> points;
  SlopeFit fit;
  double target_exponent = 0.0;
};

/// Estimators: "semidiscrete" (one-sample, known P, grid of
/// ceil((10n)^{1/d}) cells per axis unless grid_m is set), "1nn" and
/// "convex-ls" (two-sample), "haar" and "kernel" (density plugins; kernel
/// needs a torus family, both need alpha).
RateResult run_rates(const ExperimentConfig& config);
std::string rates_csv(const RateResult& result);
std::string rates_summary_csv(const RateResult& result);
nlohmann::json slopes_json(const RateResult& result);

struct CoverageRow {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  double w2sq_hat = 0.0;
  double w2sq_true = 0.0;
  double sigma_pooled_sq = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool covered = false;
};

struct CoveragePoint {
  std::size_t n = 0;
  std::size_t m = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  std::size_t reps = 0;
};

struct CoverageResult {
  std::string estimator;
  double level = 0.95;
  std::vector<CoverageRow> rows;
  std::vector<CoveragePoint> points;
};

/// Two-sample interval per replication with the plugin given by
/// `estimator` (empirical, haar, kernel). Throws ConfigError for a
/// degenerate (P = Q) family or a one-sample m_rule.
CoverageResult run_coverage(const ExperimentConfig& config);
std::string coverage_csv(const CoverageResult& result);
nlohmann::json coverage_json(const CoverageResult& result);

struct StabilityRow {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  double w2_plugin = 0.0;
  double w2_true = 0.0;
  double lin_term = 0.0;
  double lower_residual = 0.0;
  double upper_residual = 0.0;
  double lambda = 0.0;
  double lin_se = 0.0;
};

struct StabilityResult {
  std::string estimator;
  std::size_t n = 0;
  std::vector<StabilityRow> rows;
  double min_lower = 0.0;
  double min_upper = 0.0;
};

/// Sandwich audit on a one-dimensional cube family with a single n.
/// Estimators: "empirical" (Qhat = Q_n), "haar" (level from alpha),
/// "semidiscrete" (grid_m, default 4096), "exact" (Q at grid_m bins) and
/// "two-sample" (Phat = P_n, Qhat = Q_m).
StabilityResult run_stability(const ExperimentConfig& config);
std::string stability_csv(const StabilityResult& result);
nlohmann::json stability_json(const StabilityResult& result);

}  // namespace otplug
