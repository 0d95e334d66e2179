#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "otplug/core/geometry.hpp"
#include "otplug/density/density.hpp"
#include "otplug/ot/discrete_ot.hpp"

namespace otplug {

enum class PluginKind { empirical, haar, kernel, exact_oracle };

std::string to_string(PluginKind k);
PluginKind plugin_kind_from_string(const std::string& s);

/// A measure entering a plugin estimate: a weighted cloud plus where it
/// came from. Density estimates enter through their weighted grid (zero
/// cells dropped).
struct PluginMeasure {
  WeightedCloud cloud;
  PluginKind kind = PluginKind::empirical;
  /// Number of observations behind the measure (0 for exact).
  std::size_t sample_size = 0;
  /// Grid resolution for density-based measures.
  std::size_t grid_m = 0;

  static PluginMeasure empirical(WeightedCloud sample);
  static PluginMeasure density(const DensityEstimate& estimate, std::size_t sample_size);
};

struct W2Estimate {
  double value = 0.0;
  PluginKind plugin = PluginKind::empirical;
  std::size_t n = 0;
  /// 0 in one-sample settings.
  std::size_t m = 0;
  std::size_t grid_m = 0;

  nlohmann::json to_json() const;
};

struct PluginSolve {
  W2Estimate estimate;
  OtSolution solution;
  WeightedCloud source;
  WeightedCloud target;
};

/// Exact discrete OT between the two plugin measures, with the metric of
/// their common domain. The estimate's kind is that of the source measure.
PluginSolve plugin_solve(const PluginMeasure& phat, const PluginMeasure& qhat, const SolverOptions& options = {});

W2Estimate plugin_w2sq(const WeightedCloud& phat, const WeightedCloud& qhat);
W2Estimate plugin_w2sq(const DensityEstimate& phat, const DensityEstimate& qhat, std::size_t n = 0,
                       std::size_t m = 0);

/// Kantorovich potentials of a plugin solve: phi on the source points, psi
/// on the target points (phi_i + psi_j <= c_ij, max phi = 0), and their
/// c-transform extensions to arbitrary points.
struct Potentials {
  std::vector<double> phi;
  std::vector<double> psi;
  std::function<double(std::span<const double>)> phi_at;
  std::function<double(std::span<const double>)> psi_at;
};

Potentials extract_potentials(const OtSolution& solution, const WeightedCloud& x, const WeightedCloud& y);
Potentials extract_potentials(const PluginSolve& solve);

struct VarianceEstimates {
  double sigma0sq = 0.0;
  double sigma1sq = 0.0;
  /// (m sigma0^2 + n sigma1^2) / (n + m).
  double pooled = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;
};

/// Unweighted sample variances of the potentials over the sample points.
/// Throws InvalidArgument if either list has fewer than two values.
VarianceEstimates variance_estimates(std::span<const double> phi, std::span<const double> psi);

/// Weighted variances, for potentials living on weighted grids. `n`, `m`
/// are the underlying sample sizes used by the pooled combination.
VarianceEstimates variance_estimates(std::span<const double> phi, std::span<const double> phi_weights,
                                     std::span<const double> psi, std::span<const double> psi_weights,
                                     std::size_t n, std::size_t m);

struct ConfidenceInterval {
  double center = 0.0;
  double half_width = 0.0;
  double level = 0.95;
  std::size_t n = 0;
  std::size_t m = 0;
  double lo() const { return center - half_width; }
  double hi() const { return center + half_width; }
  bool contains(double v) const { return lo() <= v && v <= hi(); }
};

/// Standard normal quantile (Wichura's AS241, relative error about 1e-16).
double normal_quantile(double p);

/// Two-sample interval center +- sigma z sqrt((n+m)/(nm)), with z the
/// upper delta/2 normal quantile. With m = 0 the one-sample width
/// sigma0 z / sqrt(n) is used. Throws InvalidArgument unless
/// 0 < delta <= 1 and the sizes are at least 2.
ConfidenceInterval confidence_interval(const W2Estimate& w2, const VarianceEstimates& var, double delta);

/// {w2sq, sigma0sq, sigma1sq, sigma_pooled_sq, level, lo, hi, n, m, plugin}.
nlohmann::json ci_to_json(const ConfidenceInterval& ci, const W2Estimate& w2, const VarianceEstimates& var);

}  // namespace otplug
