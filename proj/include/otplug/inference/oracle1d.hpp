#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "otplug/core/geometry.hpp"
#include "otplug/core/ground_truth.hpp"

namespace otplug {

/// A probability measure on [0,1] described by its quantile function G on
/// (0,1), together with the points where G fails to be smooth. Integrals
/// against such measures reduce to integrals over u in (0,1), split at
/// those points, which makes them exact for atoms and histograms.
class Quantile1d {
 public:
  /// Discrete measure; values need not be sorted.
  static Quantile1d atoms(std::span<const double> values, std::span<const double> weights);
  static Quantile1d atoms(const WeightedCloud& cloud);
  /// Piecewise-constant density on m equal bins of [0,1] with the given bin
  /// masses (summing to 1).
  static Quantile1d histogram(std::span<const double> masses);
  /// Smooth increasing quantile function with optional kinks.
  static Quantile1d smooth(std::function<double(double)> g, std::vector<double> kinks = {});

  double operator()(double u) const { return g_(u); }
  const std::vector<double>& breakpoints() const { return breaks_; }

  /// Integral of f against the measure.
  double expect(const std::function<double(double)>& f) const;

 private:
  std::function<double(double)> g_;
  std::vector<double> breaks_;
};

/// Squared 2-Wasserstein distance between measures on the line,
/// the integral of (G_a - G_b)^2 over (0,1).
double w2sq_1d(const Quantile1d& a, const Quantile1d& b);

/// Integral of f(u) over [0,1], split at the union of the breakpoints.
double integrate_split(const std::function<double(double)>& f, std::vector<double> breaks);

/// Terms of the stability sandwich for one replication.
///   middle = w2_plugin - w2_true - lin_term
///   lower_residual = middle - map_risk / lambda   (two-sample: middle)
///   upper_residual = lambda * plugin_error - middle
/// with plugin_error = W2^2(Qhat, Q) one-sample and
/// (W2(Phat, P) + W2(Qhat, Q))^2 two-sample.
struct SandwichTerms {
  double w2_plugin = 0.0;
  double w2_true = 0.0;
  double lin_term = 0.0;
  double map_risk = 0.0;
  double plugin_error = 0.0;
  double lower_residual = 0.0;
  double upper_residual = 0.0;
  double lambda = 0.0;
  /// Standard error of the empirical potential integrals (two-sample).
  double lin_se = 0.0;
};

/// One-sample sandwich for an estimate Qhat of Q with P known, on a
/// one-dimensional cube family. Every term is a quantile integral: the
/// optimal map from the uniform P to Qhat is G_Qhat itself.
/// Throws InvalidArgument unless gt is one-dimensional on the cube.
SandwichTerms one_sample_sandwich(const GroundTruth& gt, const Quantile1d& qhat, double lambda);

/// Same audit with the plugin distance and map taken from the grid
/// semi-discrete solver at resolution m (Qhat = empirical measure of y).
SandwichTerms semidiscrete_sandwich(const GroundTruth& gt, const WeightedCloud& y, std::size_t m, double lambda);

/// Two-sample centered statistic
/// W2^2(Phat, Qhat) - W2^2(P, Q) - int phi0 d(Phat - P) - int psi0 d(Qhat - Q).
SandwichTerms two_sample_sandwich(const GroundTruth& gt, const WeightedCloud& x, const WeightedCloud& y,
                                  double lambda);

}  // namespace otplug
