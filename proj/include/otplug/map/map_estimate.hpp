#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "otplug/core/geometry.hpp"
#include "otplug/core/ground_truth.hpp"
#include "otplug/core/rng.hpp"
#include "otplug/density/density.hpp"
#include "otplug/ot/discrete_ot.hpp"

namespace otplug {

enum class MapVariant { voronoi_1nn, grid_assign, max_affine };

std::string to_string(MapVariant v);
MapVariant map_variant_from_string(const std::string& s);

/// Evaluable transport-map estimate.
///
///  - voronoi_1nn: sites X_i with targets b_i; x maps to the target of its
///    nearest site (lowest index on ties).
///  - grid_assign: one target per cell of an M^d grid.
///  - max_affine: sites X_i with values phi_i and gradients g_i; x maps to
///    the gradient of the piece attaining max_i phi_i + <g_i, x - X_i>.
class MapEstimate {
 public:
  static MapEstimate voronoi(WeightedCloud sites, std::vector<double> targets, double cost);
  static MapEstimate grid_assign(std::size_t dim, std::size_t m, Domain domain, std::vector<double> targets,
                                 double cost);
  static MapEstimate max_affine(WeightedCloud sites, std::vector<double> values, std::vector<double> gradients,
                                double cost, double objective);

  MapVariant variant() const { return variant_; }
  Domain domain() const { return domain_; }
  std::size_t dim() const { return dim_; }
  /// Grid resolution (grid_assign only).
  std::size_t resolution() const { return m_; }
  const WeightedCloud& sites() const { return sites_; }
  /// Row-major targets: per site (voronoi) or per cell (grid).
  const std::vector<double>& targets() const { return targets_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& gradients() const { return gradients_; }
  /// Transport cost of the coupling the estimate was built from.
  double cost() const { return cost_; }
  /// Least-squares objective (max_affine only).
  double objective() const { return objective_; }

  void evaluate(std::span<const double> x, std::span<double> out) const;
  std::vector<double> evaluate(std::span<const double> x) const;
  MapFunction as_function() const;

  /// Piece index used for x: site, cell or affine piece.
  std::size_t piece(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static MapEstimate from_json(const nlohmann::json& j);

 private:
  MapVariant variant_ = MapVariant::voronoi_1nn;
  Domain domain_ = Domain::cube;
  std::size_t dim_ = 0;
  std::size_t m_ = 0;
  WeightedCloud sites_;
  std::vector<double> targets_;
  std::vector<double> values_;
  std::vector<double> gradients_;
  double cost_ = 0.0;
  double objective_ = 0.0;
};

/// Semi-discrete estimate: the source density is discretized on the M-grid
/// (midpoint weights), transported exactly onto Y, and each cell maps to
/// its barycentric target. Cells without mass inherit the target of the
/// nearest cell that has mass.
MapEstimate estimate_semidiscrete(const GroundTruth& source, const WeightedCloud& y, std::size_t m,
                                  std::size_t cap = std::size_t{1} << 24);
MapEstimate estimate_semidiscrete(const DensityEstimate& source, const WeightedCloud& y);

/// 1-nearest-neighbor estimate from a solved coupling between X and Y.
/// Throws InvalidArgument unless X has uniform weights.
MapEstimate estimate_1nn(const WeightedCloud& x, const WeightedCloud& y, const Coupling& coupling);

struct ConvexLsOptions {
  std::size_t max_iterations = 400'000;
  /// Absolute residual target of the splitting iterations.
  double tolerance = 1e-11;
  /// Added per unit of the largest residual term.
  double relative_tolerance = 1e-10;
  /// At the iteration limit, residuals within this multiple of the
  /// tolerances are still accepted.
  double inaccurate_factor = 1e3;
  /// Stop early once within that band and without a 10% gain for this long.
  std::size_t stall_iterations = 20'000;
  double rho = 1.0;
  double sigma = 1e-8;
  double relaxation = 1.6;
  /// Largest sample accepted (the program has O(n^2) constraints).
  std::size_t max_sites = 1500;
};

/// Largest violation of the convexity and gradient-Lipschitz constraints
/// of a max-affine estimate for the given lambda.
struct ConstraintReport {
  double convexity = 0.0;
  double lipschitz = 0.0;
};
ConstraintReport constraint_violation(const MapEstimate& map, double lambda);

/// Convex least squares over the class of convex functions with
/// lambda-Lipschitz gradients, in interpolation form: minimize
/// sum_ij pi_ij |Y_j - g_i|^2 over (phi_i, g_i) subject to
/// phi_j >= phi_i + <g_i, X_j - X_i> and |g_i - g_j| <= lambda |X_i - X_j|.
/// Solved by operator splitting with a final shrink toward the identity
/// interpolant, which is strictly feasible for distinct sites.
/// Throws InvalidArgument for lambda < 1 or torus data, NumericalError when
/// the iterations stall (message carries the last residuals).
MapEstimate estimate_convex_ls(const WeightedCloud& x, const WeightedCloud& y, const Coupling& coupling,
                               double lambda, const ConvexLsOptions& options = {});

/// Map estimate from two grid densities of equal resolution: exact transport
/// between the weighted grids, barycentric targets per source cell.
MapEstimate estimate_density_plugin(const DensityEstimate& phat, const DensityEstimate& qhat);

struct RiskReport {
  std::string estimator;
  double risk = 0.0;
  std::size_t evaluations = 0;
  /// Standard error; zero for quadrature.
  double standard_error = 0.0;
  bool monte_carlo = false;
};

/// Squared L2(P) distance between an estimate and T0. One-dimensional cube
/// families use composite Gauss-Legendre with n_eval panels, split further
/// at the jumps of piecewise-constant estimates; other cases average n_eval
/// fresh draws from P.
RiskReport l2p_risk(const MapEstimate& that, const GroundTruth& gt, std::size_t n_eval, Rng& rng);
RiskReport l2p_risk(const MapFunction& that, const std::string& id, const GroundTruth& gt, std::size_t n_eval,
                    Rng& rng, std::vector<double> breakpoints = {});

}  // namespace otplug
