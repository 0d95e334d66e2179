#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "otplug/core/geometry.hpp"

namespace otplug {

enum class Metric { euclidean_sq, torus_sq };

/// Natural metric for a domain: squared Euclidean on the cube, squared
/// geodesic distance on the torus.
Metric metric_for(Domain domain);

struct CouplingEntry {
  std::size_t i;
  std::size_t j;
  double mass;
};

/// Sparse transport plan. Only positive entries are stored; a basic optimal
/// solution has at most n + m - 1 of them.
struct Coupling {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<CouplingEntry> entries;
  double cost = 0.0;

  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
};

/// Kantorovich potentials of the finite problem, normalized so that
/// max_i phi_i = 0.
struct DualPotentials {
  std::vector<double> phi;
  std::vector<double> psi;
  double dual_value = 0.0;
  /// |primal cost - dual value|.
  double gap = 0.0;
};

struct OtSolution {
  Coupling coupling;
  DualPotentials duals;
  std::size_t pivots = 0;
  std::size_t pricing_rounds = 0;
};

struct SolverOptions {
  /// Refuse problems with more than this many source-target pairs.
  std::size_t max_pairs = std::size_t{1} << 34;
  /// Problems with at most this many pairs keep every arc in memory;
  /// larger ones start from candidate arcs and add violators by pricing
  /// the full cost matrix until none remain.
  std::size_t dense_arc_limit = 3'000'000;
  std::size_t candidates_per_node = 8;
  std::size_t additions_per_row = 4;
  std::size_t max_pivots = std::size_t{1} << 40;
  /// Relative reduced-cost tolerance, scaled by the largest possible cost.
  double pivot_tolerance = 1e-12;
  /// Optional approximate target potentials (length m), e.g. from a solve
  /// at coarser resolution. Sources are then grouped by the target that
  /// minimizes c - psi before the northwest-corner start, and candidate
  /// arcs are ranked by c - psi instead of c.
  std::vector<double> target_potential_hint;
  /// Check the spanning-tree bookkeeping after every pivot (tests only).
  bool validate_tree = false;
};

/// Exact optimal coupling and dual potentials between two finite measures,
/// computed with the primal network simplex method on the bipartite
/// transportation graph. The starting basis is the northwest-corner
/// solution taken along a space-filling-curve ordering of both clouds.
///
/// Throws InvalidArgument on mismatched domains or dimensions, total masses
/// that differ by more than 1e-12, or more than `max_pairs` pairs.
OtSolution solve_discrete_ot(const WeightedCloud& mu, const WeightedCloud& nu, Metric metric,
                             const SolverOptions& options = {});

/// Solution of a transport problem whose source is a weighted regular grid.
/// `cells` lists the grid cells that carry mass (row-major index, last axis
/// fastest); coupling row i refers to cells[i].
struct GridOtSolution {
  std::vector<std::size_t> cells;
  WeightedCloud source;
  OtSolution solution;
};

/// Exact solve from the M^d grid with the given cell weights (zero weights
/// allowed and dropped) to `nu`. Large instances are solved coarse to fine:
/// merging 2^d cells gives a smaller problem whose target potentials seed
/// the next finer solve through `target_potential_hint`.
GridOtSolution solve_grid_to_cloud(std::size_t dim, std::size_t m, Domain domain,
                                   std::span<const double> cell_weights, const WeightedCloud& nu,
                                   const SolverOptions& options = {});

/// min_i { c(a_i, y) - phi_i } for each query row y (row-major, a.dim() wide).
std::vector<double> c_transform(std::span<const double> phi, const WeightedCloud& a,
                                std::span<const double> query, Metric metric);

std::vector<double> c_transform(std::span<const double> phi, const WeightedCloud& a,
                                const std::vector<Point>& query, Metric metric);

using MapFunction = std::function<void(std::span<const double>, std::span<double>)>;

/// Coupling-weighted squared displacement sum_ij pi_ij |T0(X_i) - Y_j|^2.
double displacement_cost(const Coupling& coupling, const WeightedCloud& x,
                         const WeightedCloud& y, const MapFunction& t0);

/// Position of each point along a d-dimensional Hilbert curve (d = 1 sorts
/// by coordinate). Returns the permutation that sorts the cloud.
std::vector<std::size_t> hilbert_order(const WeightedCloud& cloud);

}  // namespace otplug
