#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otplug/core/geometry.hpp"
#include "otplug/core/ground_truth.hpp"

namespace otplug {

/// Where a grid density came from.
struct Provenance {
  enum class Kind { haar, kernel, exact };
  Kind kind = Kind::exact;
  int level = 0;          // haar: J
  double bandwidth = 0;   // kernel: h
  std::string label;      // kernel id or family id

  std::string describe() const;
};

/// Nonnegative density on the regular M^d grid of cell midpoints, row-major
/// with the last axis fastest. Values integrate to one under the midpoint
/// rule.
class DensityEstimate {
 public:
  static constexpr double kMassTolerance = 1e-9;

  DensityEstimate(std::size_t dim, std::size_t m, Domain domain, std::vector<double> values,
                  Provenance provenance);

  std::size_t dim() const { return dim_; }
  std::size_t resolution() const { return m_; }
  Domain domain() const { return domain_; }
  const std::vector<double>& values() const { return values_; }
  const Provenance& provenance() const { return prov_; }
  double cell_volume() const { return volume_; }
  double integral() const;

  /// Value on the cell containing x.
  double at(std::span<const double> x) const;
  std::size_t cell_of(std::span<const double> x) const;

  /// values times cell volume.
  std::vector<double> cell_masses() const;

  /// Weighted grid cloud; cells with zero mass are dropped. `cells`, when
  /// given, receives the grid index of each retained point.
  WeightedCloud to_cloud(std::vector<std::size_t>* cells = nullptr) const;

 private:
  std::size_t dim_;
  std::size_t m_;
  Domain domain_;
  std::vector<double> values_;
  Provenance prov_;
  double volume_;
};

/// Histogram on the 2^J dyadic partition, spread onto an M-grid. Haar
/// estimates are nonnegative by construction, so no clamping is needed.
/// Throws InvalidArgument when M is not a multiple of 2^J or when 2^{Jd} or
/// M^d exceeds `cap`.
DensityEstimate haar_estimate(const WeightedCloud& sample, int level, std::size_t m,
                              std::size_t cap = std::size_t{1} << 24);

/// Haar projection of a measure at level J; the same computation as
/// haar_estimate.
DensityEstimate dyadic_project(const WeightedCloud& sample, int level, std::size_t m,
                               std::size_t cap = std::size_t{1} << 24);

/// Midpoint values of the family's source or target density, normalized on
/// the grid.
DensityEstimate exact_density(const GroundTruth& gt, Which which, std::size_t m,
                              std::size_t cap = std::size_t{1} << 24);

class Kernel;

/// Periodized product-kernel estimate on T^d, clamped at zero and
/// renormalized. Requires 0 < h <= 1 and a torus sample.
DensityEstimate kernel_estimate(const WeightedCloud& sample, double h, const Kernel& kernel,
                                std::size_t m, std::size_t cap = std::size_t{1} << 24);

/// Cube variant: each coordinate is reflected at 0 and 1 before smoothing,
/// clamped and renormalized. Requires 0 < h <= 1 and a cube sample.
DensityEstimate kernel_estimate_reflected(const WeightedCloud& sample, double h,
                                          const Kernel& kernel, std::size_t m,
                                          std::size_t cap = std::size_t{1} << 24);

/// Wavelet level round(log2 n / (d + 2(alpha-1))) clamped to [1, max_level].
int tune_level(std::size_t n, double alpha, std::size_t dim, int max_level = 20);

/// Bandwidth n^{-1/(d + 2(alpha-1))} clamped to [2/M, 0.5].
double tune_bandwidth(std::size_t n, double alpha, std::size_t dim, std::size_t m);

}  // namespace otplug
