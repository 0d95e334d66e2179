#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace otplug {

enum class Domain { cube, torus };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

/// A point of [0,1]^d or of the flat torus [0,1)^d.
struct Point {
  std::vector<double> coords;
  Domain domain = Domain::cube;

  std::size_t dim() const { return coords.size(); }
};

/// Squared ground cost between two coordinate vectors of equal length.
/// On the torus each coordinate difference is reduced to its shortest
/// representative, which equals the minimum over shifts in {-1,0,1}^d
/// because the squared norm separates over coordinates.
inline double squared_cost(std::span<const double> x, std::span<const double> y,
                           Domain domain) {
  double s = 0.0;
  if (domain == Domain::cube) {
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double t = x[c] - y[c];
      s += t * t;
    }
  } else {
    for (std::size_t c = 0; c < x.size(); ++c) {
      double t = x[c] - y[c];
      t = t < 0 ? -t : t;
      t -= static_cast<double>(static_cast<long long>(t + 0.5));
      s += t * t;
    }
  }
  return s;
}

/// Geodesic distance on T^d. Throws InvalidArgument unless both points are
/// tagged torus and share a dimension.
double torus_distance(const Point& x, const Point& y);

/// Same quantity by explicit enumeration of the 3^d integer shifts.
double torus_distance_enumerated(const Point& x, const Point& y);

/// Finite weighted point set. Coordinates are stored row-major (n x d).
class WeightedCloud {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  WeightedCloud() = default;
  WeightedCloud(std::size_t dim, Domain domain, std::vector<double> coords,
                std::vector<double> weights);

  /// Empirical measure with weight 1/n on each of the given points.
  static WeightedCloud uniform(std::size_t dim, Domain domain, std::vector<double> coords);

  std::size_t size() const { return weights_.size(); }
  std::size_t dim() const { return dim_; }
  Domain domain() const { return domain_; }
  bool empty() const { return weights_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& coords() const { return coords_; }
  const std::vector<double>& weights() const { return weights_; }

  Point point_at(std::size_t i) const;

  /// True when every weight equals 1/n up to kWeightTolerance.
  bool has_uniform_weights() const;

 private:
  std::size_t dim_ = 0;
  Domain domain_ = Domain::cube;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

/// Reduce a coordinate to its representative in [0,1).
double wrap_unit(double t);

/// Regular grid of M^d cell midpoints with uniform weights.
/// Throws InvalidArgument when M < 2 or M^d exceeds `cap`.
WeightedCloud grid(std::size_t dim, std::size_t m, Domain domain,
                   std::size_t cap = std::size_t{1} << 24);

/// Grid midpoints weighted proportionally to `density` evaluated there.
/// Cells with zero density keep zero weight.
template <typename Density>
WeightedCloud weighted_grid(std::size_t dim, std::size_t m, Domain domain, Density&& density,
                            std::size_t cap = std::size_t{1} << 24) {
  WeightedCloud base = grid(dim, m, domain, cap);
  std::vector<double> w(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) w[i] = density(base.point(i));
  const double total = compensated_sum(w);
  for (double& v : w) v /= total;
  return WeightedCloud(dim, domain, base.coords(), std::move(w));
}

/// Integer power with overflow check against `cap`; returns cap + 1 on overflow.
std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t cap);

}  // namespace otplug
