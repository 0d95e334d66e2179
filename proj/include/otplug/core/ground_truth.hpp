#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otplug/core/geometry.hpp"
#include "otplug/core/rng.hpp"

namespace otplug {

enum class Which { source, target };

/// Selects a ground-truth family by id. Recognized ids: "identity",
/// "sine1d", "product-sine", "torus-sep". A negative amplitude means
/// "family default".
struct FamilySpec {
  std::string id = "sine1d";
  std::size_t dim = 1;
  double amplitude = -1.0;
};

/// Analytic transport problem used as the oracle in every experiment.
///
/// All families share P = uniform on [0,1]^d (or T^d) and a separable map
/// T0(x)_c = x_c + a sin(w x_c), with w = pi on the cube and w = 2 pi on the
/// torus. T0 is the gradient of the separable convex potential
/// x^2/2 - (a/w) cos(w x) per coordinate, hence the Brenier map; on the torus
/// the potential minus |x|^2/2 is periodic, which characterizes optimal
/// torus maps. Q is the pushforward of P under T0.
class GroundTruth {
 public:
  static GroundTruth make(const FamilySpec& spec);

  const std::string& id() const { return id_; }
  std::size_t dim() const { return dim_; }
  Domain domain() const { return domain_; }
  double amplitude() const { return amp_; }
  double frequency() const { return freq_; }
  /// P = Q (T0 is the identity).
  bool degenerate() const { return amp_ == 0.0; }

  // One-dimensional profile shared by every coordinate.
  double profile(double x) const;
  double profile_derivative(double x) const;
  double profile_inverse(double y) const;
  double profile_potential(double x) const;

  void map(std::span<const double> x, std::span<double> out) const;
  std::vector<double> map(std::span<const double> x) const;
  void inverse_map(std::span<const double> y, std::span<double> out) const;

  /// Brenier potential phi0 and its Legendre conjugate.
  double brenier(std::span<const double> x) const;
  double brenier_conjugate(std::span<const double> y) const;

  /// Kantorovich pair |x|^2 - 2 phi0 and |y|^2 - 2 phi0*.
  double kantorovich_source(std::span<const double> x) const;
  double kantorovich_target(std::span<const double> y) const;

  double source_density(std::span<const double> x) const;
  double target_density(std::span<const double> y) const;
  /// gamma with 1/gamma <= p, q <= gamma.
  double density_bound() const { return lambda_; }

  /// Curvature constant of condition A1(lambda).
  double lambda() const { return lambda_; }

  double w2sq() const { return w2sq_; }
  double var_source_potential() const { return var_source_; }
  double var_target_potential() const { return var_target_; }

  /// n i.i.d. draws from P, or from Q via Y = T0(X). Uniform weights.
  WeightedCloud sample(Which which, std::size_t n, Rng& rng) const;

 private:
  GroundTruth(std::string id, std::size_t dim, Domain domain, double amplitude);

  std::string id_;
  std::size_t dim_;
  Domain domain_;
  double amp_;
  double freq_;
  double lambda_;
  double w2sq_;
  double var_source_;
  double var_target_;
};

}  // namespace otplug
