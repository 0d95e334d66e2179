#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace otplug {

/// Even, compactly supported, C-infinity univariate kernel
/// K(x) = sum_k c_k b(x / s_k) / s_k built from the normalized bump
/// b(x) = exp(-1/(1-x^2)) on (-1,1). Scales s_k = 1/k keep the support in
/// [-1,1]; coefficients cancel the even moments 2..zeta-2.
class Kernel {
 public:
  int zeta() const { return zeta_; }
  double kappa() const { return kappa_; }
  double max_violation_freq() const { return max_violation_freq_; }
  const std::vector<double>& coefficients() const { return coef_; }
  const std::vector<double>& scales() const { return scale_; }
  std::string id() const { return "bump-order-" + std::to_string(zeta_); }

  double operator()(double x) const;
  /// Fourier transform at angular frequency w: integral K(x) cos(w x) dx.
  double fourier(double w) const;
  /// integral x^k K(x) dx by quadrature.
  double moment(int k) const;

  /// {zeta, kappa, max_violation_freq}
  nlohmann::json report() const;

 private:
  friend Kernel build_order_kernel(int zeta, double max_freq, double step);

  int zeta_ = 2;
  double kappa_ = 0.0;
  double max_violation_freq_ = 0.0;
  std::vector<double> coef_;
  std::vector<double> scale_;
};

/// Standard bump normalized to unit mass, and its cosine transform.
double bump(double x);
double bump_fourier(double w);

/// Kernel of order zeta in {2,4,6,8}. The K1 check evaluates
/// |F[K](w) - 1| / |w|^zeta on the grid step, 2 step, ..., max_freq and its
/// Taylor limit at 0; kappa is the maximum. Throws NumericalError naming the
/// offending frequency if a ratio is not finite or a moment fails to vanish.
Kernel build_order_kernel(int zeta, double max_freq = 64.0, double step = 0.05);

}  // namespace otplug
