#include "otplug/density/kernel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "otplug/core/error.hpp"
#include "otplug/core/quadrature.hpp"

namespace otplug {

namespace {

double raw_bump(double x) {
  const double t = 1.0 - x * x;
  return t > 0.0 ? std::exp(-1.0 / t) : 0.0;
}

double bump_mass() {
  static const double z = 2.0 * integrate(raw_bump, 0.0, 1.0, 256, 10);
  return z;
}

// integral of x^{2l} b(x) dx for l = 0..kTaylorTerms-1.
constexpr int kTaylorTerms = 24;

const std::vector<double>& bump_even_moments() {
  static const std::vector<double> mom = [] {
    std::vector<double> out(kTaylorTerms);
    for (int l = 0; l < kTaylorTerms; ++l)
      out[l] = 2.0 * integrate([l](double x) { return std::pow(x, 2 * l) * raw_bump(x); }, 0.0, 1.0, 256, 10) /
               bump_mass();
    return out;
  }();
  return mom;
}

// 1 - F[K](w) by its even power series; used near w = 0 where the direct
// transform suffers cancellation.
double series_defect(const std::vector<double>& c, const std::vector<double>& s, double w) {
  const auto& mom = bump_even_moments();
  double total = 0.0;
  double fact = 1.0;
  for (int l = 1; l < kTaylorTerms; ++l) {
    fact *= (2.0 * l - 1.0) * (2.0 * l);
    double ml = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) ml += c[k] * std::pow(s[k], 2 * l);
    ml *= mom[l];
    total += ((l % 2) ? 1.0 : -1.0) * std::pow(w, 2 * l) / fact * ml;
  }
  return total;
}

}  // namespace

double bump(double x) { return raw_bump(x) / bump_mass(); }

double bump_fourier(double w) {
  const std::size_t panels = 64 + static_cast<std::size_t>(4.0 * std::abs(w));
  return 2.0 * integrate([w](double x) { return raw_bump(x) * std::cos(w * x); }, 0.0, 1.0, panels, 10) /
         bump_mass();
}

double Kernel::operator()(double x) const {
  double v = 0.0;
  for (std::size_t k = 0; k < coef_.size(); ++k) v += coef_[k] * bump(x / scale_[k]) / scale_[k];
  return v;
}

double Kernel::fourier(double w) const {
  double v = 0.0;
  for (std::size_t k = 0; k < coef_.size(); ++k) v += coef_[k] * bump_fourier(scale_[k] * w);
  return v;
}

double Kernel::moment(int k) const {
  return integrate([this, k](double x) { return std::pow(x, k) * (*this)(x); }, -1.0, 1.0, 512, 10);
}

nlohmann::json Kernel::report() const {
  return {{"zeta", zeta_}, {"kappa", kappa_}, {"max_violation_freq", max_violation_freq_}};
}

Kernel build_order_kernel(int zeta, double max_freq, double step) {
  if (zeta != 2 && zeta != 4 && zeta != 6 && zeta != 8)
    throw InvalidArgument("build_order_kernel: zeta must be 2, 4, 6 or 8");
  if (!(step > 0.0) || !(max_freq >= step)) throw InvalidArgument("build_order_kernel: bad frequency grid");
  const int r = zeta / 2;
  Kernel k;
  k.zeta_ = zeta;
  for (int i = 1; i <= r; ++i) k.scale_.push_back(1.0 / i);

  // sum_k c_k s_k^{2l} = [l == 0] for l = 0..r-1.
  Eigen::MatrixXd a(r, r);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
  rhs(0) = 1.0;
  for (int l = 0; l < r; ++l)
    for (int i = 0; i < r; ++i) a(l, i) = std::pow(k.scale_[i], 2 * l);
  Eigen::VectorXd c = a.fullPivLu().solve(rhs);
  k.coef_.assign(c.data(), c.data() + r);

  const double m0 = k.moment(0);
  if (std::abs(m0 - 1.0) > 1e-8) {
    std::ostringstream os;
    os << "build_order_kernel: mass " << m0 << " differs from 1";
    throw NumericalError(os.str());
  }
  for (int j = 1; j < zeta; ++j) {
    const double mj = k.moment(j);
    if (std::abs(mj) > 1e-6) {
      std::ostringstream os;
      os << "build_order_kernel: moment " << j << " = " << mj << " does not vanish";
      throw NumericalError(os.str());
    }
  }

  // Ratio limit at 0 is |m_zeta| / zeta!.
  double fact = 1.0;
  for (int j = 2; j <= zeta; ++j) fact *= j;
  double best = std::abs(k.moment(zeta)) / fact;
  double best_w = 0.0;
  const std::size_t count = static_cast<std::size_t>(std::floor(max_freq / step + 1e-9));
  for (std::size_t q = 1; q <= count; ++q) {
    const double w = step * static_cast<double>(q);
    const double defect = w <= 2.0 ? series_defect(k.coef_, k.scale_, w) : 1.0 - k.fourier(w);
    const double ratio = std::abs(defect) / std::pow(w, zeta);
    if (!std::isfinite(ratio)) {
      std::ostringstream os;
      os << "build_order_kernel: K1 check failed at frequency " << w;
      throw NumericalError(os.str());
    }
    if (ratio > best) {
      best = ratio;
      best_w = w;
    }
  }
  k.kappa_ = best;
  k.max_violation_freq_ = best_w;
  return k;
}

}  // namespace otplug
