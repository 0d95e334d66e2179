#include "otplug/core/ground_truth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "otplug/core/error.hpp"
#include "otplug/core/quadrature.hpp"

namespace otplug {

namespace {

struct Moments {
  double mean;
  double var;
};

template <typename F>
Moments uniform_moments(F&& f) {
  const double m1 = integrate(f, 0.0, 1.0, 256, 10);
  const double m2 = integrate([&](double x) { const double v = f(x) - m1; return v * v; }, 0.0, 1.0, 256, 10);
  return {m1, m2};
}

}  // namespace

GroundTruth GroundTruth::make(const FamilySpec& spec) {
  if (spec.dim == 0) throw InvalidArgument("family dimension must be positive");
  if (spec.id == "identity") return GroundTruth("identity", spec.dim, Domain::cube, 0.0);
  if (spec.id == "sine1d") {
    if (spec.dim != 1) throw InvalidArgument("sine1d is one-dimensional");
    return GroundTruth("sine1d", 1, Domain::cube, spec.amplitude < 0 ? 0.2 : spec.amplitude);
  }
  if (spec.id == "product-sine")
    return GroundTruth("product-sine", spec.dim, Domain::cube, spec.amplitude < 0 ? 0.2 : spec.amplitude);
  if (spec.id == "torus-sep")
    return GroundTruth("torus-sep", spec.dim, Domain::torus, spec.amplitude < 0 ? 0.1 : spec.amplitude);
  throw InvalidArgument("unknown ground-truth family '" + spec.id + "'");
}

GroundTruth::GroundTruth(std::string id, std::size_t dim, Domain domain, double amplitude)
    : id_(std::move(id)), dim_(dim), domain_(domain), amp_(amplitude) {
  freq_ = domain == Domain::cube ? std::numbers::pi : 2.0 * std::numbers::pi;
  const double slope = amp_ * freq_;
  if (!(amp_ >= 0.0) || slope >= 1.0)
    throw InvalidArgument("amplitude must satisfy 0 <= a * w < 1 for a monotone map");
  lambda_ = std::max(1.0 + slope, 1.0 / (1.0 - slope));

  const double d = static_cast<double>(dim_);
  // Per-coordinate displacement is a sin(w x); on the torus |a| < 1/(2 pi)
  // keeps it below 1/2, so the torus and Euclidean costs coincide.
  w2sq_ = d * integrate([&](double x) { const double t = profile(x) - x; return t * t; }, 0.0, 1.0, 256, 10);
  var_source_ = d * uniform_moments([&](double x) { return x * x - 2.0 * profile_potential(x); }).var;
  var_target_ = d * uniform_moments([&](double x) {
                      const double t = profile(x) - x;
                      return t * t - (x * x - 2.0 * profile_potential(x));
                    }).var;
}

double GroundTruth::profile(double x) const { return x + amp_ * std::sin(freq_ * x); }

double GroundTruth::profile_derivative(double x) const {
  return 1.0 + amp_ * freq_ * std::cos(freq_ * x);
}

double GroundTruth::profile_potential(double x) const {
  return 0.5 * x * x - (amp_ / freq_) * std::cos(freq_ * x);
}

double GroundTruth::profile_inverse(double y) const {
  if (amp_ == 0.0) return y;
  double lo = 0.0, hi = 1.0;
  double x = std::clamp(y, 0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    const double r = profile(x) - y;
    if (r > 0) hi = x; else lo = x;
    if (std::abs(r) < 1e-15) break;
    double next = x - r / profile_derivative(x);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-16) { x = next; break; }
    x = next;
  }
  return x;
}

void GroundTruth::map(std::span<const double> x, std::span<double> out) const {
  for (std::size_t c = 0; c < dim_; ++c) {
    double v = profile(x[c]);
    if (domain_ == Domain::torus) v = wrap_unit(v);
    else v = std::clamp(v, 0.0, 1.0);
    out[c] = v;
  }
}

std::vector<double> GroundTruth::map(std::span<const double> x) const {
  std::vector<double> out(dim_);
  map(x, out);
  return out;
}

void GroundTruth::inverse_map(std::span<const double> y, std::span<double> out) const {
  for (std::size_t c = 0; c < dim_; ++c) out[c] = profile_inverse(y[c]);
}

double GroundTruth::brenier(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t c = 0; c < dim_; ++c) s += profile_potential(x[c]);
  return s;
}

double GroundTruth::brenier_conjugate(std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t c = 0; c < dim_; ++c) {
    const double x = profile_inverse(y[c]);
    s += x * y[c] - profile_potential(x);
  }
  return s;
}

double GroundTruth::kantorovich_source(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t c = 0; c < dim_; ++c) s += x[c] * x[c] - 2.0 * profile_potential(x[c]);
  return s;
}

double GroundTruth::kantorovich_target(std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t c = 0; c < dim_; ++c) s += y[c] * y[c];
  return s - 2.0 * brenier_conjugate(y);
}

double GroundTruth::source_density(std::span<const double>) const { return 1.0; }

double GroundTruth::target_density(std::span<const double> y) const {
  double q = 1.0;
  for (std::size_t c = 0; c < dim_; ++c) q /= profile_derivative(profile_inverse(y[c]));
  return q;
}

WeightedCloud GroundTruth::sample(Which which, std::size_t n, Rng& rng) const {
  if (n == 0) throw InvalidArgument("sample: n must be at least 1");
  std::vector<double> coords(n * dim_);
  for (double& c : coords) c = rng.uniform();
  if (which == Which::target) {
    std::vector<double> buf(dim_);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<double> row(coords.data() + i * dim_, dim_);
      map(row, buf);
      std::copy(buf.begin(), buf.end(), row.begin());
    }
  }
  return WeightedCloud::uniform(dim_, domain_, std::move(coords));
}

}  // namespace otplug
