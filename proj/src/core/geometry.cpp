#include "otplug/core/geometry.hpp"

#include <cmath>
#include <numeric>

#include "otplug/core/error.hpp"

namespace otplug {

std::string to_string(Domain d) { return d == Domain::cube ? "cube" : "torus"; }

Domain domain_from_string(const std::string& s) {
  if (s == "cube") return Domain::cube;
  if (s == "torus") return Domain::torus;
  throw InvalidArgument("unknown domain '" + s + "'");
}

namespace {

void require_torus_pair(const Point& x, const Point& y) {
  if (x.domain != Domain::torus || y.domain != Domain::torus)
    throw InvalidArgument("torus_distance: both points must be tagged torus");
  if (x.dim() != y.dim()) throw InvalidArgument("torus_distance: dimension mismatch");
}

}  // namespace

double torus_distance(const Point& x, const Point& y) {
  require_torus_pair(x, y);
  return std::sqrt(squared_cost(x.coords, y.coords, Domain::torus));
}

double torus_distance_enumerated(const Point& x, const Point& y) {
  require_torus_pair(x, y);
  const std::size_t d = x.dim();
  std::size_t shifts = 1;
  for (std::size_t c = 0; c < d; ++c) shifts *= 3;
  double best = INFINITY;
  for (std::size_t code = 0; code < shifts; ++code) {
    std::size_t rest = code;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double k = static_cast<double>(rest % 3) - 1.0;
      rest /= 3;
      const double t = x.coords[c] - y.coords[c] + k;
      s += t * t;
    }
    best = std::min(best, s);
  }
  return std::sqrt(best);
}

WeightedCloud::WeightedCloud(std::size_t dim, Domain domain, std::vector<double> coords,
                             std::vector<double> weights)
    : dim_(dim), domain_(domain), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim_ == 0) throw InvalidArgument("WeightedCloud: dimension must be positive");
  if (coords_.size() != weights_.size() * dim_)
    throw InvalidArgument("WeightedCloud: coordinate count does not match weights");
  for (double w : weights_)
    if (!(w >= 0.0)) throw InvalidArgument("WeightedCloud: negative or NaN weight");
  const double total = compensated_sum(weights_);
  if (!weights_.empty() && std::abs(total - 1.0) > kWeightTolerance)
    throw InvalidArgument("WeightedCloud: weights sum to " + std::to_string(total) +
                          ", expected 1");
  const double upper = 1.0;
  for (double c : coords_) {
    const bool ok = domain_ == Domain::torus ? (c >= 0.0 && c < upper) : (c >= 0.0 && c <= upper);
    if (!ok)
      throw InvalidArgument("WeightedCloud: coordinate " + std::to_string(c) +
                            " outside the " + to_string(domain_));
  }
}

WeightedCloud WeightedCloud::uniform(std::size_t dim, Domain domain, std::vector<double> coords) {
  if (dim == 0 || coords.size() % dim != 0)
    throw InvalidArgument("WeightedCloud::uniform: ragged coordinates");
  const std::size_t n = coords.size() / dim;
  std::vector<double> w(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  return WeightedCloud(dim, domain, std::move(coords), std::move(w));
}

Point WeightedCloud::point_at(std::size_t i) const {
  auto p = point(i);
  return Point{{p.begin(), p.end()}, domain_};
}

bool WeightedCloud::has_uniform_weights() const {
  if (weights_.empty()) return false;
  const double target = 1.0 / static_cast<double>(weights_.size());
  for (double w : weights_)
    if (std::abs(w - target) > kWeightTolerance) return false;
  return true;
}

double compensated_sum(std::span<const double> values) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

double wrap_unit(double t) {
  double r = t - std::floor(t);
  if (r >= 1.0) r = 0.0;
  return r;
}

std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t cap) {
  std::size_t r = 1;
  for (std::size_t k = 0; k < exp; ++k) {
    if (base != 0 && r > cap / base) return cap + 1;
    r *= base;
  }
  return r;
}

WeightedCloud grid(std::size_t dim, std::size_t m, Domain domain, std::size_t cap) {
  if (m < 2) throw InvalidArgument("grid: need at least 2 points per axis");
  const std::size_t total = checked_pow(m, dim, cap);
  if (total > cap)
    throw InvalidArgument("grid: " + std::to_string(m) + "^" + std::to_string(dim) +
                          " cells exceed the memory cap");
  std::vector<double> coords(total * dim);
  const double h = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rest = i;
    for (std::size_t c = dim; c-- > 0;) {
      coords[i * dim + c] = (static_cast<double>(rest % m) + 0.5) * h;
      rest /= m;
    }
  }
  return WeightedCloud::uniform(dim, domain, std::move(coords));
}

}  // namespace otplug
