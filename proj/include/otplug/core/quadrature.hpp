#pragma once

#include <cstddef>
#include <vector>

namespace otplug {

/// Gauss-Legendre rule on [-1,1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule with k nodes; exact for polynomials of degree 2k-1. Cached per k.
const GaussRule& gauss_legendre(std::size_t k);

/// Composite Gauss-Legendre integral of f over [a,b] with `panels` equal
/// panels and `k` nodes per panel.
template <typename F>
double integrate(F&& f, double a, double b, std::size_t panels = 64, std::size_t k = 8) {
  const GaussRule& rule = gauss_legendre(k);
  const double h = (b - a) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    const double mid = lo + 0.5 * h;
    double s = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) s += rule.weights[q] * f(mid + 0.5 * h * rule.nodes[q]);
    total += 0.5 * h * s;
  }
  return total;
}

}  // namespace otplug
