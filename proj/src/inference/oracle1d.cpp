#include "otplug/inference/oracle1d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otplug/core/error.hpp"
#include "otplug/core/quadrature.hpp"
#include "otplug/map/map_estimate.hpp"

namespace otplug {

namespace {

constexpr std::size_t kBasePanels = 64;
constexpr std::size_t kNodes = 8;

void require_line(const GroundTruth& gt, const char* who) {
  if (gt.dim() != 1 || gt.domain() != Domain::cube)
    throw InvalidArgument(std::string(who) + ": needs a one-dimensional cube family");
}

// Quantile of an atomic measure: G(u) = v_(k) on (c_{k-1}, c_k].
Quantile1d from_sorted(std::vector<double> v, std::vector<double> cum) {
  std::vector<double> breaks(cum.begin(), cum.end() - 1);
  auto vs = std::make_shared<std::vector<double>>(std::move(v));
  auto cs = std::make_shared<std::vector<double>>(std::move(cum));
  return Quantile1d::smooth(
      [vs, cs](double u) {
        auto it = std::lower_bound(cs->begin(), cs->end(), u);
        auto k = static_cast<std::size_t>(it - cs->begin());
        if (k >= vs->size()) k = vs->size() - 1;
        return (*vs)[k];
      },
      std::move(breaks));
}

}  // namespace

Quantile1d Quantile1d::atoms(std::span<const double> values, std::span<const double> weights) {
  if (values.empty() || values.size() != weights.size()) throw InvalidArgument("Quantile1d: bad atoms");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = compensated_sum(weights);
  std::vector<double> v, cum;
  double run = 0.0;
  for (std::size_t k : idx) {
    run += weights[k] / total;
    v.push_back(values[k]);
    cum.push_back(run);
  }
  cum.back() = 1.0;
  return from_sorted(std::move(v), std::move(cum));
}

Quantile1d Quantile1d::atoms(const WeightedCloud& cloud) {
  if (cloud.dim() != 1) throw InvalidArgument("Quantile1d: cloud is not one-dimensional");
  return atoms(cloud.coords(), cloud.weights());
}

Quantile1d Quantile1d::histogram(std::span<const double> masses) {
  if (masses.empty()) throw InvalidArgument("Quantile1d: empty histogram");
  const std::size_t m = masses.size();
  auto cum = std::make_shared<std::vector<double>>(m + 1, 0.0);
  auto mass = std::make_shared<std::vector<double>>(masses.begin(), masses.end());
  const double total = compensated_sum(masses);
  for (std::size_t k = 0; k < m; ++k) {
    if (masses[k] < 0.0) throw InvalidArgument("Quantile1d: negative bin mass");
    (*mass)[k] /= total;
    (*cum)[k + 1] = (*cum)[k] + (*mass)[k];
  }
  (*cum)[m] = 1.0;
  std::vector<double> breaks;
  for (std::size_t k = 1; k < m; ++k)
    if ((*cum)[k] > 0.0 && (*cum)[k] < 1.0) breaks.push_back((*cum)[k]);
  const double width = 1.0 / static_cast<double>(m);
  return smooth(
      [cum, mass, m, width](double u) {
        auto it = std::lower_bound(cum->begin() + 1, cum->end(), u);
        auto k = static_cast<std::size_t>(it - cum->begin()) - 1;
        if (k >= m) k = m - 1;
        while (k + 1 < m && (*mass)[k] <= 0.0) ++k;
        const double frac = (*mass)[k] > 0.0 ? (u - (*cum)[k]) / (*mass)[k] : 0.0;
        return width * (static_cast<double>(k) + std::clamp(frac, 0.0, 1.0));
      },
      std::move(breaks));
}

Quantile1d Quantile1d::smooth(std::function<double(double)> g, std::vector<double> kinks) {
  Quantile1d q;
  q.g_ = std::move(g);
  std::sort(kinks.begin(), kinks.end());
  q.breaks_ = std::move(kinks);
  return q;
}

double integrate_split(const std::function<double(double)>& f, std::vector<double> breaks) {
  for (std::size_t k = 1; k < kBasePanels; ++k) breaks.push_back(static_cast<double>(k) / kBasePanels);
  breaks.push_back(0.0);
  breaks.push_back(1.0);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> parts;
  parts.reserve(breaks.size());
  for (std::size_t k = 1; k < breaks.size(); ++k) {
    const double a = std::max(0.0, breaks[k - 1]), b = std::min(1.0, breaks[k]);
    if (b > a) parts.push_back(integrate(f, a, b, 1, kNodes));
  }
  return compensated_sum(parts);
}

double Quantile1d::expect(const std::function<double(double)>& f) const {
  return integrate_split([&](double u) { return f(g_(u)); }, breaks_);
}

double w2sq_1d(const Quantile1d& a, const Quantile1d& b) {
  std::vector<double> br = a.breakpoints();
  br.insert(br.end(), b.breakpoints().begin(), b.breakpoints().end());
  return integrate_split(
      [&](double u) {
        const double r = a(u) - b(u);
        return r * r;
      },
      std::move(br));
}

namespace {

Quantile1d source_quantile(const GroundTruth&) {
  return Quantile1d::smooth([](double u) { return u; });
}

Quantile1d target_quantile(const GroundTruth& gt) {
  return Quantile1d::smooth([&gt](double u) { return gt.profile(u); });
}

double psi0(const GroundTruth& gt, double y) { return gt.kantorovich_target(std::span<const double>(&y, 1)); }
double phi0(const GroundTruth& gt, double x) { return gt.kantorovich_source(std::span<const double>(&x, 1)); }

}  // namespace

SandwichTerms one_sample_sandwich(const GroundTruth& gt, const Quantile1d& qhat, double lambda) {
  require_line(gt, "one_sample_sandwich");
  const Quantile1d p = source_quantile(gt), q = target_quantile(gt);
  SandwichTerms t;
  t.lambda = lambda;
  t.w2_plugin = w2sq_1d(p, qhat);
  t.w2_true = gt.w2sq();
  auto psi = [&gt](double y) { return psi0(gt, y); };
  t.lin_term = qhat.expect(psi) - q.expect(psi);
  t.plugin_error = w2sq_1d(qhat, q);
  // Map from the uniform P to Qhat is G_Qhat; its L2(P) distance to T0 = G_Q.
  t.map_risk = t.plugin_error;
  const double middle = t.w2_plugin - t.w2_true - t.lin_term;
  t.lower_residual = middle - t.map_risk / lambda;
  t.upper_residual = lambda * t.plugin_error - middle;
  return t;
}

SandwichTerms semidiscrete_sandwich(const GroundTruth& gt, const WeightedCloud& y, std::size_t m, double lambda) {
  require_line(gt, "semidiscrete_sandwich");
  const Quantile1d qhat = Quantile1d::atoms(y), q = target_quantile(gt);
  const MapEstimate map = estimate_semidiscrete(gt, y, m);
  SandwichTerms t;
  t.lambda = lambda;
  t.w2_plugin = map.cost();
  t.w2_true = gt.w2sq();
  auto psi = [&gt](double v) { return psi0(gt, v); };
  t.lin_term = qhat.expect(psi) - q.expect(psi);
  t.plugin_error = w2sq_1d(qhat, q);
  Rng unused(0);
  t.map_risk = l2p_risk(map, gt, kBasePanels, unused).risk;
  const double middle = t.w2_plugin - t.w2_true - t.lin_term;
  t.lower_residual = middle - t.map_risk / lambda;
  t.upper_residual = lambda * t.plugin_error - middle;
  return t;
}

SandwichTerms two_sample_sandwich(const GroundTruth& gt, const WeightedCloud& x, const WeightedCloud& y,
                                  double lambda) {
  require_line(gt, "two_sample_sandwich");
  const Quantile1d phat = Quantile1d::atoms(x), qhat = Quantile1d::atoms(y);
  const Quantile1d p = source_quantile(gt), q = target_quantile(gt);
  SandwichTerms t;
  t.lambda = lambda;
  t.w2_plugin = w2sq_1d(phat, qhat);
  t.w2_true = gt.w2sq();
  auto phi = [&gt](double v) { return phi0(gt, v); };
  auto psi = [&gt](double v) { return psi0(gt, v); };
  t.lin_term = phat.expect(phi) - p.expect(phi) + qhat.expect(psi) - q.expect(psi);
  const double ep = std::sqrt(w2sq_1d(phat, p)), eq = std::sqrt(w2sq_1d(qhat, q));
  t.plugin_error = (ep + eq) * (ep + eq);
  const double middle = t.w2_plugin - t.w2_true - t.lin_term;
  t.lower_residual = middle;
  t.upper_residual = lambda * t.plugin_error - middle;

  auto var = [](const WeightedCloud& c, auto&& f) {
    double mean = 0.0, s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) mean += c.weight(i) * f(c.point(i)[0]);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double r = f(c.point(i)[0]) - mean;
      s += c.weight(i) * r * r;
    }
    return s;
  };
  t.lin_se = std::sqrt(var(x, phi) / static_cast<double>(x.size()) + var(y, psi) / static_cast<double>(y.size()));
  return t;
}

}  // namespace otplug
