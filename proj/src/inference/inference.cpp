#include "otplug/inference/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "otplug/core/error.hpp"

namespace otplug {

std::string to_string(PluginKind k) {
  switch (k) {
    case PluginKind::empirical:
      return "empirical";
    case PluginKind::haar:
      return "haar";
    case PluginKind::kernel:
      return "kernel";
    case PluginKind::exact_oracle:
      return "exact-oracle";
  }
  return "empirical";
}

PluginKind plugin_kind_from_string(const std::string& s) {
  if (s == "empirical") return PluginKind::empirical;
  if (s == "haar") return PluginKind::haar;
  if (s == "kernel") return PluginKind::kernel;
  if (s == "exact-oracle") return PluginKind::exact_oracle;
  throw InvalidArgument("unknown plugin kind '" + s + "'");
}

PluginMeasure PluginMeasure::empirical(WeightedCloud sample) {
  PluginMeasure p;
  p.sample_size = sample.size();
  p.cloud = std::move(sample);
  p.kind = PluginKind::empirical;
  return p;
}

PluginMeasure PluginMeasure::density(const DensityEstimate& estimate, std::size_t sample_size) {
  PluginMeasure p;
  p.cloud = estimate.to_cloud();
  p.sample_size = sample_size;
  p.grid_m = estimate.resolution();
  switch (estimate.provenance().kind) {
    case Provenance::Kind::haar:
      p.kind = PluginKind::haar;
      break;
    case Provenance::Kind::kernel:
      p.kind = PluginKind::kernel;
      break;
    case Provenance::Kind::exact:
      p.kind = PluginKind::exact_oracle;
      break;
  }
  return p;
}

nlohmann::json W2Estimate::to_json() const {
  nlohmann::json j{{"w2sq", value}, {"plugin", to_string(plugin)}, {"n", n}, {"m", m}};
  if (grid_m) j["grid_m"] = grid_m;
  return j;
}

PluginSolve plugin_solve(const PluginMeasure& phat, const PluginMeasure& qhat, const SolverOptions& options) {
  if (phat.cloud.domain() != qhat.cloud.domain()) throw InvalidArgument("plugin_w2sq: domains differ");
  if (phat.grid_m && qhat.grid_m && phat.grid_m != qhat.grid_m)
    throw InvalidArgument("plugin_w2sq: density estimates have different resolutions");
  PluginSolve out;
  out.solution = solve_discrete_ot(phat.cloud, qhat.cloud, metric_for(phat.cloud.domain()), options);
  out.source = phat.cloud;
  out.target = qhat.cloud;
  out.estimate.value = std::max(0.0, out.solution.coupling.cost);
  out.estimate.plugin = phat.kind;
  out.estimate.n = phat.sample_size;
  out.estimate.m = qhat.sample_size;
  out.estimate.grid_m = std::max(phat.grid_m, qhat.grid_m);
  return out;
}

W2Estimate plugin_w2sq(const WeightedCloud& phat, const WeightedCloud& qhat) {
  return plugin_solve(PluginMeasure::empirical(phat), PluginMeasure::empirical(qhat)).estimate;
}

W2Estimate plugin_w2sq(const DensityEstimate& phat, const DensityEstimate& qhat, std::size_t n, std::size_t m) {
  if (phat.resolution() != qhat.resolution())
    throw InvalidArgument("plugin_w2sq: density estimates have different resolutions");
  return plugin_solve(PluginMeasure::density(phat, n), PluginMeasure::density(qhat, m)).estimate;
}

Potentials extract_potentials(const OtSolution& solution, const WeightedCloud& x, const WeightedCloud& y) {
  if (solution.duals.phi.size() != x.size() || solution.duals.psi.size() != y.size())
    throw InvalidArgument("extract_potentials: solution does not match the clouds");
  Potentials p;
  p.phi = solution.duals.phi;
  p.psi = solution.duals.psi;
  const Domain dom = x.domain();
  auto cx = std::make_shared<WeightedCloud>(x);
  auto cy = std::make_shared<WeightedCloud>(y);
  auto phi = std::make_shared<std::vector<double>>(p.phi);
  auto psi = std::make_shared<std::vector<double>>(p.psi);
  p.phi_at = [cy, psi, dom](std::span<const double> q) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cy->size(); ++j) best = std::min(best, squared_cost(q, cy->point(j), dom) - (*psi)[j]);
    return best;
  };
  p.psi_at = [cx, phi, dom](std::span<const double> q) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cx->size(); ++i) best = std::min(best, squared_cost(cx->point(i), q, dom) - (*phi)[i]);
    return best;
  };
  return p;
}

Potentials extract_potentials(const PluginSolve& solve) {
  return extract_potentials(solve.solution, solve.source, solve.target);
}

namespace {

double weighted_variance(std::span<const double> v, std::span<const double> w) {
  double total = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    total += w[i];
    mean += w[i] * v[i];
  }
  mean /= total;
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * (v[i] - mean) * (v[i] - mean);
  return std::max(0.0, s / total);
}

}  // namespace

VarianceEstimates variance_estimates(std::span<const double> phi, std::span<const double> psi) {
  if (phi.size() < 2 || psi.size() < 2) throw InvalidArgument("variance_estimates: need at least two values each");
  std::vector<double> wa(phi.size(), 1.0), wb(psi.size(), 1.0);
  return variance_estimates(phi, wa, psi, wb, phi.size(), psi.size());
}

VarianceEstimates variance_estimates(std::span<const double> phi, std::span<const double> phi_weights,
                                     std::span<const double> psi, std::span<const double> psi_weights,
                                     std::size_t n, std::size_t m) {
  if (phi.size() != phi_weights.size() || psi.size() != psi_weights.size())
    throw InvalidArgument("variance_estimates: weight length mismatch");
  if (phi.size() < 2 || psi.size() < 2 || n < 2 || m < 2)
    throw InvalidArgument("variance_estimates: need at least two values each");
  VarianceEstimates v;
  v.sigma0sq = weighted_variance(phi, phi_weights);
  v.sigma1sq = weighted_variance(psi, psi_weights);
  v.n = n;
  v.m = m;
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  v.pooled = (md * v.sigma0sq + nd * v.sigma1sq) / (nd + md);
  return v;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw InvalidArgument("normal_quantile: p outside [0,1]");
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        ((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
            45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
         133.14166789178437745) * r + 3.387132872796366608;
    const double den =
        ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
            21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
         42.313330701600911252) * r + 1.0;
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
            1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
         4.6303378461565452959) * r + 1.42343711074968357734;
    const double den =
        ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
            0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
         2.05319162663775882187) * r + 1.0;
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
            0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
         5.4637849111641143699) * r + 6.6579046435011037772;
    const double den =
        ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
            7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
         0.59983220655588793769) * r + 1.0;
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

ConfidenceInterval confidence_interval(const W2Estimate& w2, const VarianceEstimates& var, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("confidence_interval: delta must lie in (0, 1]");
  ConfidenceInterval ci;
  ci.center = w2.value;
  ci.level = 1.0 - delta;
  ci.n = w2.n;
  ci.m = w2.m;
  const double z = normal_quantile(1.0 - 0.5 * delta);
  const double nd = static_cast<double>(w2.n), md = static_cast<double>(w2.m);
  if (w2.m == 0) {
    if (w2.n < 2) throw InvalidArgument("confidence_interval: need n >= 2");
    ci.half_width = std::sqrt(var.sigma0sq) * z / std::sqrt(nd);
  } else {
    if (w2.n < 2 || w2.m < 2) throw InvalidArgument("confidence_interval: need n, m >= 2");
    ci.half_width = std::sqrt(var.pooled) * z * std::sqrt((nd + md) / (nd * md));
  }
  return ci;
}

nlohmann::json ci_to_json(const ConfidenceInterval& ci, const W2Estimate& w2, const VarianceEstimates& var) {
  return {{"w2sq", w2.value},
          {"sigma0sq", var.sigma0sq},
          {"sigma1sq", var.sigma1sq},
          {"sigma_pooled_sq", var.pooled},
          {"level", ci.level},
          {"lo", ci.lo()},
          {"hi", ci.hi()},
          {"n", ci.n},
          {"m", ci.m},
          {"plugin", to_string(w2.plugin)}};
}

}  // namespace otplug
