#include "otplug/map/map_estimate.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "otplug/core/error.hpp"
#include "otplug/core/quadrature.hpp"

namespace otplug {

std::string to_string(MapVariant v) {
  switch (v) {
    case MapVariant::voronoi_1nn:
      return "voronoi-1nn";
    case MapVariant::grid_assign:
      return "grid-assign";
    case MapVariant::max_affine:
      return "max-affine";
  }
  return "unknown";
}

MapVariant map_variant_from_string(const std::string& s) {
  if (s == "voronoi-1nn") return MapVariant::voronoi_1nn;
  if (s == "grid-assign") return MapVariant::grid_assign;
  if (s == "max-affine") return MapVariant::max_affine;
  throw InvalidArgument("unknown map variant '" + s + "'");
}

MapEstimate MapEstimate::voronoi(WeightedCloud sites, std::vector<double> targets, double cost) {
  if (sites.empty()) throw InvalidArgument("MapEstimate: no sites");
  if (targets.size() != sites.size() * sites.dim()) throw InvalidArgument("MapEstimate: target count mismatch");
  MapEstimate e;
  e.variant_ = MapVariant::voronoi_1nn;
  e.domain_ = sites.domain();
  e.dim_ = sites.dim();
  e.sites_ = std::move(sites);
  e.targets_ = std::move(targets);
  e.cost_ = cost;
  return e;
}

MapEstimate MapEstimate::grid_assign(std::size_t dim, std::size_t m, Domain domain, std::vector<double> targets,
                                     double cost) {
  const std::size_t cells = checked_pow(m, dim, targets.size());
  if (dim == 0 || m == 0 || cells * dim != targets.size())
    throw InvalidArgument("MapEstimate: grid target count mismatch");
  MapEstimate e;
  e.variant_ = MapVariant::grid_assign;
  e.domain_ = domain;
  e.dim_ = dim;
  e.m_ = m;
  e.targets_ = std::move(targets);
  e.cost_ = cost;
  return e;
}

MapEstimate MapEstimate::max_affine(WeightedCloud sites, std::vector<double> values, std::vector<double> gradients,
                                    double cost, double objective) {
  if (sites.empty()) throw InvalidArgument("MapEstimate: no sites");
  if (values.size() != sites.size() || gradients.size() != sites.size() * sites.dim())
    throw InvalidArgument("MapEstimate: affine piece count mismatch");
  MapEstimate e;
  e.variant_ = MapVariant::max_affine;
  e.domain_ = sites.domain();
  e.dim_ = sites.dim();
  e.sites_ = std::move(sites);
  e.values_ = std::move(values);
  e.gradients_ = std::move(gradients);
  e.cost_ = cost;
  e.objective_ = objective;
  return e;
}

std::size_t MapEstimate::piece(std::span<const double> x) const {
  if (x.size() != dim_) throw InvalidArgument("MapEstimate: dimension mismatch");
  switch (variant_) {
    case MapVariant::voronoi_1nn: {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sites_.size(); ++i) {
        const double c = squared_cost(sites_.point(i), x, domain_);
        if (c < bd) {
          bd = c;
          best = i;
        }
      }
      return best;
    }
    case MapVariant::grid_assign: {
      std::size_t idx = 0;
      for (std::size_t c = 0; c < dim_; ++c) {
        const double t = domain_ == Domain::torus ? wrap_unit(x[c]) : std::clamp(x[c], 0.0, 1.0);
        auto k = static_cast<std::size_t>(t * static_cast<double>(m_));
        if (k >= m_) k = m_ - 1;
        idx = idx * m_ + k;
      }
      return idx;
    }
    case MapVariant::max_affine: {
      std::size_t best = 0;
      double bv = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sites_.size(); ++i) {
        auto xi = sites_.point(i);
        double v = values_[i];
        for (std::size_t c = 0; c < dim_; ++c) v += gradients_[i * dim_ + c] * (x[c] - xi[c]);
        if (v > bv) {
          bv = v;
          best = i;
        }
      }
      return best;
    }
  }
  return 0;
}

void MapEstimate::evaluate(std::span<const double> x, std::span<double> out) const {
  const std::size_t k = piece(x);
  const auto& src = variant_ == MapVariant::max_affine ? gradients_ : targets_;
  for (std::size_t c = 0; c < dim_; ++c) out[c] = src[k * dim_ + c];
}

std::vector<double> MapEstimate::evaluate(std::span<const double> x) const {
  std::vector<double> out(dim_);
  evaluate(x, out);
  return out;
}

MapFunction MapEstimate::as_function() const {
  return [this](std::span<const double> x, std::span<double> out) { evaluate(x, out); };
}

nlohmann::json MapEstimate::to_json() const {
  nlohmann::json j;
  j["variant"] = to_string(variant_);
  j["domain"] = to_string(domain_);
  j["dim"] = dim_;
  j["cost"] = cost_;
  if (variant_ == MapVariant::grid_assign) {
    j["resolution"] = m_;
    j["targets"] = targets_;
    return j;
  }
  j["sites"] = sites_.coords();
  j["weights"] = sites_.weights();
  if (variant_ == MapVariant::voronoi_1nn) {
    j["targets"] = targets_;
  } else {
    j["values"] = values_;
    j["gradients"] = gradients_;
    j["objective"] = objective_;
  }
  return j;
}

MapEstimate MapEstimate::from_json(const nlohmann::json& j) {
  try {
    const MapVariant v = map_variant_from_string(j.at("variant").get<std::string>());
    const Domain dom = domain_from_string(j.at("domain").get<std::string>());
    const auto dim = j.at("dim").get<std::size_t>();
    const double cost = j.at("cost").get<double>();
    if (v == MapVariant::grid_assign)
      return grid_assign(dim, j.at("resolution").get<std::size_t>(), dom, j.at("targets").get<std::vector<double>>(),
                         cost);
    WeightedCloud sites(dim, dom, j.at("sites").get<std::vector<double>>(), j.at("weights").get<std::vector<double>>());
    if (v == MapVariant::voronoi_1nn) return voronoi(std::move(sites), j.at("targets").get<std::vector<double>>(), cost);
    return max_affine(std::move(sites), j.at("values").get<std::vector<double>>(),
                      j.at("gradients").get<std::vector<double>>(), cost, j.at("objective").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("MapEstimate JSON: ") + e.what());
  }
}

namespace {

double shortest(double t, Domain dom) { return dom == Domain::torus ? t - std::round(t) : t; }

// Barycentric image of each source point under a coupling. On the torus the
// targets are first unwrapped to the representative closest to the source.
std::vector<double> barycenters(const WeightedCloud& x, const WeightedCloud& y, const Coupling& coupling) {
  const std::size_t d = x.dim();
  std::vector<double> acc(x.size() * d, 0.0), mass(x.size(), 0.0);
  for (const auto& e : coupling.entries) {
    auto xi = x.point(e.i);
    auto yj = y.point(e.j);
    for (std::size_t c = 0; c < d; ++c) acc[e.i * d + c] += e.mass * shortest(yj[c] - xi[c], x.domain());
    mass[e.i] += e.mass;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xi = x.point(i);
    for (std::size_t c = 0; c < d; ++c) {
      double v = xi[c] + (mass[i] > 0.0 ? acc[i * d + c] / mass[i] : 0.0);
      if (x.domain() == Domain::torus) v = wrap_unit(v);
      else v = std::clamp(v, 0.0, 1.0);
      acc[i * d + c] = v;
    }
  }
  return acc;
}

// Spread cell targets into every cell of the grid: occupied cells keep their
// barycenter, the rest take the value of the nearest occupied cell in grid
// steps (breadth-first, ties resolved by visiting order).
MapEstimate grid_map(std::size_t d, std::size_t m, Domain dom, const std::vector<std::size_t>& cells,
                     const std::vector<double>& bary, double cost) {
  const std::size_t total = checked_pow(m, d, std::numeric_limits<std::size_t>::max() / 2);
  std::vector<double> targets(total * d, 0.0);
  std::vector<std::uint8_t> done(total, 0);
  std::deque<std::size_t> queue;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    std::copy_n(bary.begin() + static_cast<std::ptrdiff_t>(k * d), d, targets.begin() + static_cast<std::ptrdiff_t>(cells[k] * d));
    done[cells[k]] = 1;
    queue.push_back(cells[k]);
  }
  std::vector<std::size_t> stride(d);
  std::size_t s = 1;
  for (std::size_t c = d; c-- > 0;) {
    stride[c] = s;
    s *= m;
  }
  while (!queue.empty()) {
    const std::size_t g = queue.front();
    queue.pop_front();
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t coord = (g / stride[c]) % m;
      for (int dir : {-1, 1}) {
        std::size_t nc;
        if (dir < 0) {
          if (coord == 0 && dom == Domain::cube) continue;
          nc = coord == 0 ? m - 1 : coord - 1;
        } else {
          if (coord + 1 == m && dom == Domain::cube) continue;
          nc = coord + 1 == m ? 0 : coord + 1;
        }
        const std::size_t h = g + (nc - coord) * stride[c];
        if (done[h]) continue;
        done[h] = 1;
        std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(g * d), d, targets.begin() + static_cast<std::ptrdiff_t>(h * d));
        queue.push_back(h);
      }
    }
  }
  return MapEstimate::grid_assign(d, m, dom, std::move(targets), cost);
}

MapEstimate semidiscrete_from_weights(std::size_t d, std::size_t m, Domain dom, const std::vector<double>& w,
                                      const WeightedCloud& y) {
  if (y.empty()) throw InvalidArgument("estimate_semidiscrete: empty target sample");
  if (y.dim() != d || y.domain() != dom) throw InvalidArgument("estimate_semidiscrete: target does not match source");
  GridOtSolution sol = solve_grid_to_cloud(d, m, dom, w, y);
  auto bary = barycenters(sol.source, y, sol.solution.coupling);
  return grid_map(d, m, dom, sol.cells, bary, sol.solution.coupling.cost);
}

}  // namespace

MapEstimate estimate_semidiscrete(const GroundTruth& source, const WeightedCloud& y, std::size_t m, std::size_t cap) {
  WeightedCloud g = grid(source.dim(), m, source.domain(), cap);
  std::vector<double> w(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) w[i] = source.source_density(g.point(i));
  return semidiscrete_from_weights(source.dim(), m, source.domain(), w, y);
}

MapEstimate estimate_semidiscrete(const DensityEstimate& source, const WeightedCloud& y) {
  return semidiscrete_from_weights(source.dim(), source.resolution(), source.domain(), source.cell_masses(), y);
}

MapEstimate estimate_1nn(const WeightedCloud& x, const WeightedCloud& y, const Coupling& coupling) {
  if (x.empty() || y.empty()) throw InvalidArgument("estimate_1nn: empty sample");
  if (!x.has_uniform_weights()) throw InvalidArgument("estimate_1nn: source weights must be uniform");
  if (coupling.n != x.size() || coupling.m != y.size())
    throw InvalidArgument("estimate_1nn: coupling does not match the samples");
  auto bary = barycenters(x, y, coupling);
  return MapEstimate::voronoi(x, std::move(bary), coupling.cost);
}

MapEstimate estimate_density_plugin(const DensityEstimate& phat, const DensityEstimate& qhat) {
  if (phat.resolution() != qhat.resolution() || phat.dim() != qhat.dim())
    throw InvalidArgument("estimate_density_plugin: grid resolutions differ");
  if (phat.domain() != qhat.domain()) throw InvalidArgument("estimate_density_plugin: domains differ");
  WeightedCloud target = qhat.to_cloud();
  return semidiscrete_from_weights(phat.dim(), phat.resolution(), phat.domain(), phat.cell_masses(), target);
}

namespace {

std::vector<double> jumps_1d(const MapEstimate& that) {
  std::vector<double> b;
  if (that.dim() != 1) return b;
  switch (that.variant()) {
    case MapVariant::grid_assign:
      for (std::size_t k = 1; k < that.resolution(); ++k)
        b.push_back(static_cast<double>(k) / static_cast<double>(that.resolution()));
      break;
    case MapVariant::voronoi_1nn: {
      std::vector<double> s = that.sites().coords();
      std::sort(s.begin(), s.end());
      for (std::size_t k = 1; k < s.size(); ++k)
        if (s[k] > s[k - 1]) b.push_back(0.5 * (s[k] + s[k - 1]));
      break;
    }
    case MapVariant::max_affine: {
      const auto& x = that.sites().coords();
      const auto& v = that.values();
      const auto& g = that.gradients();
      for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
          if (g[i] == g[j]) continue;
          // v_i + g_i (t - x_i) = v_j + g_j (t - x_j)
          const double t = (v[j] - v[i] + g[i] * x[i] - g[j] * x[j]) / (g[i] - g[j]);
          if (t > 0.0 && t < 1.0) b.push_back(t);
        }
      break;
    }
  }
  return b;
}

}  // namespace

RiskReport l2p_risk(const MapEstimate& that, const GroundTruth& gt, std::size_t n_eval, Rng& rng) {
  if (that.dim() != gt.dim() || that.domain() != gt.domain())
    throw InvalidArgument("l2p_risk: estimate and ground truth live on different domains");
  return l2p_risk(that.as_function(), to_string(that.variant()), gt, n_eval, rng, jumps_1d(that));
}

RiskReport l2p_risk(const MapFunction& that, const std::string& id, const GroundTruth& gt, std::size_t n_eval,
                    Rng& rng, std::vector<double> breakpoints) {
  if (n_eval == 0) throw InvalidArgument("l2p_risk: n_eval must be positive");
  const std::size_t d = gt.dim();
  const Domain dom = gt.domain();
  RiskReport rep;
  rep.estimator = id;
  std::vector<double> est(d), truth(d);
  auto loss = [&](std::span<const double> x) {
    that(x, est);
    gt.map(x, truth);
    return squared_cost(est, truth, dom);
  };
  if (d == 1 && dom == Domain::cube) {
    for (std::size_t k = 0; k <= n_eval; ++k) breakpoints.push_back(static_cast<double>(k) / static_cast<double>(n_eval));
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
    const GaussRule& rule = gauss_legendre(8);
    double total = 0.0;
    double x[1];
    for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
      const double a = breakpoints[k], b = breakpoints[k + 1];
      if (!(b > a)) continue;
      double s = 0.0;
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        x[0] = 0.5 * (a + b) + 0.5 * (b - a) * rule.nodes[q];
        s += rule.weights[q] * loss(x) * gt.source_density(x);
      }
      total += 0.5 * (b - a) * s;
    }
    rep.risk = total;
    rep.evaluations = (breakpoints.size() - 1) * rule.nodes.size();
    return rep;
  }
  WeightedCloud draws = gt.sample(Which::source, n_eval, rng);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n_eval; ++i) {
    const double v = loss(draws.point(i));
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  rep.risk = mean;
  rep.evaluations = n_eval;
  rep.monte_carlo = true;
  rep.standard_error = n_eval > 1 ? std::sqrt(m2 / static_cast<double>(n_eval - 1) / static_cast<double>(n_eval)) : 0.0;
  return rep;
}

}  // namespace otplug
