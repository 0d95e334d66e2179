#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "otplug/core/error.hpp"
#include "otplug/map/map_estimate.hpp"

namespace otplug {

namespace {

double distance(std::span<const double> a, std::span<const double> b) { return std::sqrt(squared_cost(a, b, Domain::cube)); }

// Constraint layout of the splitting problem. Rows [0, conv_rows) are
// scaled convexity inequalities (value >= 0); each following block of d rows
// is a scaled gradient difference that must lie in a ball.
struct Layout {
  std::size_t n = 0, d = 0;
  std::size_t conv_rows = 0;
  std::vector<std::pair<std::size_t, std::size_t>> lip_pairs;
  std::vector<double> lip_radius;
};

void project(Eigen::VectorXd& v, const Layout& lay) {
  for (std::size_t r = 0; r < lay.conv_rows; ++r) v[r] = std::max(v[r], 0.0);
  for (std::size_t b = 0; b < lay.lip_pairs.size(); ++b) {
    auto seg = v.segment(static_cast<Eigen::Index>(lay.conv_rows + b * lay.d), static_cast<Eigen::Index>(lay.d));
    const double norm = seg.norm();
    const double r = lay.lip_radius[b];
    if (norm > r) seg *= norm > 0.0 ? r / norm : 0.0;
  }
}

}  // namespace

ConstraintReport constraint_violation(const MapEstimate& map, double lambda) {
  if (map.variant() != MapVariant::max_affine) throw InvalidArgument("constraint_violation: not a max-affine estimate");
  const auto& x = map.sites();
  const auto& phi = map.values();
  const auto& g = map.gradients();
  const std::size_t n = x.size(), d = x.dim();
  ConstraintReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.point(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto xj = x.point(j);
      double lin = phi[i];
      double gd = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        lin += g[i * d + c] * (xj[c] - xi[c]);
        gd += (g[i * d + c] - g[j * d + c]) * (g[i * d + c] - g[j * d + c]);
      }
      rep.convexity = std::max(rep.convexity, lin - phi[j]);
      rep.lipschitz = std::max(rep.lipschitz, std::sqrt(gd) - lambda * distance(xi, xj));
    }
  }
  return rep;
}

MapEstimate estimate_convex_ls(const WeightedCloud& x, const WeightedCloud& y, const Coupling& coupling,
                               double lambda, const ConvexLsOptions& opt) {
  if (!(lambda >= 1.0)) throw InvalidArgument("estimate_convex_ls: lambda must be at least 1");
  if (x.domain() != Domain::cube || y.domain() != Domain::cube)
    throw InvalidArgument("estimate_convex_ls: defined on the cube only");
  if (x.empty() || y.empty() || x.dim() != y.dim()) throw InvalidArgument("estimate_convex_ls: bad samples");
  if (coupling.n != x.size() || coupling.m != y.size())
    throw InvalidArgument("estimate_convex_ls: coupling does not match the samples");
  if (x.size() > opt.max_sites) throw InvalidArgument("estimate_convex_ls: sample exceeds max_sites");

  const std::size_t n = x.size(), d = x.dim();
  const std::size_t nv = n * (1 + d);
  auto gi = [n, d](std::size_t i, std::size_t c) { return static_cast<Eigen::Index>(n + i * d + c); };

  // Objective sum_i w_i |g_i - b_i|^2 (plus a constant), scaled by n.
  std::vector<double> w(n, 0.0), b(n * d, 0.0);
  for (const auto& e : coupling.entries) {
    w[e.i] += e.mass;
    auto yj = y.point(e.j);
    for (std::size_t c = 0; c < d; ++c) b[e.i * d + c] += e.mass * yj[c];
  }
  Eigen::VectorXd pdiag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
  const double scale = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      pdiag[gi(i, c)] = 2.0 * w[i] * scale;
      q[gi(i, c)] = -2.0 * b[i * d + c] * scale;
    }

  Layout lay;
  lay.n = n;
  lay.d = d;
  lay.conv_rows = n * (n - 1);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(lay.conv_rows * (2 + d) + n * (n - 1) * d);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto xi = x.point(i), xj = x.point(j);
      const double dij = distance(xi, xj);
      const double s = dij > 0.0 ? 1.0 / dij : 1.0;
      const auto r = static_cast<Eigen::Index>(row);
      trip.emplace_back(r, static_cast<Eigen::Index>(j), s);
      trip.emplace_back(r, static_cast<Eigen::Index>(i), -s);
      for (std::size_t c = 0; c < d; ++c) trip.emplace_back(r, gi(i, c), -s * (xj[c] - xi[c]));
      ++row;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dij = distance(x.point(i), x.point(j));
      const double s = dij > 0.0 ? 1.0 / dij : 1.0;
      lay.lip_pairs.emplace_back(i, j);
      lay.lip_radius.push_back(dij > 0.0 ? lambda : 0.0);
      for (std::size_t c = 0; c < d; ++c) {
        const auto r = static_cast<Eigen::Index>(row + c);
        trip.emplace_back(r, gi(i, c), s);
        trip.emplace_back(r, gi(j, c), -s);
      }
      row += d;
    }
  const auto rows = static_cast<Eigen::Index>(row);
  Eigen::SparseMatrix<double, Eigen::RowMajor> a(rows, static_cast<Eigen::Index>(nv));
  a.setFromTriplets(trip.begin(), trip.end());
  const Eigen::SparseMatrix<double> at = a.transpose();
  const Eigen::MatrixXd ata = Eigen::MatrixXd(at * a);

  // Start from the identity interpolant phi = |x|^2/2, g = x.
  Eigen::VectorXd xv(static_cast<Eigen::Index>(nv)), x0(static_cast<Eigen::Index>(nv));
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.point(i);
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      x0[gi(i, c)] = xi[c];
      sq += xi[c] * xi[c];
    }
    x0[static_cast<Eigen::Index>(i)] = 0.5 * sq;
  }
  // phi is only determined up to a constant; anchor phi_0 at its start value.
  pdiag[0] = 1.0;
  q[0] = -x0[0];
  xv = x0;
  Eigen::VectorXd z = a * xv;
  project(z, lay);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(rows);

  double rho = opt.rho;
  const double sigma = opt.sigma;
  const double alpha = opt.relaxation;
  auto factor = [&](double r) {
    Eigen::MatrixXd k = r * ata;
    k.diagonal() += pdiag + Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nv), sigma);
    return Eigen::LLT<Eigen::MatrixXd>(k);
  };
  Eigen::LLT<Eigen::MatrixXd> llt = factor(rho);
  if (llt.info() != Eigen::Success) throw NumericalError("estimate_convex_ls: KKT factorization failed");

  double prim = 0.0, dual = 0.0, prim_tol = 0.0, dual_tol = 0.0;
  bool converged = false;
  std::size_t it = 0, last_gain = 0;
  double best_score = std::numeric_limits<double>::infinity();
  Eigen::VectorXd ax(rows), zprev(rows), v(rows);
  for (; it < opt.max_iterations; ++it) {
    Eigen::VectorXd rhs = sigma * xv - q + rho * (at * (z - u));
    xv = llt.solve(rhs);
    ax = a * xv;
    zprev = z;
    v = alpha * ax + (1.0 - alpha) * zprev;
    z = v + u;
    project(z, lay);
    u += v - z;

    if (it % 25 != 24) continue;
    prim = (ax - z).lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd aty = rho * (at * u);
    dual = (pdiag.cwiseProduct(xv) + q + aty).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(prim) || !std::isfinite(dual)) break;
    prim_tol =
        opt.tolerance + opt.relative_tolerance * std::max(ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>());
    dual_tol = opt.tolerance + opt.relative_tolerance * std::max({pdiag.cwiseProduct(xv).lpNorm<Eigen::Infinity>(),
                                                                               aty.lpNorm<Eigen::Infinity>(),
                                                                               q.lpNorm<Eigen::Infinity>()});
    if (prim <= prim_tol && dual <= dual_tol) {
      converged = true;
      break;
    }
    const double score = std::max(prim / prim_tol, dual / dual_tol);
    if (score < 0.9 * best_score) {
      best_score = score;
      last_gain = it;
    } else if (score <= opt.inaccurate_factor && it - last_gain >= opt.stall_iterations) {
      converged = true;
      break;
    }
    if (it % 200 == 199) {
      const double pn = prim / std::max({ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>(), 1e-30});
      const double dn = dual / std::max({pdiag.cwiseProduct(xv).lpNorm<Eigen::Infinity>(), aty.lpNorm<Eigen::Infinity>(),
                                         q.lpNorm<Eigen::Infinity>(), 1e-30});
      const double ratio = std::sqrt(pn / std::max(dn, 1e-300));
      if (ratio > 5.0 || ratio < 0.2) {
        const double next = std::clamp(rho * ratio, 1e-6, 1e6);
        u *= rho / next;
        rho = next;
        llt = factor(rho);
      }
    }
  }
  if (!converged && std::isfinite(prim) && std::isfinite(dual) && prim <= opt.inaccurate_factor * prim_tol &&
      dual <= opt.inaccurate_factor * dual_tol)
    converged = true;
  if (!converged) {
    std::ostringstream os;
    os << "estimate_convex_ls: no convergence after " << it << " iterations (primal residual " << prim
       << ", dual residual " << dual << ")";
    throw NumericalError(os.str());
  }

  std::vector<double> phi(n), grad(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    phi[i] = xv[static_cast<Eigen::Index>(i)];
    for (std::size_t c = 0; c < d; ++c) grad[i * d + c] = xv[gi(i, c)];
  }

  // Shrink toward the identity interpolant just enough to remove residual
  // violations: its margins are |x_i - x_j|^2 / 2 and (lambda - 1)|x_i - x_j|.
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.point(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto xj = x.point(j);
      const double dij = distance(xi, xj);
      double lin = phi[i] - phi[j], gd = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        lin += grad[i * d + c] * (xj[c] - xi[c]);
        gd += (grad[i * d + c] - grad[j * d + c]) * (grad[i * d + c] - grad[j * d + c]);
      }
      const double lip = std::sqrt(gd) - lambda * dij;
      if (lin > 0.0 && dij > 0.0) t = std::max(t, lin / (lin + 0.5 * dij * dij));
      if (lip > 0.0 && lambda > 1.0 && dij > 0.0) t = std::max(t, lip / (lip + (lambda - 1.0) * dij));
    }
  }
  if (t > 0.0) {
    t = std::min(1.0, t * (1.0 + 1e-9) + 1e-15);
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] = (1.0 - t) * phi[i] + t * x0[static_cast<Eigen::Index>(i)];
      for (std::size_t c = 0; c < d; ++c) grad[i * d + c] = (1.0 - t) * grad[i * d + c] + t * x0[gi(i, c)];
    }
  }

  double objective = 0.0;
  for (const auto& e : coupling.entries) {
    auto yj = y.point(e.j);
    double r = 0.0;
    for (std::size_t c = 0; c < d; ++c) r += (yj[c] - grad[e.i * d + c]) * (yj[c] - grad[e.i * d + c]);
    objective += e.mass * r;
  }
  return MapEstimate::max_affine(x, std::move(phi), std::move(grad), coupling.cost, objective);
}

}  // namespace otplug
