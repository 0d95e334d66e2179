#include "otplug/density/density.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "otplug/core/error.hpp"
#include "otplug/density/kernel.hpp"

namespace otplug {

std::string Provenance::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::haar:
      os << "haar(J=" << level << ")";
      break;
    case Kind::kernel:
      os << "kernel(h=" << bandwidth << ", " << label << ")";
      break;
    case Kind::exact:
      os << "exact(" << label << ")";
      break;
  }
  return os.str();
}

DensityEstimate::DensityEstimate(std::size_t dim, std::size_t m, Domain domain,
                                 std::vector<double> values, Provenance provenance)
    : dim_(dim), m_(m), domain_(domain), values_(std::move(values)), prov_(std::move(provenance)) {
  if (dim == 0 || m == 0) throw InvalidArgument("DensityEstimate: empty grid");
  if (checked_pow(m, dim, values_.size()) != values_.size())
    throw InvalidArgument("DensityEstimate: value count is not M^d");
  volume_ = std::pow(1.0 / static_cast<double>(m), static_cast<double>(dim));
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("DensityEstimate: negative or non-finite value");
  if (std::abs(integral() - 1.0) > kMassTolerance)
    throw InvalidArgument("DensityEstimate: values do not integrate to 1");
}

double DensityEstimate::integral() const { return compensated_sum(values_) * volume_; }

std::size_t DensityEstimate::cell_of(std::span<const double> x) const {
  if (x.size() != dim_) throw InvalidArgument("DensityEstimate: dimension mismatch");
  std::size_t idx = 0;
  for (std::size_t c = 0; c < dim_; ++c) {
    double t = domain_ == Domain::torus ? wrap_unit(x[c]) : std::clamp(x[c], 0.0, 1.0);
    auto k = static_cast<std::size_t>(t * static_cast<double>(m_));
    if (k >= m_) k = m_ - 1;
    idx = idx * m_ + k;
  }
  return idx;
}

double DensityEstimate::at(std::span<const double> x) const { return values_[cell_of(x)]; }

std::vector<double> DensityEstimate::cell_masses() const {
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i] * volume_;
  return out;
}

WeightedCloud DensityEstimate::to_cloud(std::vector<std::size_t>* cells) const {
  std::vector<double> coords, weights;
  if (cells) cells->clear();
  std::vector<std::size_t> idx(dim_);
  for (std::size_t g = 0; g < values_.size(); ++g) {
    if (values_[g] <= 0.0) continue;
    std::size_t r = g;
    for (std::size_t c = dim_; c-- > 0;) {
      idx[c] = r % m_;
      r /= m_;
    }
    for (std::size_t c = 0; c < dim_; ++c) coords.push_back((static_cast<double>(idx[c]) + 0.5) / static_cast<double>(m_));
    weights.push_back(values_[g] * volume_);
    if (cells) cells->push_back(g);
  }
  const double total = compensated_sum(weights);
  for (double& w : weights) w /= total;
  return WeightedCloud(dim_, domain_, std::move(coords), std::move(weights));
}

namespace {

std::size_t grid_size(std::size_t dim, std::size_t m, std::size_t cap, const char* who) {
  const std::size_t total = checked_pow(m, dim, cap);
  if (total > cap) throw InvalidArgument(std::string(who) + ": grid exceeds the memory cap");
  return total;
}

DensityEstimate normalize_clamped(std::size_t dim, std::size_t m, Domain domain, std::vector<double> v,
                                  Provenance prov) {
  for (double& x : v) x = std::max(x, 0.0);
  const double vol = std::pow(1.0 / static_cast<double>(m), static_cast<double>(dim));
  const double total = compensated_sum(v) * vol;
  if (!(total > 0.0)) throw NumericalError("density estimate vanishes on the grid");
  for (double& x : v) x /= total;
  return DensityEstimate(dim, m, domain, std::move(v), std::move(prov));
}

// Sparse per-axis weights: entries (grid index, value).
using AxisWeights = std::vector<std::pair<std::size_t, double>>;

void accumulate_product(std::vector<double>& out, const std::vector<AxisWeights>& axes, double scale,
                        std::size_t m) {
  const std::size_t d = axes.size();
  for (const auto& a : axes)
    if (a.empty()) return;
  std::vector<std::size_t> pos(d, 0);
  for (;;) {
    std::size_t idx = 0;
    double w = scale;
    for (std::size_t c = 0; c < d; ++c) {
      idx = idx * m + axes[c][pos[c]].first;
      w *= axes[c][pos[c]].second;
    }
    out[idx] += w;
    std::size_t c = d;
    while (c-- > 0) {
      if (++pos[c] < axes[c].size()) break;
      pos[c] = 0;
    }
    if (c == static_cast<std::size_t>(-1)) return;
  }
}

// Adds K_h(t - center) at the grid midpoints within h of center. Indices
// outside [0, m) wrap around on the torus and are skipped on the cube.
void add_axis(std::vector<double>& dense, double center, double h, const Kernel& k, std::size_t m, bool wrap) {
  const double md = static_cast<double>(m);
  const long lo = static_cast<long>(std::ceil((center - h) * md - 0.5));
  const long hi = static_cast<long>(std::floor((center + h) * md - 0.5));
  for (long j = lo; j <= hi; ++j) {
    long idx = j;
    if (wrap) {
      idx %= static_cast<long>(m);
      if (idx < 0) idx += static_cast<long>(m);
    } else if (j < 0 || j >= static_cast<long>(m)) {
      continue;
    }
    const double t = (static_cast<double>(j) + 0.5) / md;
    dense[static_cast<std::size_t>(idx)] += k((t - center) / h) / h;
  }
}

AxisWeights sparsify(std::vector<double>& dense) {
  AxisWeights out;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) out.emplace_back(i, dense[i]);
    dense[i] = 0.0;
  }
  return out;
}

DensityEstimate smooth(const WeightedCloud& sample, double h, const Kernel& kernel, std::size_t m,
                       std::size_t cap, bool reflect) {
  if (sample.empty()) throw InvalidArgument("kernel_estimate: empty sample");
  if (!(h > 0.0) || h > 1.0) throw InvalidArgument("kernel_estimate: bandwidth must lie in (0, 1]");
  if (m < 1) throw InvalidArgument("kernel_estimate: empty grid");
  const std::size_t d = sample.dim();
  std::vector<double> values(grid_size(d, m, cap, "kernel_estimate"), 0.0);
  std::vector<double> dense(m, 0.0);
  std::vector<AxisWeights> axes(d);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto x = sample.point(i);
    for (std::size_t c = 0; c < d; ++c) {
      if (reflect) {
        add_axis(dense, x[c], h, kernel, m, false);
        add_axis(dense, -x[c], h, kernel, m, false);
        add_axis(dense, 2.0 - x[c], h, kernel, m, false);
      } else {
        add_axis(dense, x[c], h, kernel, m, true);
      }
      axes[c] = sparsify(dense);
    }
    accumulate_product(values, axes, sample.weight(i), m);
  }
  Provenance prov;
  prov.kind = Provenance::Kind::kernel;
  prov.bandwidth = h;
  prov.label = kernel.id() + (reflect ? "-reflected" : "-periodic");
  return normalize_clamped(d, m, sample.domain(), std::move(values), std::move(prov));
}

}  // namespace

DensityEstimate haar_estimate(const WeightedCloud& sample, int level, std::size_t m, std::size_t cap) {
  if (sample.empty()) throw InvalidArgument("haar_estimate: empty sample");
  if (level < 0 || level > 30) throw InvalidArgument("haar_estimate: level out of range");
  const std::size_t d = sample.dim();
  const std::size_t cells = std::size_t{1} << level;
  if (m % cells != 0) throw InvalidArgument("haar_estimate: M must be a multiple of 2^J");
  const std::size_t coarse_total = checked_pow(cells, d, cap);
  if (coarse_total > cap) throw InvalidArgument("haar_estimate: 2^{Jd} exceeds the memory cap");
  const std::size_t total = grid_size(d, m, cap, "haar_estimate");

  std::vector<double> freq(coarse_total, 0.0);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto x = sample.point(i);
    std::size_t idx = 0;
    for (std::size_t c = 0; c < d; ++c) {
      auto k = static_cast<std::size_t>(x[c] * static_cast<double>(cells));
      if (k >= cells) k = cells - 1;
      idx = idx * cells + k;
    }
    freq[idx] += sample.weight(i);
  }
  const double inv_vol = static_cast<double>(coarse_total);
  const std::size_t ratio = m / cells;
  std::vector<double> values(total);
  for (std::size_t g = 0; g < total; ++g) {
    std::size_t r = g, idx = 0, stride = 1;
    for (std::size_t c = d; c-- > 0;) {
      idx += ((r % m) / ratio) * stride;
      r /= m;
      stride *= cells;
    }
    values[g] = freq[idx] * inv_vol;
  }
  Provenance prov;
  prov.kind = Provenance::Kind::haar;
  prov.level = level;
  return DensityEstimate(d, m, sample.domain(), std::move(values), std::move(prov));
}

DensityEstimate dyadic_project(const WeightedCloud& sample, int level, std::size_t m, std::size_t cap) {
  return haar_estimate(sample, level, m, cap);
}

DensityEstimate exact_density(const GroundTruth& gt, Which which, std::size_t m, std::size_t cap) {
  WeightedCloud g = grid(gt.dim(), m, gt.domain(), cap);
  std::vector<double> values(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    values[i] = which == Which::source ? gt.source_density(g.point(i)) : gt.target_density(g.point(i));
  Provenance prov;
  prov.kind = Provenance::Kind::exact;
  prov.label = gt.id();
  return normalize_clamped(gt.dim(), m, gt.domain(), std::move(values), std::move(prov));
}

DensityEstimate kernel_estimate(const WeightedCloud& sample, double h, const Kernel& kernel, std::size_t m,
                                std::size_t cap) {
  if (sample.domain() != Domain::torus) throw InvalidArgument("kernel_estimate: sample must live on the torus");
  return smooth(sample, h, kernel, m, cap, false);
}

DensityEstimate kernel_estimate_reflected(const WeightedCloud& sample, double h, const Kernel& kernel,
                                          std::size_t m, std::size_t cap) {
  if (sample.domain() != Domain::cube) throw InvalidArgument("kernel_estimate_reflected: sample must live on the cube");
  return smooth(sample, h, kernel, m, cap, true);
}

int tune_level(std::size_t n, double alpha, std::size_t dim, int max_level) {
  if (n < 2 || !(alpha > 1.0) || dim == 0) throw InvalidArgument("tune_level: need n >= 2, alpha > 1, d >= 1");
  const double j = std::round(std::log2(static_cast<double>(n)) / (static_cast<double>(dim) + 2.0 * (alpha - 1.0)));
  return static_cast<int>(std::clamp(j, 1.0, static_cast<double>(std::max(1, max_level))));
}

double tune_bandwidth(std::size_t n, double alpha, std::size_t dim, std::size_t m) {
  if (n < 2 || !(alpha > 1.0) || dim == 0 || m < 4)
    throw InvalidArgument("tune_bandwidth: need n >= 2, alpha > 1, d >= 1, M >= 4");
  const double h = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(dim) + 2.0 * (alpha - 1.0)));
  return std::clamp(h, 2.0 / static_cast<double>(m), 0.5);
}

}  // namespace otplug
