#include "otplug/ot/discrete_ot.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "otplug/core/error.hpp"

namespace otplug {

Metric metric_for(Domain domain) {
  return domain == Domain::torus ? Metric::torus_sq : Metric::euclidean_sq;
}

std::vector<double> Coupling::row_sums() const {
  std::vector<double> r(n, 0.0);
  for (const auto& e : entries) r[e.i] += e.mass;
  return r;
}

std::vector<double> Coupling::col_sums() const {
  std::vector<double> c(m, 0.0);
  for (const auto& e : entries) c[e.j] += e.mass;
  return c;
}

namespace {

Domain metric_domain(Metric metric) {
  return metric == Metric::torus_sq ? Domain::torus : Domain::cube;
}

// ---------------------------------------------------------------------------
// Hilbert ordering (Skilling's transpose algorithm)

std::uint64_t hilbert_key(std::span<const double> x, unsigned bits) {
  const std::size_t d = x.size();
  std::uint32_t axes[64];
  const double scale = static_cast<double>(1u << bits);
  for (std::size_t c = 0; c < d; ++c) {
    double v = std::floor(x[c] * scale);
    v = std::clamp(v, 0.0, scale - 1.0);
    axes[c] = static_cast<std::uint32_t>(v);
  }
  const std::uint32_t top = 1u << (bits - 1);
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (std::size_t i = 0; i < d; ++i) {
      if (axes[i] & q) {
        axes[0] ^= p;
      } else {
        const std::uint32_t t = (axes[0] ^ axes[i]) & p;
        axes[0] ^= t;
        axes[i] ^= t;
      }
    }
  }
  for (std::size_t i = 1; i < d; ++i) axes[i] ^= axes[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = top; q > 1; q >>= 1)
    if (axes[d - 1] & q) t ^= q - 1;
  for (std::size_t i = 0; i < d; ++i) axes[i] ^= t;

  std::uint64_t key = 0;
  for (int b = static_cast<int>(bits) - 1; b >= 0; --b)
    for (std::size_t i = 0; i < d; ++i) key = (key << 1) | ((axes[i] >> b) & 1u);
  return key;
}

// ---------------------------------------------------------------------------
// Network simplex on the bipartite transportation graph.
//
// Nodes 0..n-1 are sources, n..n+m-1 are targets; every arc points from a
// source to a target and is uncapacitated. The spanning-tree basis is kept
// in the parent / thread / successor-count representation, and reduced
// costs follow the convention c_e + pi[source] - pi[target].

class TransportSimplex {
 public:
  TransportSimplex(const WeightedCloud& mu, const WeightedCloud& nu, Domain cost_domain,
                   const SolverOptions& opt)
      : mu_(mu), nu_(nu), dom_(cost_domain), opt_(opt),
        n_(static_cast<int>(mu.size())), m_(static_cast<int>(nu.size())),
        d_(mu.dim()) {
    const double diam = dom_ == Domain::cube ? static_cast<double>(d_) : 0.25 * static_cast<double>(d_);
    eps_ = opt_.pivot_tolerance * std::max(diam, 1e-300);
    node_num_ = n_ + m_;
    parent_.assign(node_num_, -1);
    pred_.assign(node_num_, -1);
    pred_dir_.assign(node_num_, 0);
    thread_.assign(node_num_, 0);
    rev_thread_.assign(node_num_, 0);
    succ_num_.assign(node_num_, 1);
    last_succ_.assign(node_num_, 0);
    pi_.assign(node_num_, 0.0);
  }

  void run() {
    build_initial_basis();
    const std::size_t pairs = static_cast<std::size_t>(n_) * static_cast<std::size_t>(m_);
    const bool dense = pairs <= opt_.dense_arc_limit;
    if (dense) add_all_arcs();
    else add_candidate_arcs();
    build_tree();
    for (;;) {
      pivot_loop();
      if (dense) break;
      ++pricing_rounds_;
      recompute_potentials();
      if (!price_and_extend()) break;
    }
    recompute_potentials();
  }

  OtSolution result() const {
    OtSolution out;
    out.pivots = pivots_;
    out.pricing_rounds = pricing_rounds_;
    Coupling& cp = out.coupling;
    cp.n = static_cast<std::size_t>(n_);
    cp.m = static_cast<std::size_t>(m_);
    double cost = 0.0;
    for (int u = 0; u < node_num_; ++u) {
      const int e = pred_[u];
      if (e < 0) continue;
      const double f = flow_[e];
      if (f > 0.0) {
        cp.entries.push_back({static_cast<std::size_t>(src_[e]),
                              static_cast<std::size_t>(tgt_[e] - n_), f});
        cost += f * cost_[e];
      }
    }
    std::sort(cp.entries.begin(), cp.entries.end(), [](const auto& a, const auto& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    cp.cost = cost;

    DualPotentials& dp = out.duals;
    dp.phi.resize(n_);
    dp.psi.resize(m_);
    double shift = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_; ++i) {
      dp.phi[i] = -pi_[i];
      shift = std::max(shift, dp.phi[i]);
    }
    for (int j = 0; j < m_; ++j) dp.psi[j] = pi_[n_ + j];
    for (double& v : dp.phi) v -= shift;
    for (double& v : dp.psi) v += shift;
    double dual = 0.0;
    for (int i = 0; i < n_; ++i) dual += mu_.weight(i) * dp.phi[i];
    for (int j = 0; j < m_; ++j) dual += nu_.weight(j) * dp.psi[j];
    dp.dual_value = dual;
    dp.gap = std::abs(cost - dual);
    return out;
  }

 private:
  static constexpr signed char kTree = 0;
  static constexpr signed char kLower = 1;
  static constexpr signed char kUp = 1;
  static constexpr signed char kDown = -1;

  double arc_cost(int i, int j) const {
    return squared_cost(mu_.point(i), nu_.point(j), dom_);
  }

  int add_arc(int i, int j, double flow, signed char state) {
    if (src_.size() >= static_cast<std::size_t>(INT_MAX))
      throw InvalidArgument("solve_discrete_ot: arc count overflow");
    src_.push_back(i);
    tgt_.push_back(n_ + j);
    cost_.push_back(arc_cost(i, j));
    flow_.push_back(flow);
    state_.push_back(state);
    return static_cast<int>(src_.size()) - 1;
  }

  void build_initial_basis() {
    std::vector<std::size_t> ps = hilbert_order(mu_);
    std::vector<std::size_t> pt = hilbert_order(nu_);
    if (has_hint()) {
      // Group sources by their best target under the hint, targets taken in
      // Hilbert order, so each target's block is filled from nearby mass.
      std::vector<int> rank(m_);
      for (int k = 0; k < m_; ++k) rank[pt[k]] = k;
      std::vector<int> key(n_);
      std::vector<int> spos(n_);
      for (int k = 0; k < n_; ++k) spos[ps[k]] = k;
      for (int i = 0; i < n_; ++i) key[i] = rank[best_target(i)];
      std::sort(ps.begin(), ps.end(), [&](std::size_t a, std::size_t b) {
        return key[a] != key[b] ? key[a] < key[b] : spos[a] < spos[b];
      });
    }
    std::vector<double> a(mu_.weights()), b(nu_.weights());
    std::size_t i = 0, j = 0;
    tree_arcs_.clear();
    tree_arcs_.reserve(n_ + m_ - 1);
    while (i < ps.size() && j < pt.size()) {
      const int si = static_cast<int>(ps[i]);
      const int tj = static_cast<int>(pt[j]);
      const double f = std::min(a[si], b[tj]);
      tree_arcs_.push_back(add_arc(si, tj, f, kTree));
      a[si] -= f;
      b[tj] -= f;
      if (i + 1 == ps.size()) ++j;
      else if (j + 1 == pt.size()) ++i;
      else if (a[si] <= b[tj]) ++i;
      else ++j;
    }
    basis_arc_count_ = src_.size();
  }

  void add_all_arcs() {
    // Tree arcs are already present; mark their (i, j) so they are not duplicated.
    std::vector<std::uint8_t> present(static_cast<std::size_t>(n_) * m_, 0);
    for (int e : tree_arcs_) present[static_cast<std::size_t>(src_[e]) * m_ + (tgt_[e] - n_)] = 1;
    const std::size_t total = static_cast<std::size_t>(n_) * m_;
    src_.reserve(total);
    tgt_.reserve(total);
    cost_.reserve(total);
    flow_.reserve(total);
    state_.reserve(total);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j)
        if (!present[static_cast<std::size_t>(i) * m_ + j]) add_arc(i, j, 0.0, kLower);
  }

  bool has_hint() const { return !opt_.target_potential_hint.empty(); }

  double hint(int j) const { return has_hint() ? opt_.target_potential_hint[j] : 0.0; }

  int best_target(int i) const {
    auto xi = mu_.point(i);
    int best = 0;
    double v = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m_; ++j) {
      const double c = squared_cost(xi, nu_.point(j), dom_) - hint(j);
      if (c < v) {
        v = c;
        best = j;
      }
    }
    return best;
  }

  // The k best targets of every source and k best sources of every target,
  // ranked by cost shifted with the potential hint (plain cost without one).
  void add_candidate_arcs() {
    const std::size_t k_row = std::min<std::size_t>(opt_.candidates_per_node, m_);
    const std::size_t k_col = std::min<std::size_t>(opt_.candidates_per_node, n_);
    std::vector<double> col_cost(static_cast<std::size_t>(m_) * k_col,
                                 std::numeric_limits<double>::infinity());
    std::vector<int> col_idx(static_cast<std::size_t>(m_) * k_col, -1);
    std::vector<double> row_cost(k_row);
    std::vector<int> row_idx(k_row);
    std::vector<double> shift(m_);
    for (int j = 0; j < m_; ++j) shift[j] = hint(j);
    for (int i = 0; i < n_; ++i) {
      std::fill(row_cost.begin(), row_cost.end(), std::numeric_limits<double>::infinity());
      std::fill(row_idx.begin(), row_idx.end(), -1);
      auto xi = mu_.point(i);
      for (int j = 0; j < m_; ++j) {
        const double c = squared_cost(xi, nu_.point(j), dom_) - shift[j];
        if (c < row_cost[k_row - 1]) insert_sorted(row_cost.data(), row_idx.data(), k_row, c, j);
      }
      // row_cost[0] is the c-transform of the hint at this source.
      const double phi = has_hint() ? row_cost[0] : 0.0;
      for (int j = 0; j < m_; ++j) {
        const double c = squared_cost(xi, nu_.point(j), dom_) - shift[j] - phi;
        double* cc = col_cost.data() + static_cast<std::size_t>(j) * k_col;
        if (c < cc[k_col - 1])
          insert_sorted(cc, col_idx.data() + static_cast<std::size_t>(j) * k_col, k_col, c, i);
      }
      for (std::size_t r = 0; r < k_row; ++r)
        if (row_idx[r] >= 0) add_arc(i, row_idx[r], 0.0, kLower);
    }
    for (int j = 0; j < m_; ++j)
      for (std::size_t r = 0; r < k_col; ++r) {
        const int i = col_idx[static_cast<std::size_t>(j) * k_col + r];
        if (i >= 0) add_arc(i, j, 0.0, kLower);
      }
  }

  static void insert_sorted(double* costs, int* idx, std::size_t k, double c, int id) {
    std::size_t p = k - 1;
    while (p > 0 && costs[p - 1] > c) {
      costs[p] = costs[p - 1];
      idx[p] = idx[p - 1];
      --p;
    }
    costs[p] = c;
    idx[p] = id;
  }

  // Full pricing: every pair whose reduced cost is below -eps_ is a
  // violator; the most negative few per source are appended as arcs.
  bool price_and_extend() {
    const std::size_t k = std::max<std::size_t>(1, opt_.additions_per_row);
    std::vector<double> best(k);
    std::vector<int> best_j(k);
    std::vector<double> pt(pi_.begin() + n_, pi_.end());
    bool any = false;
    for (int i = 0; i < n_; ++i) {
      std::fill(best.begin(), best.end(), -eps_);
      std::fill(best_j.begin(), best_j.end(), -1);
      auto xi = mu_.point(i);
      const double ui = pi_[i];
      for (int j = 0; j < m_; ++j) {
        const double rc = squared_cost(xi, nu_.point(j), dom_) + ui - pt[j];
        if (rc < best[k - 1]) insert_sorted(best.data(), best_j.data(), k, rc, j);
      }
      for (std::size_t r = 0; r < k; ++r)
        if (best_j[r] >= 0) {
          add_arc(i, best_j[r], 0.0, kLower);
          any = true;
        }
    }
    return any;
  }

  void build_tree() {
    // Adjacency of the basis.
    std::vector<int> deg(node_num_, 0);
    for (int e : tree_arcs_) {
      ++deg[src_[e]];
      ++deg[tgt_[e]];
    }
    std::vector<int> start(node_num_ + 1, 0);
    for (int u = 0; u < node_num_; ++u) start[u + 1] = start[u] + deg[u];
    std::vector<int> adj(start.back());
    std::vector<int> fill(start.begin(), start.end() - 1);
    for (int e : tree_arcs_) {
      adj[fill[src_[e]]++] = e;
      adj[fill[tgt_[e]]++] = e;
    }
    // Root at the middle of the northwest-corner staircase to halve its depth.
    root_ = src_[tree_arcs_[tree_arcs_.size() / 2]];
    parent_[root_] = -1;
    pred_[root_] = -1;
    pi_[root_] = 0.0;

    std::vector<int> order;
    order.reserve(node_num_);
    std::vector<int> stack{root_};
    std::vector<std::uint8_t> seen(node_num_, 0);
    seen[root_] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      order.push_back(u);
      for (int p = start[u + 1] - 1; p >= start[u]; --p) {
        const int e = adj[p];
        const int v = src_[e] == u ? tgt_[e] : src_[e];
        if (seen[v]) continue;
        seen[v] = 1;
        parent_[v] = u;
        pred_[v] = e;
        pred_dir_[v] = src_[e] == v ? kUp : kDown;
        pi_[v] = pred_dir_[v] == kUp ? pi_[u] - cost_[e] : pi_[u] + cost_[e];
        stack.push_back(v);
      }
    }
    if (static_cast<int>(order.size()) != node_num_)
      throw NumericalError("solve_discrete_ot: initial basis is not a spanning tree");
    for (int k = 0; k < node_num_; ++k) {
      const int u = order[k];
      const int v = order[(k + 1) % node_num_];
      thread_[u] = v;
      rev_thread_[v] = u;
    }
    for (int u = 0; u < node_num_; ++u) {
      succ_num_[u] = 1;
      last_succ_[u] = u;
    }
    for (int k = node_num_ - 1; k > 0; --k) {
      const int u = order[k];
      const int p = parent_[u];
      succ_num_[p] += succ_num_[u];
    }
    // Preorder: last successor of u is the node at position pos(u) + size(u) - 1.
    std::vector<int> pos(node_num_);
    for (int k = 0; k < node_num_; ++k) pos[order[k]] = k;
    for (int u = 0; u < node_num_; ++u) last_succ_[u] = order[pos[u] + succ_num_[u] - 1];
  }

  void recompute_potentials() {
    pi_[root_] = 0.0;
    for (int u = thread_[root_]; u != root_; u = thread_[u]) {
      const int e = pred_[u];
      const int p = parent_[u];
      pi_[u] = pred_dir_[u] == kUp ? pi_[p] - cost_[e] : pi_[p] + cost_[e];
    }
  }

  void pivot_loop() {
    const std::size_t arcs = src_.size();
    block_size_ = std::max<int>(10, static_cast<int>(std::sqrt(static_cast<double>(arcs))));
    if (next_arc_ >= static_cast<int>(arcs)) next_arc_ = 0;
    while (find_entering()) {
      find_join();
      find_leaving();
      change_flow();
      update_tree();
      update_potential();
      if (++pivots_ > opt_.max_pivots)
        throw NumericalError("solve_discrete_ot: pivot limit reached");
      if (opt_.validate_tree) validate();
    }
  }

  bool find_entering() {
    const int total = static_cast<int>(src_.size());
    double best = -eps_;
    int found = -1;
    int cnt = block_size_;
    int e;
    for (e = next_arc_; e < total; ++e) {
      const double c = state_[e] * (cost_[e] + pi_[src_[e]] - pi_[tgt_[e]]);
      if (c < best) {
        best = c;
        found = e;
      }
      if (--cnt == 0) {
        if (found >= 0) goto done;
        cnt = block_size_;
      }
    }
    for (e = 0; e < next_arc_; ++e) {
      const double c = state_[e] * (cost_[e] + pi_[src_[e]] - pi_[tgt_[e]]);
      if (c < best) {
        best = c;
        found = e;
      }
      if (--cnt == 0) {
        if (found >= 0) goto done;
        cnt = block_size_;
      }
    }
    if (found < 0) return false;
  done:
    in_arc_ = found;
    next_arc_ = e;
    return true;
  }

  void find_join() {
    int u = src_[in_arc_], v = tgt_[in_arc_];
    while (u != v) {
      if (succ_num_[u] < succ_num_[v]) u = parent_[u];
      else v = parent_[v];
    }
    join_ = u;
  }

  // Entering arcs are always at their lower bound, so flow is pushed from
  // the source of the entering arc through the arc and back along the tree.
  void find_leaving() {
    const int first = src_[in_arc_];
    const int second = tgt_[in_arc_];
    delta_ = std::numeric_limits<double>::infinity();
    int result = 0;
    for (int u = first; u != join_; u = parent_[u]) {
      if (pred_dir_[u] == kUp) {
        const double f = flow_[pred_[u]];
        if (f < delta_) {
          delta_ = f;
          u_out_ = u;
          result = 1;
        }
      }
    }
    for (int u = second; u != join_; u = parent_[u]) {
      if (pred_dir_[u] == kDown) {
        const double f = flow_[pred_[u]];
        if (f <= delta_) {
          delta_ = f;
          u_out_ = u;
          result = 2;
        }
      }
    }
    if (result == 0) throw NumericalError("solve_discrete_ot: unbounded pivot");
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
  }

  void change_flow() {
    if (delta_ > 0) {
      flow_[in_arc_] += delta_;
      for (int u = src_[in_arc_]; u != join_; u = parent_[u]) flow_[pred_[u]] -= pred_dir_[u] * delta_;
      for (int u = tgt_[in_arc_]; u != join_; u = parent_[u]) flow_[pred_[u]] += pred_dir_[u] * delta_;
    }
    state_[in_arc_] = kTree;
    const int leaving = pred_[u_out_];
    flow_[leaving] = 0.0;
    state_[leaving] = kLower;
  }

  void update_tree() {
    const int old_rev_thread = rev_thread_[u_out_];
    const int old_succ_num = succ_num_[u_out_];
    const int old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];

    if (u_in_ == u_out_) {
      parent_[u_in_] = v_in_;
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == src_[in_arc_] ? kUp : kDown;
      if (thread_[v_in_] != u_out_) {
        int after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in_];
        thread_[v_in_] = u_out_;
        rev_thread_[u_out_] = v_in_;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      // When old_rev_thread == v_in, join and v_out coincide.
      const int thread_continue =
          old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

      // Re-hang the stem u_in .. u_out below v_in, reversing parent links.
      int stem = u_in_;
      int par_stem = v_in_;
      int last = last_succ_[u_in_];
      int after = thread_[last];
      thread_[v_in_] = u_in_;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in_);
      while (stem != u_out_) {
        const int next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_revs_.push_back(last);

        const int before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;

        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;

        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out_] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out_] = last;

      if (old_rev_thread != v_in_) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }
      for (int u : dirty_revs_) rev_thread_[thread_[u]] = u;

      int tmp_sc = 0;
      const int tmp_ls = last_succ_[u_out_];
      for (int u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
        pred_[u] = pred_[p];
        pred_dir_[u] = static_cast<signed char>(-pred_dir_[p]);
        tmp_sc += succ_num_[u] - succ_num_[p];
        succ_num_[u] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == src_[in_arc_] ? kUp : kDown;
      succ_num_[u_in_] = old_succ_num;
    }

    const int up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
    const int last_succ_out = last_succ_[u_out_];
    for (int u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u]) last_succ_[u] = last_succ_out;

    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = old_rev_thread;
    } else if (last_succ_out != old_last_succ) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = last_succ_out;
    }

    for (int u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
    for (int u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
  }

  void update_potential() {
    const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * cost_[in_arc_];
    const int end = thread_[last_succ_[u_in_]];
    // Potentials are defined up to a constant, so shifting the complement
    // by -sigma is equivalent and cheaper when the subtree is large.
    if (2 * succ_num_[u_in_] <= node_num_) {
      for (int u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
    } else {
      for (int u = end; u != u_in_; u = thread_[u]) pi_[u] -= sigma;
    }
  }

  void validate() const {
    // Thread must be a single cycle through all nodes in preorder.
    std::vector<int> depth(node_num_, -1);
    int count = 0;
    int u = root_;
    std::vector<int> order;
    do {
      order.push_back(u);
      if (rev_thread_[thread_[u]] != u) throw NumericalError("validate: rev_thread mismatch");
      u = thread_[u];
      if (++count > node_num_) throw NumericalError("validate: thread is not a cycle");
    } while (u != root_);
    if (count != node_num_) throw NumericalError("validate: thread misses nodes");
    std::vector<int> sz(node_num_, 1);
    for (int k = node_num_ - 1; k > 0; --k) sz[parent_[order[k]]] += sz[order[k]];
    std::vector<int> pos(node_num_);
    for (int k = 0; k < node_num_; ++k) pos[order[k]] = k;
    for (int v = 0; v < node_num_; ++v) {
      if (sz[v] != succ_num_[v]) throw NumericalError("validate: succ_num mismatch");
      if (order[pos[v] + sz[v] - 1] != last_succ_[v]) throw NumericalError("validate: last_succ mismatch");
      if (v != root_) {
        const int e = pred_[v];
        if (state_[e] != kTree) throw NumericalError("validate: pred arc not in tree");
        const bool up = src_[e] == v;
        if ((up ? kUp : kDown) != pred_dir_[v]) throw NumericalError("validate: pred_dir mismatch");
        const int other = up ? tgt_[e] : src_[e];
        if (other != parent_[v]) throw NumericalError("validate: parent mismatch");
        if (pos[parent_[v]] >= pos[v]) throw NumericalError("validate: thread not preorder");
        const double rc = cost_[e] + pi_[src_[e]] - pi_[tgt_[e]];
        if (std::abs(rc) > 1e-9) throw NumericalError("validate: tree arc has nonzero reduced cost");
        if (flow_[e] < 0) throw NumericalError("validate: negative flow");
      }
    }
  }

  const WeightedCloud& mu_;
  const WeightedCloud& nu_;
  Domain dom_;
  SolverOptions opt_;
  int n_, m_, node_num_ = 0;
  std::size_t d_;
  double eps_ = 0.0;

  std::vector<int> src_, tgt_;
  std::vector<double> cost_, flow_;
  std::vector<signed char> state_;
  std::vector<int> tree_arcs_;
  std::size_t basis_arc_count_ = 0;

  std::vector<double> pi_;
  std::vector<int> parent_, pred_, thread_, rev_thread_, succ_num_, last_succ_;
  std::vector<signed char> pred_dir_;
  std::vector<int> dirty_revs_;
  int root_ = 0;

  int in_arc_ = -1, join_ = -1, u_in_ = -1, v_in_ = -1, u_out_ = -1, v_out_ = -1;
  double delta_ = 0.0;
  int next_arc_ = 0;
  int block_size_ = 10;
  std::size_t pivots_ = 0;
  std::size_t pricing_rounds_ = 0;
};

void check_pair(const WeightedCloud& mu, const WeightedCloud& nu, Metric metric,
                const SolverOptions& opt) {
  if (mu.empty() || nu.empty()) throw InvalidArgument("solve_discrete_ot: empty measure");
  if (mu.dim() != nu.dim()) throw InvalidArgument("solve_discrete_ot: dimension mismatch");
  if (mu.domain() != nu.domain()) throw InvalidArgument("solve_discrete_ot: domain mismatch");
  if (metric_domain(metric) != mu.domain())
    throw InvalidArgument("solve_discrete_ot: metric does not match the domain tag");
  if (!opt.target_potential_hint.empty() && opt.target_potential_hint.size() != nu.size())
    throw InvalidArgument("solve_discrete_ot: potential hint length mismatch");
}

}  // namespace

std::vector<std::size_t> hilbert_order(const WeightedCloud& cloud) {
  std::vector<std::size_t> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (cloud.dim() == 1 || cloud.dim() > 64) {
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
      return cloud.point(a)[0] < cloud.point(b)[0];
    });
    return perm;
  }
  const unsigned bits = static_cast<unsigned>(std::min<std::size_t>(20, 64 / cloud.dim()));
  std::vector<std::uint64_t> keys(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) keys[i] = hilbert_key(cloud.point(i), bits);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return perm;
}

OtSolution solve_discrete_ot(const WeightedCloud& mu, const WeightedCloud& nu, Metric metric,
                             const SolverOptions& options) {
  check_pair(mu, nu, metric, options);
  const double total_mu = compensated_sum(mu.weights());
  const double total_nu = compensated_sum(nu.weights());
  if (std::abs(total_mu - total_nu) > 1e-12)
    throw InvalidArgument("solve_discrete_ot: marginals carry different total mass");
  if (mu.size() > static_cast<std::size_t>(INT_MAX / 2) || nu.size() > static_cast<std::size_t>(INT_MAX / 2) ||
      mu.size() * nu.size() > options.max_pairs)
    throw InvalidArgument("solve_discrete_ot: problem of size " + std::to_string(mu.size()) + " x " +
                          std::to_string(nu.size()) + " exceeds the configured cap");
  TransportSimplex simplex(mu, nu, metric_domain(metric), options);
  simplex.run();
  return simplex.result();
}

namespace {

constexpr std::size_t kCoarseSolvePairs = 2'000'000;

GridOtSolution grid_solve(std::size_t dim, std::size_t m, Domain domain,
                          std::span<const double> cell_weights, const WeightedCloud& nu,
                          const SolverOptions& options) {
  GridOtSolution out;
  std::vector<double> coords, weights;
  std::vector<std::size_t> idx(dim);
  for (std::size_t c = 0; c < cell_weights.size(); ++c) {
    if (cell_weights[c] <= 0.0) continue;
    out.cells.push_back(c);
    std::size_t r = c;
    for (std::size_t a = dim; a-- > 0;) {
      idx[a] = r % m;
      r /= m;
    }
    for (std::size_t a = 0; a < dim; ++a) coords.push_back((static_cast<double>(idx[a]) + 0.5) / static_cast<double>(m));
    weights.push_back(cell_weights[c]);
  }
  const double total = compensated_sum(weights);
  for (double& w : weights) w /= total;
  out.source = WeightedCloud(dim, domain, std::move(coords), std::move(weights));

  SolverOptions opt = options;
  if (opt.target_potential_hint.empty() && out.cells.size() * nu.size() > kCoarseSolvePairs && m >= 4) {
    const std::size_t mc = (m + 1) / 2;
    std::vector<double> coarse(checked_pow(mc, dim, cell_weights.size()), 0.0);
    for (std::size_t c = 0; c < cell_weights.size(); ++c) {
      if (cell_weights[c] <= 0.0) continue;
      std::size_t r = c, cc = 0, stride = 1;
      for (std::size_t a = dim; a-- > 0;) {
        cc += ((r % m) / 2) * stride;
        r /= m;
        stride *= mc;
      }
      coarse[cc] += cell_weights[c];
    }
    GridOtSolution sub = grid_solve(dim, mc, domain, coarse, nu, options);
    opt.target_potential_hint = std::move(sub.solution.duals.psi);
  }
  out.solution = solve_discrete_ot(out.source, nu, metric_for(domain), opt);
  return out;
}

}  // namespace

GridOtSolution solve_grid_to_cloud(std::size_t dim, std::size_t m, Domain domain,
                                   std::span<const double> cell_weights, const WeightedCloud& nu,
                                   const SolverOptions& options) {
  if (dim == 0 || m < 1) throw InvalidArgument("solve_grid_to_cloud: empty grid");
  if (checked_pow(m, dim, cell_weights.size()) != cell_weights.size())
    throw InvalidArgument("solve_grid_to_cloud: weight count is not m^d");
  if (nu.dim() != dim || nu.domain() != domain)
    throw InvalidArgument("solve_grid_to_cloud: target does not live on the grid's domain");
  return grid_solve(dim, m, domain, cell_weights, nu, options);
}

std::vector<double> c_transform(std::span<const double> phi, const WeightedCloud& a,
                                std::span<const double> query, Metric metric) {
  if (a.empty()) throw InvalidArgument("c_transform: empty cloud");
  if (phi.size() != a.size()) throw InvalidArgument("c_transform: potential length mismatch");
  const std::size_t d = a.dim();
  if (query.size() % d != 0) throw InvalidArgument("c_transform: ragged query");
  const Domain dom = metric_domain(metric);
  const std::size_t q = query.size() / d;
  std::vector<double> out(q);
  for (std::size_t k = 0; k < q; ++k) {
    std::span<const double> y(query.data() + k * d, d);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) best = std::min(best, squared_cost(a.point(i), y, dom) - phi[i]);
    out[k] = best;
  }
  return out;
}

std::vector<double> c_transform(std::span<const double> phi, const WeightedCloud& a,
                                const std::vector<Point>& query, Metric metric) {
  std::vector<double> flat;
  flat.reserve(query.size() * a.dim());
  for (const Point& p : query) {
    if (p.dim() != a.dim()) throw InvalidArgument("c_transform: query dimension mismatch");
    flat.insert(flat.end(), p.coords.begin(), p.coords.end());
  }
  return c_transform(phi, a, flat, metric);
}

double displacement_cost(const Coupling& coupling, const WeightedCloud& x, const WeightedCloud& y,
                         const MapFunction& t0) {
  const std::size_t d = x.dim();
  std::vector<double> tx(d);
  const Domain dom = x.domain();
  double total = 0.0;
  for (const auto& e : coupling.entries) {
    t0(x.point(e.i), tx);
    total += e.mass * squared_cost(tx, y.point(e.j), dom);
  }
  return total;
}

}  // namespace otplug
