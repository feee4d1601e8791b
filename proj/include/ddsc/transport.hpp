#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ddsc/error.hpp"

namespace ddsc {

/// Coupling between two discrete measures. `u`/`v` are dual potentials
/// (Kantorovich multipliers for the exact solver, entropic potentials for
/// Sinkhorn).
struct TransportPlan {
  Eigen::MatrixXd plan;
  double objective = 0.0;
  Eigen::VectorXd a, b;
  Eigen::VectorXd u, v;

  double row_residual() const { return (plan.rowwise().sum() - a).lpNorm<1>(); }
  double col_residual() const { return (plan.colwise().sum().transpose() - b).lpNorm<1>(); }
};

/// Process-wide count of exact OT solves, for instrumentation.
inline std::atomic<std::uint64_t>& exact_solve_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

namespace detail {

/// Transportation simplex on an m x n problem (network simplex specialised to
/// the complete bipartite graph). The basis is a spanning tree over the m + n
/// row/column nodes with exactly m + n - 1 basic cells, some possibly at zero
/// flow. Initial basis from Vogel's approximation; pivots enter the most
/// negative reduced cost and fall back to Bland's rule after a run of
/// degenerate pivots.
class TransportSimplex {
 public:
  TransportSimplex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply, const Eigen::VectorXd& demand)
      : c_(cost), m_(static_cast<int>(cost.rows())), n_(static_cast<int>(cost.cols())), supply_(supply), demand_(demand) {}

  void solve() {
    flow_ = Eigen::MatrixXd::Zero(m_, n_);
    basic_.assign(static_cast<std::size_t>(m_) * n_, 0);
    basis_.clear();
    vogel();
    if (static_cast<int>(basis_.size()) != m_ + n_ - 1)
      throw Error(Errc::solver_failure, "initial basis has " + std::to_string(basis_.size()) + " cells, expected " +
                                            std::to_string(m_ + n_ - 1));

    double cmax = 0.0;
    for (Eigen::Index j = 0; j < c_.cols(); ++j)
      for (Eigen::Index i = 0; i < c_.rows(); ++i) cmax = std::max(cmax, std::abs(c_(i, j)));
    const double tol = 1e-12 * std::max(1.0, cmax) * (m_ + n_);

    const long max_pivots = 50L * (m_ + n_) * (m_ + n_) + 1000;
    int degenerate_run = 0;
    bool bland = false;
    for (long pivot = 0;; ++pivot) {
      if (pivot > max_pivots) throw Error(Errc::solver_failure, "pivot limit exceeded");
      potentials();
      int ei = -1, ej = -1;
      double best = -tol;
      for (int i = 0; i < m_ && !(bland && ei >= 0); ++i) {
        for (int j = 0; j < n_; ++j) {
          if (basic_[idx(i, j)]) continue;
          const double r = c_(i, j) - u_[i] - v_[j];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) break;
      const bool degenerate = pivot_on(ei, ej);
      degenerate_run = degenerate ? degenerate_run + 1 : 0;
      bland = degenerate_run > 2 * (m_ + n_);
    }
  }

  const Eigen::MatrixXd& flow() const { return flow_; }
  const Eigen::VectorXd& u() const { return u_; }
  const Eigen::VectorXd& v() const { return v_; }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

  void add_basic(int i, int j, double x) {
    flow_(i, j) = x;
    basic_[idx(i, j)] = 1;
    basis_.push_back({i, j});
  }

  void vogel() {
    std::vector<double> s(supply_.data(), supply_.data() + m_);
    std::vector<double> d(demand_.data(), demand_.data() + n_);
    std::vector<char> row_done(m_, 0), col_done(n_, 0);
    int rows_left = m_, cols_left = n_;
    constexpr double inf = std::numeric_limits<double>::infinity();

    // Penalty of a line: gap between its two cheapest open cells.
    auto penalty = [&](bool is_row, int k, int& arg) {
      double lo = inf, lo2 = inf;
      arg = -1;
      const int len = is_row ? n_ : m_;
      for (int t = 0; t < len; ++t) {
        if (is_row ? col_done[t] : row_done[t]) continue;
        const double cst = is_row ? c_(k, t) : c_(t, k);
        if (cst < lo) {
          lo2 = lo;
          lo = cst;
          arg = t;
        } else if (cst < lo2) {
          lo2 = cst;
        }
      }
      return lo2 == inf ? lo : lo2 - lo;
    };

    while (rows_left > 0 && cols_left > 0) {
      int bi = -1, bj = -1;
      if (rows_left == 1 || cols_left == 1) {
        // Remaining cells are forced; take them in index order.
        for (int i = 0; i < m_ && bi < 0; ++i)
          if (!row_done[i])
            for (int j = 0; j < n_; ++j)
              if (!col_done[j]) {
                bi = i;
                bj = j;
                break;
              }
      } else {
        double best = -inf;
        for (int i = 0; i < m_; ++i) {
          if (row_done[i]) continue;
          int arg;
          const double p = penalty(true, i, arg);
          if (p > best) {
            best = p;
            bi = i;
            bj = arg;
          }
        }
        for (int j = 0; j < n_; ++j) {
          if (col_done[j]) continue;
          int arg;
          const double p = penalty(false, j, arg);
          if (p > best) {
            best = p;
            bi = arg;
            bj = j;
          }
        }
      }

      if (rows_left == 1 && cols_left == 1) {
        add_basic(bi, bj, std::max(0.0, s[bi]));
        row_done[bi] = col_done[bj] = 1;
        --rows_left;
        --cols_left;
      } else if (rows_left == 1) {
        const double x = std::max(0.0, d[bj]);
        add_basic(bi, bj, x);
        s[bi] = std::max(0.0, s[bi] - x);
        d[bj] = 0.0;
        col_done[bj] = 1;
        --cols_left;
      } else if (cols_left == 1 || s[bi] <= d[bj]) {
        const double x = cols_left == 1 ? std::max(0.0, s[bi]) : std::max(0.0, std::min(s[bi], d[bj]));
        add_basic(bi, bj, x);
        d[bj] = std::max(0.0, d[bj] - x);
        s[bi] = 0.0;
        row_done[bi] = 1;
        --rows_left;
      } else {
        const double x = d[bj];
        add_basic(bi, bj, x);
        s[bi] -= x;
        d[bj] = 0.0;
        col_done[bj] = 1;
        --cols_left;
      }
    }
  }

  void build_tree() {
    const int nodes = m_ + n_;
    adj_.assign(static_cast<std::size_t>(nodes), {});
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      adj_[basis_[e].i].push_back(static_cast<int>(e));
      adj_[m_ + basis_[e].j].push_back(static_cast<int>(e));
    }
  }

  int other_end(int node, int edge) const {
    const auto& cell = basis_[static_cast<std::size_t>(edge)];
    return node < m_ ? m_ + cell.j : cell.i;
  }

  void potentials() {
    build_tree();
    u_ = Eigen::VectorXd::Zero(m_);
    v_ = Eigen::VectorXd::Zero(n_);
    std::vector<char> seen(static_cast<std::size_t>(m_ + n_), 0);
    stack_.clear();
    stack_.push_back(0);
    seen[0] = 1;
    int visited = 1;
    while (!stack_.empty()) {
      const int node = stack_.back();
      stack_.pop_back();
      for (int e : adj_[node]) {
        const int nxt = other_end(node, e);
        if (seen[nxt]) continue;
        seen[nxt] = 1;
        ++visited;
        const auto& cell = basis_[static_cast<std::size_t>(e)];
        if (nxt >= m_)
          v_[cell.j] = c_(cell.i, cell.j) - u_[cell.i];
        else
          u_[cell.i] = c_(cell.i, cell.j) - v_[cell.j];
        stack_.push_back(nxt);
      }
    }
    if (visited != m_ + n_) throw Error(Errc::solver_failure, "basis is not a spanning tree");
  }

  // Returns true when the pivot was degenerate (zero step).
  bool pivot_on(int ei, int ej) {
    // Tree path from row node ei to column node m_ + ej.
    const int nodes = m_ + n_;
    parent_edge_.assign(static_cast<std::size_t>(nodes), -1);
    std::vector<char> seen(static_cast<std::size_t>(nodes), 0);
    stack_.clear();
    stack_.push_back(ei);
    seen[ei] = 1;
    const int target = m_ + ej;
    while (!stack_.empty() && !seen[target]) {
      const int node = stack_.back();
      stack_.pop_back();
      for (int e : adj_[node]) {
        const int nxt = other_end(node, e);
        if (seen[nxt]) continue;
        seen[nxt] = 1;
        parent_edge_[nxt] = e;
        stack_.push_back(nxt);
      }
    }
    if (!seen[target]) throw Error(Errc::solver_failure, "no basis cycle for entering cell");

    // Walk back from the column node; edges alternate -, +, -, ... ending with -.
    cycle_.clear();
    int node = target;
    while (node != ei) {
      const int e = parent_edge_[node];
      cycle_.push_back(e);
      node = other_end(node, e);
    }

    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    std::size_t leave_key = 0;
    for (std::size_t k = 0; k < cycle_.size(); k += 2) {
      const auto& cell = basis_[static_cast<std::size_t>(cycle_[k])];
      const double x = flow_(cell.i, cell.j);
      const std::size_t key = idx(cell.i, cell.j);
      if (x < theta || (x == theta && key < leave_key)) {
        theta = x;
        leave = cycle_[k];
        leave_key = key;
      }
    }

    for (std::size_t k = 0; k < cycle_.size(); ++k) {
      const auto& cell = basis_[static_cast<std::size_t>(cycle_[k])];
      if (k % 2 == 0)
        flow_(cell.i, cell.j) = std::max(0.0, flow_(cell.i, cell.j) - theta);
      else
        flow_(cell.i, cell.j) += theta;
    }
    const auto out = basis_[static_cast<std::size_t>(leave)];
    flow_(out.i, out.j) = 0.0;
    basic_[idx(out.i, out.j)] = 0;
    basis_[static_cast<std::size_t>(leave)] = {ei, ej};
    basic_[idx(ei, ej)] = 1;
    flow_(ei, ej) = theta;
    return theta == 0.0;
  }

  struct Cell {
    int i, j;
  };

  const Eigen::MatrixXd& c_;
  int m_, n_;
  Eigen::VectorXd supply_, demand_;
  Eigen::MatrixXd flow_;
  std::vector<char> basic_;
  std::vector<Cell> basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> stack_, parent_edge_, cycle_;
  Eigen::VectorXd u_, v_;
};

}  // namespace detail

/// Exact optimal transport min <P, C> over couplings of a and b. The returned
/// plan is a basic feasible (vertex) solution.
inline TransportPlan solve_exact_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (cost.rows() != a.size() || cost.cols() != b.size() || a.size() == 0 || b.size() == 0)
    throw Error(Errc::shape_mismatch, "cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                                          ", marginals " + std::to_string(a.size()) + "/" + std::to_string(b.size()));
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any() || !a.allFinite() || !b.allFinite())
    throw Error(Errc::solver_failure, "marginals must be finite and non-negative");
  const double sa = a.sum(), sb = b.sum();
  if (!(sa > 0.0) || std::abs(sa - sb) > 1e-7 * std::max(1.0, sa))
    throw Error(Errc::solver_failure, "infeasible marginals: row mass " + std::to_string(sa) + " vs column mass " +
                                          std::to_string(sb) + " (residual " + std::to_string(sa - sb) + ")");

  // Absorb normalisation drift into the demand side.
  const Eigen::VectorXd demand = b * (sa / sb);
  detail::TransportSimplex simplex(cost, a, demand);
  simplex.solve();
  exact_solve_counter().fetch_add(1, std::memory_order_relaxed);

  TransportPlan out;
  out.plan = simplex.flow();
  out.a = a;
  out.b = b;
  out.u = simplex.u();
  out.v = simplex.v();
  out.objective = (out.plan.array() * cost.array()).sum();
  return out;
}

}  // namespace ddsc
