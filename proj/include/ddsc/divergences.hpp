#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddsc/distribution.hpp"
#include "ddsc/error.hpp"
#include "ddsc/random.hpp"
#include "ddsc/transport.hpp"

namespace ddsc {

/// Squared Euclidean cost c_ij = ||x_i - y_j||^2, evaluated as a sum of
/// squared coordinate differences (no ||x||^2 + ||y||^2 - 2<x,y> cancellation),
/// so cost(X, Y) == cost(Y, X)^T bit-for-bit and entries vanish only on equal points.
inline Matrix cost_matrix(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols())
    throw Error(Errc::dimension_mismatch, "cost_matrix: d=" + std::to_string(x.cols()) + " vs d=" + std::to_string(y.cols()));
  Matrix c(x.rows(), y.rows());
  const auto d = x.cols();
  for (Eigen::Index j = 0; j < y.rows(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double t = x(i, k) - y(j, k);
        s += t * t;
      }
      c(i, j) = s;
    }
  return c;
}

// ---------------------------------------------------------------------------
// MMD
// ---------------------------------------------------------------------------

/// Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 bandwidth^2)). A missing
/// bandwidth means "resolve with the median heuristic first".
struct KernelSpec {
  std::optional<double> bandwidth;

  static KernelSpec gaussian(double sigma) { return KernelSpec{sigma}; }
  static KernelSpec median_heuristic() { return KernelSpec{}; }
};

namespace detail {

// sum_{i != j} w_i w_j k(x_i, x_j) / (1 - sum_i w_i^2); equals the
// 1/(m(m-1)) double sum for uniform weights.
inline double within_term(const Matrix& x, const Vector& w, double inv_two_s2) {
  const auto m = x.rows();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      double d2 = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        const double t = x(i, k) - x(j, k);
        d2 += t * t;
      }
      acc += 2.0 * w[i] * w[j] * std::exp(-d2 * inv_two_s2);
    }
  const double norm = 1.0 - w.squaredNorm();
  if (!(norm > 0.0)) throw Error(Errc::too_few_samples, "all mass on a single support point");
  return acc / norm;
}

}  // namespace detail

/// Unbiased MMD^2 estimate (may be negative). Symmetric in (X, Y).
inline double mmd2(const Matrix& x, const Vector& wx, const Matrix& y, const Vector& wy, const KernelSpec& kernel) {
  if (x.cols() != y.cols()) throw Error(Errc::dimension_mismatch, "mmd2: dimensions differ");
  if (x.rows() < 2 || y.rows() < 2)
    throw Error(Errc::too_few_samples, "mmd2 needs m >= 2 on both sides (got " + std::to_string(x.rows()) + ", " +
                                           std::to_string(y.rows()) + ")");
  if (wx.size() != x.rows() || wy.size() != y.rows()) throw Error(Errc::shape_mismatch, "mmd2: weights/support size mismatch");
  if (!kernel.bandwidth || !(*kernel.bandwidth > 0.0)) throw Error(Errc::bandwidth_not_resolved, "gaussian kernel bandwidth unset");
  const double inv = 1.0 / (2.0 * *kernel.bandwidth * *kernel.bandwidth);

  const double kxx = detail::within_term(x, wx, inv);
  const double kyy = detail::within_term(y, wy, inv);
  double kxy = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      double d2 = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        const double t = x(i, k) - y(j, k);
        d2 += t * t;
      }
      kxy += wx[i] * wy[j] * std::exp(-d2 * inv);
    }
  return kxx + kyy - 2.0 * kxy;
}

inline double mmd2(const DiscreteDistribution& p, const DiscreteDistribution& q, const KernelSpec& kernel) {
  return mmd2(p.support, p.weights, q.support, q.weights, kernel);
}

/// Median pairwise Euclidean distance over the pooled support points (all
/// pairs when there are at most 10^4, otherwise 10^4 seeded random pairs).
/// Degenerate data (median 0) falls back to 1.
inline double resolve_bandwidth(const DistributionSet& set, std::uint64_t seed) {
  Eigen::Index total = 0;
  for (const auto& d : set.distributions) total += d.size();
  if (total < 2) throw Error(Errc::too_few_samples, "bandwidth needs at least 2 support points");
  const auto dim = set.dim();

  Matrix pooled(total, dim);
  Eigen::Index r = 0;
  for (const auto& d : set.distributions) {
    pooled.middleRows(r, d.size()) = d.support;
    r += d.size();
  }

  constexpr std::uint64_t kMaxPairs = 10000;
  const auto n = static_cast<std::uint64_t>(total);
  const std::uint64_t all_pairs = n * (n - 1) / 2;
  std::vector<double> dist;
  if (all_pairs <= kMaxPairs) {
    dist.reserve(all_pairs);
    for (Eigen::Index i = 0; i < total; ++i)
      for (Eigen::Index j = i + 1; j < total; ++j) dist.push_back((pooled.row(i) - pooled.row(j)).norm());
  } else {
    Rng rng = make_rng(seed, 0xBA4D);
    dist.reserve(kMaxPairs);
    while (dist.size() < kMaxPairs) {
      const auto i = static_cast<Eigen::Index>(uniform_index(rng, n));
      const auto j = static_cast<Eigen::Index>(uniform_index(rng, n));
      if (i == j) continue;
      dist.push_back((pooled.row(i) - pooled.row(j)).norm());
    }
  }
  std::sort(dist.begin(), dist.end());
  const std::size_t k = dist.size();
  const double median = k % 2 ? dist[k / 2] : 0.5 * (dist[k / 2 - 1] + dist[k / 2]);
  return median > 0.0 && std::isfinite(median) ? median : 1.0;
}

// ---------------------------------------------------------------------------
// Exact 2-Wasserstein
// ---------------------------------------------------------------------------

struct WassersteinResult {
  double distance = 0.0;  // sqrt of the optimal transport cost
  TransportPlan plan;     // vertex solution; plan.objective is the squared distance
};

inline WassersteinResult wasserstein2_exact(const Matrix& x, const Vector& wx, const Matrix& y, const Vector& wy) {
  const Matrix c = cost_matrix(x, y);
  WassersteinResult out;
  out.plan = solve_exact_transport(c, wx, wy);
  out.distance = std::sqrt(std::max(0.0, out.plan.objective));
  return out;
}

inline WassersteinResult wasserstein2_exact(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  return wasserstein2_exact(p.support, p.weights, q.support, q.weights);
}

// ---------------------------------------------------------------------------
// Entropic OT (Sinkhorn)
// ---------------------------------------------------------------------------

struct SinkhornOptions {
  double epsilon = 1.0;
  double tol = 1e-9;
  int max_iter = 10000;
};

struct SinkhornResult {
  double value = 0.0;           // <P, C> + epsilon * KL(P || a x b)
  double transport_cost = 0.0;  // <P, C>
  double kl = 0.0;
  TransportPlan plan;  // u, v hold the dual potentials
  int iterations = 0;
  double residual = 0.0;  // l1 row + column marginal violation
  bool converged = false;
};

/// Thrown when Sinkhorn stops at max_iter above tolerance; carries the last iterate.
class SinkhornNotConverged : public Error {
 public:
  explicit SinkhornNotConverged(SinkhornResult partial)
      : Error(Errc::not_converged, "sinkhorn stopped after " + std::to_string(partial.iterations) +
                                       " iterations with marginal residual " + std::to_string(partial.residual)),
        partial_(std::move(partial)) {}
  const SinkhornResult& partial() const noexcept { return partial_; }

 private:
  SinkhornResult partial_;
};

namespace detail {

// Stabilised scaling iterations on P_ij = a_i b_j exp((f_i + g_j - C_ij)/eps)
// with log-domain potentials f, g; bounded scalings u, v are absorbed back into
// f, g whenever they drift past exp(+-kAbsorb). Updates f, g in place and
// returns {iterations, row residual}.
inline std::pair<int, double> sinkhorn_stage(const Matrix& c, const Vector& a, const Vector& b, double eps, double tol,
                                             int max_iter, Vector& f, Vector& g) {
  const auto m = c.rows(), n = c.cols();
  constexpr double kAbsorb = 50.0;
  const Vector log_a = a.array().log().matrix(), log_b = b.array().log().matrix();

  Matrix kernel(m, n);
  auto rebuild = [&] {
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < m; ++i) kernel(i, j) = std::exp((f[i] + g[j] - c(i, j)) / eps + log_a[i] + log_b[j]);
  };
  // Exact log-domain half steps, used when scalings under/overflow.
  auto log_update_f = [&] {
    for (Eigen::Index i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) mx = std::max(mx, (g[j] - c(i, j)) / eps + log_b[j]);
      double s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) s += std::exp((g[j] - c(i, j)) / eps + log_b[j] - mx);
      f[i] = -eps * (mx + std::log(s));
    }
  };
  auto log_update_g = [&] {
    for (Eigen::Index j = 0; j < n; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) mx = std::max(mx, (f[i] - c(i, j)) / eps + log_a[i]);
      double s = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) s += std::exp((f[i] - c(i, j)) / eps + log_a[i] - mx);
      g[j] = -eps * (mx + std::log(s));
    }
  };
  auto bad = [](const Vector& v) { return !v.allFinite() || (v.array() <= 0.0).any(); };

  log_update_f();
  log_update_g();
  rebuild();

  Vector u = Vector::Ones(m), v = Vector::Ones(n);
  Vector kv = kernel * v;
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  for (; it < max_iter; ++it) {
    residual = (u.cwiseProduct(kv) - a).lpNorm<1>();
    if (residual <= tol) break;

    u = a.cwiseQuotient(kv);
    v = b.cwiseQuotient(kernel.transpose() * u);
    if (bad(u) || bad(v)) {
      log_update_f();
      log_update_g();
      rebuild();
      u.setOnes();
      v.setOnes();
    } else if (u.array().log().abs().maxCoeff() > kAbsorb || v.array().log().abs().maxCoeff() > kAbsorb) {
      f += eps * u.array().log().matrix();
      g += eps * v.array().log().matrix();
      rebuild();
      u.setOnes();
      v.setOnes();
    }
    kv = kernel * v;
  }
  f += eps * u.array().log().matrix();
  g += eps * v.array().log().matrix();
  return {it, residual};
}

// Damped Newton ascent on the dual
//   D(f, g) = <f, a> + <g, b> - eps * sum_ij a_i b_j exp((f_i + g_j - C_ij)/eps),
// used to finish when scaling iterations stall. The gauge direction (f + t, g - t)
// is removed by pinning the last g. Returns {steps, residual}.
inline std::pair<int, double> sinkhorn_newton(const Matrix& c, const Vector& a, const Vector& b, double eps, double tol,
                                              int max_steps, Vector& f, Vector& g) {
  const auto m = c.rows(), n = c.cols();
  const auto k = m + n - 1;
  auto plan_of = [&](const Vector& ff, const Vector& gg) {
    Matrix p(m, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < m; ++i) p(i, j) = a[i] * b[j] * std::exp((ff[i] + gg[j] - c(i, j)) / eps);
    return p;
  };
  auto dual = [&](const Vector& ff, const Vector& gg, const Matrix& p) { return ff.dot(a) + gg.dot(b) - eps * p.sum(); };

  Matrix p = plan_of(f, g);
  double value = dual(f, g, p);
  double residual = (p.rowwise().sum() - a).lpNorm<1>() + (p.colwise().sum().transpose() - b).lpNorm<1>();
  int step = 0;
  for (; step < max_steps && residual > tol; ++step) {
    const Vector row = p.rowwise().sum(), col = p.colwise().sum().transpose();
    Vector grad(k);
    grad.head(m) = a - row;
    grad.tail(n - 1) = (b - col).head(n - 1);
    Matrix h = Matrix::Zero(k, k);
    h.topLeftCorner(m, m).diagonal() = row;
    h.bottomRightCorner(n - 1, n - 1).diagonal() = col.head(n - 1);
    h.topRightCorner(m, n - 1) = p.leftCols(n - 1);
    h.bottomLeftCorner(n - 1, m) = p.leftCols(n - 1).transpose();
    // Tiny ridge keeps the factorisation defined when some rows carry ~no mass.
    h.diagonal().array() += 1e-14 * h.diagonal().maxCoeff();
    const Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success) break;
    const Vector dir = eps * ldlt.solve(grad);
    const double slope = grad.dot(dir);
    if (!(slope > 0.0) || !dir.allFinite()) break;

    bool accepted = false;
    for (double t = 1.0; t > 1e-12; t *= 0.5) {
      Vector nf = f + t * dir.head(m), ng = g;
      ng.head(n - 1) += t * dir.tail(n - 1);
      Matrix np = plan_of(nf, ng);
      const double nv = dual(nf, ng, np);
      if (std::isfinite(nv) && nv >= value + 1e-4 * t * slope) {
        f = std::move(nf);
        g = std::move(ng);
        p = std::move(np);
        value = nv;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    residual = (p.rowwise().sum() - a).lpNorm<1>() + (p.colwise().sum().transpose() - b).lpNorm<1>();
  }
  return {step, residual};
}

// Epsilon-scaling: potentials are warm-started through a geometric schedule
// eps_0 = max C, eps_{k+1} = eps_k / 2, ending at the target eps. Plain
// scaling iterations converge only sublinearly once eps << max C, so a
// stalled final stage is finished with Newton steps on the dual.
inline SinkhornResult sinkhorn_positive(const Matrix& c, const Vector& a, const Vector& b, const SinkhornOptions& opt) {
  const auto m = c.rows(), n = c.cols();
  const double eps = opt.epsilon;
  constexpr int kStageIters = 1000;

  Vector f(m), g(n);
  for (Eigen::Index i = 0; i < m; ++i) f[i] = c.row(i).minCoeff();
  for (Eigen::Index j = 0; j < n; ++j) g[j] = (c.col(j) - f).minCoeff();

  int total = 0;
  auto budget = [&](int cap) { return std::max(0, std::min(cap, opt.max_iter - total)); };
  double stage_eps = std::max(eps, c.maxCoeff());
  while (stage_eps > eps && total < opt.max_iter) {
    total += sinkhorn_stage(c, a, b, stage_eps, std::max(opt.tol, 1e-6), budget(kStageIters), f, g).first;
    stage_eps = std::max(eps, stage_eps / 2.0);
  }
  // Half the tolerance leaves headroom for rounding when the plan is re-formed.
  auto [iters, residual] = sinkhorn_stage(c, a, b, eps, 0.5 * opt.tol, budget(kStageIters), f, g);
  total += iters;
  if (residual > 0.5 * opt.tol && m > 1 && n > 1 && total < opt.max_iter) {
    auto [steps, res] = sinkhorn_newton(c, a, b, eps, 0.5 * opt.tol, budget(100), f, g);
    total += steps;
    residual = res;
  }
  if (residual > 0.5 * opt.tol && total < opt.max_iter)
    total += sinkhorn_stage(c, a, b, eps, 0.5 * opt.tol, budget(opt.max_iter), f, g).first;

  SinkhornResult out;
  Matrix plan(m, n);
  double cost = 0.0, kl = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const double logp = (f[i] + g[j] - c(i, j)) / eps;  // log(P_ij / (a_i b_j))
      const double p = a[i] * b[j] * std::exp(logp);
      plan(i, j) = p;
      cost += p * c(i, j);
      if (p > 0.0) kl += p * logp;
    }
  // Generalised KL; equals the plain KL when the plan has unit mass.
  kl += 1.0 - plan.sum();

  out.plan.plan = std::move(plan);
  out.plan.a = a;
  out.plan.b = b;
  out.plan.u = f;
  out.plan.v = g;
  out.transport_cost = cost;
  out.kl = std::max(0.0, kl);
  out.value = cost + eps * out.kl;
  out.plan.objective = out.value;
  out.iterations = total;
  out.residual = out.plan.row_residual() + out.plan.col_residual();
  out.converged = out.residual <= opt.tol;
  return out;
}

}  // namespace detail

/// Entropic OT with value <P, C> + eps * KL(P || a x b). Throws
/// SinkhornNotConverged (holding the last iterate) when max_iter is hit.
inline SinkhornResult sinkhorn(const Matrix& x, const Vector& wx, const Matrix& y, const Vector& wy, const SinkhornOptions& opt) {
  if (!(opt.epsilon > 0.0) || !std::isfinite(opt.epsilon))
    throw Error(Errc::non_positive_epsilon, "epsilon = " + std::to_string(opt.epsilon));
  if (wx.size() != x.rows() || wy.size() != y.rows()) throw Error(Errc::shape_mismatch, "sinkhorn: weights/support size mismatch");
  const Matrix c_full = cost_matrix(x, y);

  // Drop zero-mass points; they carry no plan mass.
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < wx.size(); ++i)
    if (wx[i] > 0.0) rows.push_back(i);
  for (Eigen::Index j = 0; j < wy.size(); ++j)
    if (wy[j] > 0.0) cols.push_back(j);
  if (rows.empty() || cols.empty()) throw Error(Errc::empty_support, "sinkhorn: a marginal has no mass");
  const auto m = static_cast<Eigen::Index>(rows.size()), n = static_cast<Eigen::Index>(cols.size());
  Matrix c(m, n);
  Vector a(m), b(n);
  for (Eigen::Index i = 0; i < m; ++i) a[i] = wx[rows[i]];
  for (Eigen::Index j = 0; j < n; ++j) b[j] = wy[cols[j]];
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) c(i, j) = c_full(rows[i], cols[j]);

  SinkhornResult r = detail::sinkhorn_positive(c, a, b, opt);

  if (m != wx.size() || n != wy.size()) {
    Matrix plan = Matrix::Zero(wx.size(), wy.size());
    Vector f = Vector::Constant(wx.size(), -std::numeric_limits<double>::infinity());
    Vector g = Vector::Constant(wy.size(), -std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < m; ++i) f[rows[i]] = r.plan.u[i];
    for (Eigen::Index j = 0; j < n; ++j) g[cols[j]] = r.plan.v[j];
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < m; ++i) plan(rows[i], cols[j]) = r.plan.plan(i, j);
    r.plan.plan = std::move(plan);
    r.plan.a = wx;
    r.plan.b = wy;
    r.plan.u = std::move(f);
    r.plan.v = std::move(g);
  }
  if (!r.converged) throw SinkhornNotConverged(std::move(r));
  return r;
}

inline SinkhornResult sinkhorn(const DiscreteDistribution& p, const DiscreteDistribution& q, const SinkhornOptions& opt) {
  return sinkhorn(p.support, p.weights, q.support, q.weights, opt);
}

}  // namespace ddsc
