#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ddsc/distance_matrix.hpp"
#include "ddsc/distribution.hpp"
#include "ddsc/error.hpp"
#include "ddsc/evaluation.hpp"
#include "ddsc/graph.hpp"
#include "ddsc/spectral.hpp"

namespace ddsc {

/// Inputs of the sampling-error and consistency bounds. B, eta, psi are the
/// theoretical constants of the sample-complexity result; they cannot be
/// estimated from data and default to 1.
struct BoundInputs {
  double m = 40;        // support points per distribution
  double epsilon = 1.0;
  double theta = 0.05;  // failure probability
  double gamma = 1.0;   // affinity kernel parameter
  double tau = 10;
  double n = 40;        // number of distributions
  double kappa = 1.0;   // 2 L |Omega| + ||c||_inf
  double b = 1.0, eta = 1.0, psi = 1.0;

  void validate() const {
    if (!(theta > 0.0 && theta < 1.0)) throw Error(Errc::invalid_theta, "theta = " + std::to_string(theta) + " is not in (0, 1)");
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::invalid_config, std::string(name) + " must be positive");
    };
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::invalid_config, std::string(name) + " must be >= 0");
    };
    positive(m, "m");
    positive(epsilon, "epsilon");
    positive(tau, "tau");
    positive(n, "N");
    nonneg(gamma, "gamma");
    nonneg(kappa, "kappa");
    nonneg(b, "B");
    nonneg(eta, "eta");
    nonneg(psi, "psi");
  }
};

/// rho = 6 B eta psi / sqrt(m).
inline double bound_rho(const BoundInputs& in) { return 6.0 * in.b * in.eta * in.psi / std::sqrt(in.m); }

/// E = sqrt(2/m) (kappa + eps exp(kappa / eps)).
inline double bound_e(const BoundInputs& in) { return std::sqrt(2.0 / in.m) * (in.kappa + in.epsilon * std::exp(in.kappa / in.epsilon)); }

/// rho + E sqrt(log(1/theta)).
inline double sinkhorn_error_bound(const BoundInputs& in) {
  in.validate();
  return bound_rho(in) + bound_e(in) * std::sqrt(std::log(1.0 / in.theta));
}

/// zeta = sqrt(gamma) rho + E sqrt(gamma log(2 tau^2 N / theta)).
inline double zeta(const BoundInputs& in) {
  in.validate();
  return std::sqrt(in.gamma) * bound_rho(in) + bound_e(in) * std::sqrt(in.gamma * std::log(2.0 * in.tau * in.tau * in.n / in.theta));
}

struct SpectralDiagnostics {
  double alpha = 0.0;  // smallest nonzero affinity
  double delta = 0.0;  // eigen-gap
  double zeta = 0.0;
  double consistency = std::numeric_limits<double>::quiet_NaN();
};

/// 2 zeta sqrt(N) / (delta (alpha - zeta)^2 sqrt(tau)).
inline double consistency_bound(const SpectralDiagnostics& diag, const BoundInputs& in) {
  const double z = zeta(in);
  if (!(diag.delta > 0.0)) throw Error(Errc::zero_gap, "eigen-gap is " + std::to_string(diag.delta));
  if (!(diag.alpha > z))
    throw Error(Errc::vacuous_bound, "alpha = " + std::to_string(diag.alpha) + " does not exceed zeta = " + std::to_string(z));
  const double gap = diag.alpha - z;
  return 2.0 * z * std::sqrt(in.n) / (diag.delta * gap * gap * std::sqrt(in.tau));
}

struct CorrectnessReport {
  double lhs = 0.0;  // sqrt(gamma) rho + E sqrt(gamma log(N tau^2 / theta))
  double rhs = 0.0;  // xi / 2
  bool holds = false;
  std::optional<double> empirical_xi;
};

inline CorrectnessReport correctness_condition(const BoundInputs& in, double xi, std::optional<double> empirical_xi = std::nullopt) {
  in.validate();
  if (!(xi >= 0.0)) throw Error(Errc::invalid_config, "xi must be >= 0");
  CorrectnessReport r;
  r.lhs = std::sqrt(in.gamma) * bound_rho(in) + bound_e(in) * std::sqrt(in.gamma * std::log(in.n * in.tau * in.tau / in.theta));
  r.rhs = 0.5 * xi;
  r.holds = r.lhs <= r.rhs;
  r.empirical_xi = empirical_xi;
  return r;
}

// ---------------------------------------------------------------------------
// Subspace distances
// ---------------------------------------------------------------------------

inline void require_orthonormal(const Matrix& v, const char* name) {
  const double err = (v.transpose() * v - Matrix::Identity(v.cols(), v.cols())).norm();
  if (err > 1e-8) throw Error(Errc::not_orthonormal, std::string(name) + ": ||V^T V - I||_F = " + std::to_string(err));
}

/// ||sin Theta(V1, V2)||_F from the singular values (cosines) of V1^T V2.
inline double sin_theta_distance(const Matrix& v1, const Matrix& v2) {
  if (v1.rows() != v2.rows() || v1.cols() != v2.cols()) throw Error(Errc::shape_mismatch, "subspace bases differ in shape");
  require_orthonormal(v1, "V1");
  require_orthonormal(v2, "V2");
  const Eigen::JacobiSVD<Matrix> svd(v1.transpose() * v2);
  double s = 0.0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    const double c = std::clamp(svd.singularValues()[i], 0.0, 1.0);
    s += 1.0 - c * c;
  }
  return std::sqrt(std::max(0.0, s));
}

struct DavisKahanReport {
  double d = std::numeric_limits<double>::quiet_NaN();
  double bound = std::numeric_limits<double>::quiet_NaN();  // ||H||_F / delta
  double delta = 0.0;  // distance from S1 to the spectrum of Z outside S1
  bool holds = false;
  bool gap_violation = false;  // counts in S1 differ, S1 empty, or delta = 0
  Eigen::Index count = 0, count_perturbed = 0;
};

/// Compares the eigenspaces of Z and Z + H belonging to eigenvalues in [lo, hi].
inline DavisKahanReport davis_kahan_check(const Matrix& z, const Matrix& h, double lo, double hi) {
  if (z.rows() != z.cols() || h.rows() != z.rows() || h.cols() != z.cols())
    throw Error(Errc::shape_mismatch, "Z and H must be square and the same size");
  const Eigen::SelfAdjointEigenSolver<Matrix> ez(z), ezh(Matrix(z + h));
  if (ez.info() != Eigen::Success || ezh.info() != Eigen::Success)
    throw Error(Errc::convergence_failure, "symmetric eigensolver did not converge");
  auto inside = [&](double l) { return l >= lo && l <= hi; };
  auto select = [&](const Eigen::SelfAdjointEigenSolver<Matrix>& es, Eigen::Index& count) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      if (inside(es.eigenvalues()[i])) idx.push_back(i);
    count = static_cast<Eigen::Index>(idx.size());
    Matrix v(z.rows(), count);
    for (Eigen::Index c = 0; c < count; ++c) v.col(c) = es.eigenvectors().col(idx[c]);
    return v;
  };
  DavisKahanReport r;
  const Matrix v1 = select(ez, r.count), v2 = select(ezh, r.count_perturbed);
  r.delta = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ez.eigenvalues().size(); ++i) {
    const double l = ez.eigenvalues()[i];
    if (!inside(l)) r.delta = std::min(r.delta, l < lo ? lo - l : l - hi);
  }
  r.gap_violation = r.count == 0 || r.count != r.count_perturbed || !(r.delta > 0.0);
  if (r.gap_violation) return r;
  r.d = sin_theta_distance(v1, v2);
  r.bound = std::isfinite(r.delta) ? h.norm() / r.delta : 0.0;
  r.holds = r.d <= r.bound + 1e-12;
  return r;
}

// ---------------------------------------------------------------------------
// Subsampling experiment
// ---------------------------------------------------------------------------

struct ConsistencyRow {
  Eigen::Index m_prime = 0;
  double d = 0.0;  // sin-Theta distance to the full-data K-eigenspace
  double ami = 0.0;
};

/// For each m' subsample every distribution to m' points, rebuild the
/// Laplacian and compare its K smallest eigenvectors with the full-data ones.
/// gamma and the MMD bandwidth are resolved once on the full data and reused,
/// so only the sampling changes between rows. AMI is against ground truth
/// when present, else against the full-data clustering.
inline std::vector<ConsistencyRow> empirical_consistency_experiment(const DistributionSet& set, MetricParams params,
                                                                   const std::vector<Eigen::Index>& m_grid, Eigen::Index k,
                                                                   int tau, std::optional<double> gamma, std::uint64_t seed) {
  validate(set);
  Eigen::Index min_m = std::numeric_limits<Eigen::Index>::max();
  for (const auto& d : set.distributions) min_m = std::min(min_m, d.size());
  for (auto mp : m_grid)
    if (mp < 1 || mp > min_m) throw Error(Errc::invalid_config, "m' = " + std::to_string(mp) + " outside [1, " + std::to_string(min_m) + "]");

  const auto full_d = build_distance_matrix(set, params, 1.0, seed);
  if (params.metric == Metric::mmd && !params.sigma) params.sigma = full_d.resolved_sigma;
  const auto full = spectral_cluster(full_d, k, tau, gamma, seed);
  const double g = full.graph.gamma;
  const auto truth = set.has_labels() ? set.labels() : full.assignment.labels;

  std::vector<ConsistencyRow> rows;
  for (auto mp : m_grid) {
    const auto sub = subsample_support(set, mp, seed);
    const auto r = spectral_cluster(build_distance_matrix(sub, params, 1.0, seed), k, tau, g, seed);
    rows.push_back({mp, sin_theta_distance(full.embedding.vectors, r.embedding.vectors), ami(truth, r.assignment.labels)});
  }
  return rows;
}

inline std::string consistency_csv(const std::vector<ConsistencyRow>& rows) {
  std::string out = "m_prime,d,ami\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(r.m_prime), r.d, r.ami);
    out += buf;
  }
  return out;
}

}  // namespace ddsc
