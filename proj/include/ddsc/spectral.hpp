#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ddsc/distance_matrix.hpp"
#include "ddsc/error.hpp"
#include "ddsc/graph.hpp"
#include "ddsc/random.hpp"
#include "ddsc/timing.hpp"

namespace ddsc {

struct Laplacian {
  Matrix l;       // I - S^{-1/2} A S^{-1/2}
  Vector degree;  // column sums of A
};

inline Laplacian laplacian(const Matrix& a) {
  const auto n = a.rows();
  if (a.cols() != n) throw Error(Errc::shape_mismatch, "affinity matrix must be square");
  Laplacian out;
  out.degree = a.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(out.degree[i] > 0.0))
      throw Error(Errc::isolated_node, "node " + std::to_string(i) + " has zero degree (tau too small or fraction too low?)");
  const Vector inv_sqrt = out.degree.cwiseSqrt().cwiseInverse();
  out.l.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = (i == j ? 1.0 : 0.0) - a(i, j) * inv_sqrt[i] * inv_sqrt[j];
      out.l(i, j) = v;
      out.l(j, i) = v;
    }
  return out;
}

inline Laplacian laplacian(const AffinityGraph& g) { return laplacian(g.adjacency); }

struct SpectralEmbedding {
  Matrix vectors;      // N x K, orthonormal columns for the K smallest eigenvalues
  Matrix rows;         // vectors with unit-norm rows (zero rows left at zero)
  Vector eigenvalues;  // full spectrum, ascending
  double gap = 0.0;    // lambda_{K+1} - lambda_K (0 when K = N)
  std::size_t zero_rows = 0;
};

/// Flip each column so its largest-magnitude entry (lowest index on ties) is positive.
inline void fix_signs(Matrix& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < v.rows(); ++r)
      if (std::abs(v(r, c)) > std::abs(v(best, c))) best = r;
    if (v(best, c) < 0.0) v.col(c) = -v.col(c);
  }
}

/// Unit-norm rows; rows with zero norm are left as zero and counted.
inline Matrix row_normalize(const Matrix& v, std::size_t* zero_rows = nullptr) {
  Matrix out = v;
  std::size_t zeros = 0;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double n = v.row(r).norm();
    if (n > 0.0) {
      out.row(r) /= n;
    } else {
      ++zeros;
    }
  }
  if (zero_rows) *zero_rows = zeros;
  return out;
}

/// Full dense symmetric eigendecomposition (Householder tridiagonalisation +
/// implicit symmetric QR), keeping the K smallest eigenpairs.
inline SpectralEmbedding eig_smallest(const Matrix& l, Eigen::Index k) {
  const auto n = l.rows();
  if (k < 1 || k > n) throw Error(Errc::invalid_config, "K = " + std::to_string(k) + " with N = " + std::to_string(n));
  const Eigen::SelfAdjointEigenSolver<Matrix> es(l);
  if (es.info() != Eigen::Success) throw Error(Errc::convergence_failure, "symmetric eigensolver did not converge");
  SpectralEmbedding out;
  out.eigenvalues = es.eigenvalues();
  out.vectors = es.eigenvectors().leftCols(k);
  fix_signs(out.vectors);
  const double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
  for (Eigen::Index c = 0; c < k; ++c) {
    const double res = (l * out.vectors.col(c) - out.eigenvalues[c] * out.vectors.col(c)).norm();
    if (res > 1e-8 * scale)
      throw Error(Errc::convergence_failure, "eigenpair " + std::to_string(c) + " residual " + std::to_string(res));
  }
  out.gap = k < n ? out.eigenvalues[k] - out.eigenvalues[k - 1] : 0.0;
  out.rows = row_normalize(out.vectors, &out.zero_rows);
  return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct ClusterAssignment {
  std::vector<int> labels;
  double inertia = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t empty_cluster_reseeds = 0;
  bool missing_cluster = false;  // some id in [0, K) unused
};

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
  double rel_tol = 1e-7;
};

namespace detail {

struct KMeansRun {
  std::vector<int> labels;
  double inertia = 0.0;
  std::size_t reseeds = 0;
};

inline double sq_dist(const Matrix& x, Eigen::Index i, const Matrix& c, Eigen::Index k) { return (x.row(i) - c.row(k)).squaredNorm(); }

inline Matrix kmeanspp_init(const Matrix& x, Eigen::Index k, Rng& rng) {
  const auto n = x.rows();
  Matrix centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = sq_dist(x, i, centers, 0);
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double r = uniform_real(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x, i, centers, c));
  }
  return centers;
}

inline KMeansRun lloyd(const Matrix& x, Matrix centers, const KMeansOptions& opt) {
  const auto n = x.rows(), k = centers.rows();
  KMeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), 0);
  Vector dist(n);
  double prev = std::numeric_limits<double>::infinity();
  auto assign = [&] {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(x, i, centers, 0);
      for (Eigen::Index c = 1; c < k; ++c) {
        const double dd = sq_dist(x, i, centers, c);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(c);
        }
      }
      run.labels[i] = best;
      dist[i] = bd;
      inertia += bd;
    }
    return inertia;
  };
  double inertia = assign();
  for (int it = 0; it < opt.max_iter; ++it) {
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(run.labels[i]) += x.row(i);
      ++counts[run.labels[i]];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // Empty cluster: move its center onto the point farthest from its own center.
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      centers.row(c) = x.row(far);
      dist[far] = 0.0;
      ++run.reseeds;
    }
    prev = inertia;
    inertia = assign();
    if (inertia == 0.0 || std::abs(prev - inertia) <= opt.rel_tol * prev) break;
  }
  run.inertia = inertia;
  return run;
}

/// Renumbers labels in order of first appearance.
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::vector<int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l >= static_cast<int>(map.size())) map.resize(static_cast<std::size_t>(l) + 1, -1);
    if (map[l] < 0) map[l] = *std::max_element(map.begin(), map.end()) + 1;
    out[i] = map[l];
  }
  return out;
}

}  // namespace detail

/// k-means++ seeded restarts (restart r uses stream r of `seed`), Lloyd
/// iterations; the lowest-inertia run wins, earlier restart on ties.
inline ClusterAssignment kmeans(const Matrix& x, Eigen::Index k, std::uint64_t seed, const KMeansOptions& opt = {}) {
  const auto n = x.rows();
  if (k < 1 || k > n) throw Error(Errc::invalid_config, "K = " + std::to_string(k) + " with N = " + std::to_string(n));
  ClusterAssignment best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Rng rng = make_rng(seed, 0x4B4D0000ULL + static_cast<std::uint64_t>(r));
    auto run = detail::lloyd(x, detail::kmeanspp_init(x, k, rng), opt);
    best.empty_cluster_reseeds += run.reseeds;
    if (run.inertia < best.inertia) {
      best.inertia = run.inertia;
      best.labels = std::move(run.labels);
    }
  }
  best.labels = detail::canonical_labels(best.labels);
  best.missing_cluster = *std::max_element(best.labels.begin(), best.labels.end()) + 1 < k;
  best.method = "kmeans";
  best.seed = seed;
  return best;
}

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

/// Everything the bounds module and the reports need from one run.
struct SpectralResult {
  ClusterAssignment assignment;
  AffinityGraph graph;
  SpectralEmbedding embedding;
  double alpha = 0.0;  // smallest nonzero affinity
  double delta = 0.0;  // eigen-gap
  StageTimings timings;
};

struct PipelineResult : SpectralResult {
  DistanceMatrix distances;
};

inline double smallest_nonzero(const Matrix& a) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a.data()[i] > 0.0) m = std::min(m, a.data()[i]);
  return std::isfinite(m) ? m : 0.0;
}

/// Laplacian -> K smallest eigenvectors -> row normalisation -> k-means.
inline SpectralResult spectral_cluster(const AffinityGraph& g, Eigen::Index k, std::uint64_t seed) {
  SpectralResult out;
  out.graph = g;
  const auto l = laplacian(g);
  out.embedding = timed(out.timings, "eig", [&] { return eig_smallest(l.l, k); });
  out.assignment = timed(out.timings, "kmeans", [&] { return kmeans(out.embedding.rows, k, seed); });
  out.assignment.method = "ddsc";
  out.alpha = smallest_nonzero(g.adjacency);
  out.delta = std::abs(out.embedding.gap);
  return out;
}

inline SpectralResult spectral_cluster(const DistanceMatrix& d, Eigen::Index k, int tau, std::optional<double> gamma,
                                       std::uint64_t seed) {
  StageTimings t;
  const auto g = timed(t, "affinity", [&] { return to_affinity(d, gamma, tau); });
  auto out = spectral_cluster(g, k, seed);
  for (const auto& [name, s] : out.timings.stages) t.add(name, s);
  out.timings = std::move(t);
  return out;
}

/// Distance matrix (any metric, optionally partial) -> spectral clustering.
inline PipelineResult cluster_pipeline(const DistributionSet& set, const MetricParams& params, Eigen::Index k, int tau,
                                       std::optional<double> gamma, std::uint64_t seed, double fraction = 1.0) {
  PipelineResult out;
  StageTimings t;
  out.distances = timed(t, "distmat", [&] { return build_distance_matrix(set, params, fraction, seed); });
  static_cast<SpectralResult&>(out) = spectral_cluster(out.distances, k, tau, gamma, seed);
  for (const auto& [name, s] : out.timings.stages) t.add(name, s);
  out.timings = std::move(t);
  return out;
}

}  // namespace ddsc
