#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ddsc/distribution.hpp"
#include "ddsc/divergences.hpp"
#include "ddsc/error.hpp"
#include "ddsc/graph.hpp"
#include "ddsc/lot.hpp"
#include "ddsc/random.hpp"
#include "ddsc/spectral.hpp"
#include "ddsc/transport.hpp"

namespace ddsc {

/// Row i is the weighted mean sum_k w_k x_k of distribution i.
inline Matrix mean_vector(const DistributionSet& set) {
  Matrix out(static_cast<Eigen::Index>(set.size()), set.dim());
  for (std::size_t i = 0; i < set.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = set[i].weights.transpose() * set[i].support;
  return out;
}

inline ClusterAssignment kmeans_on_means(const DistributionSet& set, Eigen::Index k, std::uint64_t seed) {
  auto a = kmeans(mean_vector(set), k, seed);
  a.method = "kmeans-mean";
  return a;
}

/// Euclidean distances between mean vectors, then the same graph + spectral steps.
inline SpectralResult sc_on_means(const DistributionSet& set, Eigen::Index k, int tau, std::optional<double> gamma, std::uint64_t seed) {
  MetricParams params;
  params.metric = Metric::euclidean;
  auto r = spectral_cluster(build_distance_matrix(set, params, 1.0, seed), k, tau, gamma, seed);
  r.assignment.method = "sc-mean";
  return r;
}

// ---------------------------------------------------------------------------
// Free-support Wasserstein barycenter
// ---------------------------------------------------------------------------

struct Barycenter {
  Matrix support;  // m0 x d
  Vector weights;  // uniform
  std::vector<double> objective_history;  // sum_i W_2^2(mu, nu_i) before each support update
  int iterations = 0;
  bool converged = false;

  double objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }
};

struct BarycenterOptions {
  int max_iter = 100;
  double tol = 1e-9;
};

/// m0 rows taken from `dist`: without replacement when m0 <= m, otherwise
/// every point once plus seeded repeats.
inline Matrix resample_support(const DiscreteDistribution& dist, Eigen::Index m0, Rng& rng) {
  const auto m = dist.size();
  Matrix out(m0, dist.dim());
  if (m0 <= m) {
    auto pick = sample_without_replacement(static_cast<std::size_t>(m), static_cast<std::size_t>(m0), rng);
    std::sort(pick.begin(), pick.end());
    for (Eigen::Index r = 0; r < m0; ++r) out.row(r) = dist.support.row(static_cast<Eigen::Index>(pick[r]));
  } else {
    out.topRows(m) = dist.support;
    for (Eigen::Index r = m; r < m0; ++r)
      out.row(r) = dist.support.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(m))));
  }
  return out;
}

/// Fixed-point iteration X <- (1/n) sum_i m0 g_i X_i with exact plans g_i
/// from the uniform barycenter to each member. Starts from `init` when given,
/// otherwise from a seeded random member resampled to m0 points.
inline Barycenter barycenter(const std::vector<const DiscreteDistribution*>& members, Eigen::Index m0, std::uint64_t seed,
                             const BarycenterOptions& opt = {}, const std::optional<Matrix>& init = std::nullopt) {
  if (members.empty()) throw Error(Errc::invalid_config, "barycenter of an empty member list");
  if (m0 < 1) throw Error(Errc::invalid_config, "barycenter needs m0 >= 1");
  const auto d = members.front()->dim();
  Barycenter bc;
  bc.weights = uniform_weights(m0);
  if (init) {
    if (init->rows() != m0 || init->cols() != d) throw Error(Errc::shape_mismatch, "barycenter warm start has the wrong shape");
    bc.support = *init;
  } else {
    Rng rng = make_rng(seed, 0xBA7C);
    const auto& start = *members[uniform_index(rng, members.size())];
    bc.support = resample_support(start, m0, rng);
  }

  const double inv_n = 1.0 / static_cast<double>(members.size());
  for (int it = 0; it < std::max(1, opt.max_iter); ++it) {
    double objective = 0.0;
    Matrix next = Matrix::Zero(m0, d);
    for (const auto* nu : members) {
      const auto plan = solve_exact_transport(cost_matrix(bc.support, nu->support), bc.weights, nu->weights);
      objective += plan.objective;
      next += monge_coupling(plan.plan, nu->support);
    }
    bc.iterations = it + 1;
    const bool first = bc.objective_history.empty();
    const double prev = first ? 0.0 : bc.objective_history.back();
    bc.objective_history.push_back(objective);
    if (objective == 0.0 || (!first && std::abs(prev - objective) <= opt.tol * prev)) {
      bc.converged = true;
      break;
    }
    if (it + 1 == opt.max_iter) break;
    bc.support = inv_n * next;
  }
  return bc;
}

inline Barycenter barycenter(const std::vector<DiscreteDistribution>& members, Eigen::Index m0, std::uint64_t seed,
                             const BarycenterOptions& opt = {}, const std::optional<Matrix>& init = std::nullopt) {
  std::vector<const DiscreteDistribution*> ptrs;
  for (const auto& m : members) ptrs.push_back(&m);
  return barycenter(ptrs, m0, seed, opt, init);
}

// ---------------------------------------------------------------------------
// D2 clustering
// ---------------------------------------------------------------------------

struct D2Options {
  int max_outer = 50;
  BarycenterOptions barycenter;
};

struct D2Result {
  ClusterAssignment assignment;
  std::vector<Barycenter> centers;
  std::vector<double> objective_history;     // sum_k sum_{i in C_k} W_2(mu_k, nu_i) after each assignment
  std::vector<double> sq_objective_history;  // same with W_2^2; the quantity both steps decrease
  int outer_iterations = 0;
};

/// k-means style alternation: assign each distribution to its W_2-nearest
/// barycenter, then recompute each cluster's barycenter warm-started from its
/// current support. Starts from K distinct seeded members.
inline D2Result d2_clustering(const DistributionSet& set, Eigen::Index k, Eigen::Index m0, std::uint64_t seed, const D2Options& opt = {}) {
  validate(set);
  const auto n = static_cast<Eigen::Index>(set.size());
  if (k < 1 || k > n) throw Error(Errc::invalid_config, "K = " + std::to_string(k) + " with N = " + std::to_string(n));
  if (m0 < 1) m0 = mean_support_count(set);

  D2Result out;
  Rng rng = make_rng(seed, 0xD2);
  const auto init = sample_without_replacement(static_cast<std::size_t>(n), static_cast<std::size_t>(k), rng);
  out.centers.resize(static_cast<std::size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) {
    out.centers[c].support = resample_support(set[init[c]], m0, rng);
    out.centers[c].weights = uniform_weights(m0);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  for (int outer = 0; outer < std::max(1, opt.max_outer); ++outer) {
    std::vector<int> next(static_cast<std::size_t>(n), 0);
    double obj = 0.0, sq_obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const auto& mu = out.centers[c];
        const double w2 = solve_exact_transport(cost_matrix(mu.support, set[i].support), mu.weights, set[i].weights).objective;
        if (w2 < best) {
          best = w2;
          next[i] = static_cast<int>(c);
        }
      }
      dist[i] = best;
    }
    // Empty clusters take the distribution farthest from its barycenter.
    for (Eigen::Index c = 0; c < k; ++c) {
      if (std::find(next.begin(), next.end(), static_cast<int>(c)) != next.end()) continue;
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool movable = std::count(next.begin(), next.end(), next[i]) > 1;
        if (movable && (far < 0 || dist[i] > dist[far])) far = i;
      }
      if (far < 0) break;
      next[far] = static_cast<int>(c);
      auto& mu = out.centers[c];
      mu.support = resample_support(set[far], m0, rng);
      dist[far] = solve_exact_transport(cost_matrix(mu.support, set[far].support), mu.weights, set[far].weights).objective;
      ++out.assignment.empty_cluster_reseeds;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      sq_obj += dist[i];
      obj += std::sqrt(std::max(0.0, dist[i]));
    }
    out.objective_history.push_back(obj);
    out.sq_objective_history.push_back(sq_obj);
    out.outer_iterations = outer + 1;
    if (next == labels) break;
    labels = std::move(next);

    for (Eigen::Index c = 0; c < k; ++c) {
      std::vector<const DiscreteDistribution*> members;
      for (Eigen::Index i = 0; i < n; ++i)
        if (labels[i] == c) members.push_back(&set[static_cast<std::size_t>(i)]);
      out.centers[c] = barycenter(members, m0, seed, opt.barycenter, out.centers[c].support);
    }
  }
  out.assignment.labels = labels;
  out.assignment.inertia = out.sq_objective_history.back();
  out.assignment.method = "d2";
  out.assignment.seed = seed;
  return out;
}

}  // namespace ddsc
