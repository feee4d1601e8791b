#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ddsc/distance_matrix.hpp"
#include "ddsc/distribution.hpp"
#include "ddsc/divergences.hpp"
#include "ddsc/error.hpp"
#include "ddsc/io.hpp"
#include "ddsc/lot.hpp"
#include "ddsc/random.hpp"

namespace ddsc {

namespace detail {

inline std::string fraction_seed_suffix(double fraction, std::uint64_t seed) {
  char buf[96];
  std::snprintf(buf, sizeof buf, ";fraction=%.17g;seed=%llu", fraction, static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace detail

inline std::uint64_t distance_params_hash(const DistributionSet& set, const MetricParams& params, double fraction, std::uint64_t seed) {
  return fnv1a(params.describe() + detail::fraction_seed_suffix(fraction, seed), content_hash(set));
}

/// Pairwise divergence matrix. With fraction < 1 only ceil(fraction * N(N-1)/2)
/// seeded pairs are computed; the rest stay masked out. Each pair is computed
/// independently, so the result does not depend on evaluation order.
inline DistanceMatrix build_distance_matrix(const DistributionSet& set, const MetricParams& params, double fraction = 1.0,
                                           std::uint64_t seed = 0) {
  validate(set);
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(Errc::invalid_config, "fraction must be in (0, 1]");
  const auto n = static_cast<Eigen::Index>(set.size());

  DistanceMatrix out;
  out.metric = params.metric;
  out.params = params.describe() + detail::fraction_seed_suffix(fraction, seed);
  out.params_hash = distance_params_hash(set, params, fraction, seed);
  out.values = Matrix::Zero(n, n);
  out.mask = BoolMatrix::Constant(n, n, false);
  out.mask.diagonal().setConstant(true);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) pairs.emplace_back(i, j);
  if (fraction < 1.0) {
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pairs.size()) - 1e-9));
    Rng rng = make_rng(seed, 0xFA1);
    auto pick = sample_without_replacement(pairs.size(), keep, rng);
    std::sort(pick.begin(), pick.end());
    std::vector<std::pair<Eigen::Index, Eigen::Index>> chosen;
    chosen.reserve(pick.size());
    for (auto p : pick) chosen.push_back(pairs[p]);
    pairs = std::move(chosen);
  }

  KernelSpec kernel;
  std::optional<LotEmbedding> emb;
  if (params.metric == Metric::mmd) {
    kernel.bandwidth = params.sigma ? *params.sigma : resolve_bandwidth(set, seed);
    out.resolved_sigma = kernel.bandwidth;
  } else if (params.metric == Metric::lot) {
    emb = embed(set, make_reference(set, seed));
  }
  const SinkhornOptions sk{params.epsilon, params.sinkhorn_tol, params.sinkhorn_max_iter};

  for (const auto& [i, j] : pairs) {
    const auto& p = set[static_cast<std::size_t>(i)];
    const auto& q = set[static_cast<std::size_t>(j)];
    double v = 0.0;
    try {
      switch (params.metric) {
        case Metric::mmd: v = mmd2(p, q, kernel); break;
        case Metric::wasserstein: v = wasserstein2_exact(p, q).distance; break;
        case Metric::sinkhorn:
          try {
            v = sinkhorn(p, q, sk).value;
          } catch (const SinkhornNotConverged& e) {
            v = e.partial().value;
            ++out.unconverged;
          }
          break;
        case Metric::lot: v = lot_distance(*emb, static_cast<std::size_t>(i), static_cast<std::size_t>(j)); break;
        case Metric::euclidean: v = (p.weights.transpose() * p.support - q.weights.transpose() * q.support).norm(); break;
      }
    } catch (const Error& e) {
      throw e.with_context("pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    out.values(i, j) = v;
    out.values(j, i) = v;
    out.mask(i, j) = true;
    out.mask(j, i) = true;
  }
  return out;
}

/// Cache file for (set, metric, params, fraction, seed) inside `dir`.
inline std::filesystem::path distance_cache_path(const std::filesystem::path& dir, const DistributionSet& set,
                                                 const MetricParams& params, double fraction, std::uint64_t seed) {
  return dir / (std::string("dist_") + to_string(params.metric) + "_" + hex64(distance_params_hash(set, params, fraction, seed)) + ".csv");
}

/// Loads the cached matrix when its header hash matches, otherwise computes and stores it.
inline DistanceMatrix load_or_build_distance_matrix(const std::filesystem::path& cache_dir, const DistributionSet& set,
                                                    const MetricParams& params, double fraction, std::uint64_t seed,
                                                    bool* cache_hit = nullptr) {
  const auto path = distance_cache_path(cache_dir, set, params, fraction, seed);
  const auto hash = distance_params_hash(set, params, fraction, seed);
  if (std::filesystem::exists(path)) {
    auto d = parse_cache_text(read_file(path));
    if (d.params_hash == hash && d.metric == params.metric && d.size() == static_cast<Eigen::Index>(set.size())) {
      d.params = params.describe() + detail::fraction_seed_suffix(fraction, seed);
      if (cache_hit) *cache_hit = true;
      return d;
    }
  }
  auto d = build_distance_matrix(set, params, fraction, seed);
  write_file_atomic(path, to_cache_text(d));
  if (cache_hit) *cache_hit = false;
  return d;
}

// ---------------------------------------------------------------------------
// Affinity graph
// ---------------------------------------------------------------------------

struct AffinityGraph {
  Matrix adjacency;  // symmetric, nonnegative, zero diagonal
  int tau = 0;
  double gamma = 0.0;
  std::size_t clamped_negative = 0;  // negative divergences (MMD^2) clamped to 0

  Eigen::Index size() const { return adjacency.rows(); }
};

/// Keeps the tau largest entries of each column among rows where `allowed`
/// holds (ties: lower row index wins). No symmetrisation.
inline Matrix sparse_top_tau(const Matrix& a, int tau, const BoolMatrix* allowed = nullptr) {
  const auto n = a.rows();
  Matrix out = Matrix::Zero(n, a.cols());
  std::vector<Eigen::Index> rows;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    rows.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j && (!allowed || (*allowed)(i, j))) rows.push_back(i);
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(std::max(tau, 0)), rows.size());
    std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(), [&](Eigen::Index x, Eigen::Index y) {
      return a(x, j) > a(y, j) || (a(x, j) == a(y, j) && x < y);
    });
    for (std::size_t k = 0; k < keep; ++k) out(rows[k], j) = a(rows[k], j);
  }
  return out;
}

/// Median over computed off-diagonal entries (after clamping at 0) of D; the
/// auto bandwidth is gamma = 1 / (2 median^2), or 1 when the median is 0.
inline double auto_gamma(const DistanceMatrix& d) {
  std::vector<double> vals;
  for (Eigen::Index j = 0; j < d.size(); ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (d.mask(i, j)) vals.push_back(std::max(0.0, d.values(i, j)));
  if (vals.empty()) throw Error(Errc::all_entries_uncomputed, "no computed off-diagonal entries");
  const auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
  std::nth_element(vals.begin(), mid, vals.end());
  double med = *mid;
  if (vals.size() % 2 == 0) med = 0.5 * (med + *std::max_element(vals.begin(), mid));
  return med > 0.0 ? 1.0 / (2.0 * med * med) : 1.0;
}

/// A = exp(-gamma D^2) on computed off-diagonal entries, top-tau per column,
/// then (A + A^T) / 2. gamma unset = auto rule.
inline AffinityGraph to_affinity(const DistanceMatrix& d, std::optional<double> gamma, int tau) {
  const auto n = d.size();
  if (tau < 1 || tau > n - 1) throw Error(Errc::tau_out_of_range, "tau = " + std::to_string(tau) + " with N = " + std::to_string(n));
  if (d.computed_pairs() == 0) throw Error(Errc::all_entries_uncomputed, "no computed off-diagonal entries");
  AffinityGraph g;
  g.tau = tau;
  g.gamma = gamma ? *gamma : auto_gamma(d);
  if (!(g.gamma > 0.0) || !std::isfinite(g.gamma)) throw Error(Errc::invalid_config, "gamma must be positive");

  Matrix full = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j || !d.mask(i, j)) continue;
      double v = d.values(i, j);
      if (v < 0.0) {
        if (i < j) ++g.clamped_negative;
        v = 0.0;
      }
      full(i, j) = std::exp(-g.gamma * v * v);
    }
  const Matrix kept = sparse_top_tau(full, tau, &d.mask);
  g.adjacency.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = 0.5 * (kept(i, j) + kept(j, i));
      g.adjacency(i, j) = v;
      g.adjacency(j, i) = v;
    }
  return g;
}

struct ConnectivityReport {
  int components = 0;
  bool no_inter_class_edges = true;
  double xi = 0.0;  // -inf when the margin is negative
  std::vector<int> component_of;
};

/// Components of the nonzero pattern, inter-class edge check, and margin
/// xi = min_i (min intra-class neighbour affinity - max inter-class affinity).
inline ConnectivityReport check_connectivity(const Matrix& a, const std::vector<int>& labels) {
  const auto n = a.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw Error(Errc::length_mismatch, std::to_string(labels.size()) + " labels for " + std::to_string(n) + " nodes");

  std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Eigen::Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  ConnectivityReport rep;
  double xi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double intra_min = std::numeric_limits<double>::infinity(), inter_max = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || !(a(i, j) > 0.0)) continue;
      parent[find(i)] = find(j);
      if (labels[i] == labels[j]) {
        intra_min = std::min(intra_min, a(i, j));
      } else {
        rep.no_inter_class_edges = false;
        inter_max = std::max(inter_max, a(i, j));
      }
    }
    if (!std::isfinite(intra_min)) intra_min = 0.0;
    xi = std::min(xi, intra_min - inter_max);
  }
  rep.xi = n == 0 ? 0.0 : (xi < 0.0 ? -std::numeric_limits<double>::infinity() : xi);

  rep.component_of.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> root_id(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = find(i);
    if (root_id[r] < 0) root_id[r] = rep.components++;
    rep.component_of[i] = root_id[r];
  }
  return rep;
}

inline ConnectivityReport check_connectivity(const AffinityGraph& g, const std::vector<int>& labels) {
  return check_connectivity(g.adjacency, labels);
}

}  // namespace ddsc
