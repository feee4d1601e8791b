#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ddsc/distance_matrix.hpp"
#include "ddsc/distribution.hpp"
#include "ddsc/divergences.hpp"
#include "ddsc/error.hpp"
#include "ddsc/random.hpp"
#include "ddsc/transport.hpp"

namespace ddsc {

/// m0 = mean support count rounded half-up.
inline Eigen::Index mean_support_count(const DistributionSet& set) {
  if (set.size() == 0) throw Error(Errc::too_few_distributions, "empty set");
  double total = 0.0;
  for (const auto& d : set.distributions) total += static_cast<double>(d.size());
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(total / static_cast<double>(set.size()) + 0.5)));
}

struct ReferenceDistribution {
  Matrix support;  // m0 x d
  Vector weights;  // uniform 1/m0
  std::uint64_t seed = 0;

  Eigen::Index size() const { return support.rows(); }
};

/// Reference measure: m0 i.i.d. draws from N(mean, diag(var)) of the pooled
/// support points (unweighted).
inline ReferenceDistribution make_reference(const DistributionSet& set, std::uint64_t seed) {
  const auto m0 = mean_support_count(set);
  const auto d = set.dim();
  Eigen::Index total = 0;
  Vector mean = Vector::Zero(d);
  for (const auto& dist : set.distributions) {
    mean += dist.support.colwise().sum().transpose();
    total += dist.size();
  }
  mean /= static_cast<double>(total);
  Vector var = Vector::Zero(d);
  for (const auto& dist : set.distributions) var += (dist.support.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  var /= static_cast<double>(total);

  ReferenceDistribution ref;
  ref.seed = seed;
  ref.support.resize(m0, d);
  ref.weights = uniform_weights(m0);
  Rng rng = make_rng(seed, 0x10F);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < m0; ++r)
    for (Eigen::Index c = 0; c < d; ++c) ref.support(r, c) = mean[c] + std::sqrt(var[c]) * normal(rng);
  return ref;
}

/// Barycentric projection f = m0 * (g X): row k is where reference point k
/// sends its mass on average. g is m0 x m_i.
inline Matrix monge_coupling(const Matrix& g, const Matrix& x) {
  if (g.cols() != x.rows())
    throw Error(Errc::shape_mismatch, "plan is " + std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + " but X has " +
                                          std::to_string(x.rows()) + " rows");
  return static_cast<double>(g.rows()) * (g * x);
}

struct LotEmbedding {
  std::vector<Matrix> z;  // each m0 x d
  std::uint64_t reference_seed = 0;

  std::size_t size() const { return z.size(); }
};

/// phi(X) = (f - X0) / sqrt(m0) relative to the reference.
inline Matrix lot_embed_one(const DiscreteDistribution& dist, const ReferenceDistribution& ref) {
  const auto plan = solve_exact_transport(cost_matrix(ref.support, dist.support), ref.weights, dist.weights);
  return (monge_coupling(plan.plan, dist.support) - ref.support) / std::sqrt(static_cast<double>(ref.size()));
}

/// One exact OT solve per distribution.
inline LotEmbedding embed(const DistributionSet& set, const ReferenceDistribution& ref) {
  LotEmbedding emb;
  emb.reference_seed = ref.seed;
  emb.z.reserve(set.size());
  for (const auto& dist : set.distributions) {
    if (dist.dim() != ref.support.cols())
      throw Error(Errc::dimension_mismatch, "distribution '" + dist.id + "' has d=" + std::to_string(dist.dim()));
    try {
      emb.z.push_back(lot_embed_one(dist, ref));
    } catch (const Error& e) {
      throw e.with_context("LOT embedding of '" + dist.id + "'");
    }
  }
  return emb;
}

inline double lot_distance(const LotEmbedding& emb, std::size_t i, std::size_t j) { return (emb.z[i] - emb.z[j]).norm(); }

/// D_ij = ||Z_i - Z_j||_F, all entries computed.
inline DistanceMatrix lot_distance_matrix(const LotEmbedding& emb) {
  const auto n = static_cast<Eigen::Index>(emb.size());
  DistanceMatrix d;
  d.metric = Metric::lot;
  d.values = Matrix::Zero(n, n);
  d.mask = BoolMatrix::Constant(n, n, true);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) {
      const double v = lot_distance(emb, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      d.values(i, j) = v;
      d.values(j, i) = v;
    }
  return d;
}

}  // namespace ddsc
