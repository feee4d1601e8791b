#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ddsc/error.hpp"
#include "ddsc/random.hpp"

namespace ddsc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A weighted point cloud sum_k w_k delta_{x_k}. Rows of `support` are points.
struct DiscreteDistribution {
  std::string id;
  Matrix support;  // m x d
  Vector weights;  // m, on the probability simplex
  std::optional<int> label;

  Eigen::Index size() const { return support.rows(); }
  Eigen::Index dim() const { return support.cols(); }

  bool operator==(const DiscreteDistribution& o) const {
    return id == o.id && label == o.label && support.rows() == o.support.rows() &&
           support.cols() == o.support.cols() && weights.size() == o.weights.size() &&
           support == o.support && weights == o.weights;
  }
};

/// Ordered collection of distributions sharing one ambient dimension.
struct DistributionSet {
  std::vector<DiscreteDistribution> distributions;

  std::size_t size() const { return distributions.size(); }
  Eigen::Index dim() const { return distributions.empty() ? 0 : distributions.front().dim(); }
  const DiscreteDistribution& operator[](std::size_t i) const { return distributions[i]; }
  DiscreteDistribution& operator[](std::size_t i) { return distributions[i]; }

  bool has_labels() const {
    for (const auto& d : distributions)
      if (!d.label) return false;
    return !distributions.empty();
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(distributions.size());
    for (const auto& d : distributions) out.push_back(d.label.value_or(-1));
    return out;
  }

  bool operator==(const DistributionSet& o) const { return distributions == o.distributions; }
};

inline constexpr double kWeightSumTolerance = 1e-9;

/// Throws ddsc::Error naming the offending index when an invariant fails.
inline void validate(const DiscreteDistribution& dist) {
  const auto m = dist.support.rows();
  if (m < 1 || dist.weights.size() < 1) throw Error(Errc::empty_support, "distribution '" + dist.id + "' has no support points");
  if (dist.weights.size() != m)
    throw Error(Errc::shape_mismatch, "distribution '" + dist.id + "': " + std::to_string(m) + " support rows but " +
                                          std::to_string(dist.weights.size()) + " weights");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double w = dist.weights[k];
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(Errc::negative_weight, "distribution '" + dist.id + "': weight[" + std::to_string(k) + "] = " + std::to_string(w));
    sum += w;
  }
  if (std::abs(sum - 1.0) > kWeightSumTolerance)
    throw Error(Errc::weight_sum_mismatch, "distribution '" + dist.id + "': weights sum to " + std::to_string(sum));
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index c = 0; c < dist.support.cols(); ++c)
      if (!std::isfinite(dist.support(k, c)))
        throw Error(Errc::non_finite_support, "distribution '" + dist.id + "': support row " + std::to_string(k) + " is not finite");
}

inline void validate(const DistributionSet& set) {
  if (set.size() < 2) throw Error(Errc::too_few_distributions, "a distribution set needs at least 2 members");
  std::unordered_set<std::string> ids;
  const auto d = set.dim();
  for (std::size_t i = 0; i < set.size(); ++i) {
    validate(set[i]);
    if (set[i].dim() != d)
      throw Error(Errc::dimension_mismatch, "distribution " + std::to_string(i) + " has d=" + std::to_string(set[i].dim()) +
                                                ", expected " + std::to_string(d));
    if (!ids.insert(set[i].id).second) throw Error(Errc::duplicate_id, "id '" + set[i].id + "' appears twice");
  }
}

inline Vector uniform_weights(Eigen::Index m) { return Vector::Constant(m, 1.0 / static_cast<double>(m)); }

/// Stable 64-bit FNV-1a digest over ids, labels, weights and support bytes.
inline std::uint64_t content_hash(const DistributionSet& set) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& d : set.distributions) {
    mix(d.id.data(), d.id.size());
    const int label = d.label.value_or(-1);
    mix(&label, sizeof label);
    const std::int64_t rows = d.support.rows(), cols = d.support.cols();
    mix(&rows, sizeof rows);
    mix(&cols, sizeof cols);
    mix(d.weights.data(), sizeof(double) * static_cast<std::size_t>(d.weights.size()));
    mix(d.support.data(), sizeof(double) * static_cast<std::size_t>(d.support.size()));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Synthetic squares-vs-circles set
// ---------------------------------------------------------------------------

/// Two shape classes (0 = square boundary, 1 = circle boundary) whose centers
/// interleave along a shared arc, so the per-distribution means of the two
/// classes are mixed together while each class forms a chain of similar shapes.
struct SyntheticConfig {
  int n_per_class = 20;
  int m = 40;
  int d = 2;
  // Centers: angle_start + t * angle_span on a circle of arc_radius around the
  // origin, t in [0, 1] running over all 2 * n_per_class distributions with
  // the classes alternating. Class 1 sits class_offset further out.
  double arc_radius = 30.0;
  double angle_start = 0.0;
  double angle_span = 0.25;
  double class_offset = 0.0;
  // Sizes vary linearly in t from *_begin to *_end. Square: half side
  // length. Circle: radius. The default circles are smaller than the squares,
  // which keeps every circle farther from every square than from its own
  // chain neighbours. Sizes are constant by default: a size trend shortens
  // the part of the chain that D2 can split along.
  double square_size_begin = 8.0;
  double square_size_end = 8.0;
  double circle_size_begin = 4.0;
  double circle_size_end = 4.0;
  double jitter = 0.0;  // std-dev of isotropic Gaussian jitter on each support point
  std::uint64_t seed = 42;

  void validate() const {
    if (n_per_class < 1) throw Error(Errc::invalid_config, "n_per_class must be >= 1");
    if (m < 1) throw Error(Errc::invalid_config, "m must be >= 1");
    if (d != 2) throw Error(Errc::invalid_config, "synthetic shapes live in d = 2");
    if (!(square_size_begin > 0.0) || !(square_size_end > 0.0) || !(circle_size_begin > 0.0) || !(circle_size_end > 0.0))
      throw Error(Errc::invalid_config, "shape sizes must be positive");
    if (jitter < 0.0 || !std::isfinite(jitter)) throw Error(Errc::invalid_config, "jitter must be >= 0");
  }
};

namespace detail {

inline Eigen::Vector2d square_boundary_point(double u, double half) {
  // u in [0, 4): one unit per side, counter-clockwise from the bottom-right corner.
  const int side = std::min(3, static_cast<int>(u));
  const double s = (u - side) * 2.0 - 1.0;
  switch (side) {
    case 0: return {half, s * half};
    case 1: return {-s * half, half};
    case 2: return {-half, -s * half};
    default: return {s * half, -half};
  }
}

}  // namespace detail

inline DistributionSet generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, 0x5EED);
  std::normal_distribution<double> jitter(0.0, 1.0);

  const int total = 2 * cfg.n_per_class;
  DistributionSet set;
  set.distributions.resize(static_cast<std::size_t>(total));
  // Output order: all squares, then all circles.
  for (int k = 0; k < total; ++k) {
    const int cls = k % 2;
    const int member = k / 2;
    const double t = total > 1 ? static_cast<double>(k) / (total - 1) : 0.0;
    const double angle = cfg.angle_start + t * cfg.angle_span;
    const double radius = cfg.arc_radius + (cls == 1 ? cfg.class_offset : 0.0);
    const Eigen::Vector2d center(radius * std::cos(angle), radius * std::sin(angle));

    DiscreteDistribution dist;
    dist.id = (cls == 0 ? "square_" : "circle_") + std::to_string(member);
    dist.label = cls;
    dist.support.resize(cfg.m, 2);
    dist.weights = uniform_weights(cfg.m);
    // Evenly spaced along the boundary from a random starting phase.
    const double phase = uniform_real(rng);
    for (int p = 0; p < cfg.m; ++p) {
      const double u = (p + phase) / cfg.m;
      Eigen::Vector2d x;
      if (cls == 0) {
        const double half = cfg.square_size_begin + t * (cfg.square_size_end - cfg.square_size_begin);
        x = detail::square_boundary_point(4.0 * u, half);
      } else {
        const double r = cfg.circle_size_begin + t * (cfg.circle_size_end - cfg.circle_size_begin);
        const double phi = 2.0 * std::numbers::pi * u;
        x = {r * std::cos(phi), r * std::sin(phi)};
      }
      x += center;
      if (cfg.jitter > 0.0) {
        x.x() += cfg.jitter * jitter(rng);
        x.y() += cfg.jitter * jitter(rng);
      }
      dist.support.row(p) = x.transpose();
    }
    set.distributions[static_cast<std::size_t>(cls * cfg.n_per_class + member)] = std::move(dist);
  }
  return set;
}

/// Perturbs every support point by i.i.d. N(0, sigma^2 I). sigma = 0 is the identity.
inline DistributionSet add_gaussian_noise(const DistributionSet& set, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(Errc::negative_sigma, "sigma = " + std::to_string(sigma));
  DistributionSet out = set;
  if (sigma == 0.0) return out;
  Rng rng = make_rng(seed, 0xA015E);
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& d : out.distributions)
    for (Eigen::Index r = 0; r < d.support.rows(); ++r)
      for (Eigen::Index c = 0; c < d.support.cols(); ++c) d.support(r, c) += normal(rng);
  return out;
}

/// Keeps `count` support points of each distribution (seeded, without
/// replacement, original order preserved) and renormalizes the weights.
/// Distributions with at most `count` points are returned unchanged.
inline DistributionSet subsample_support(const DistributionSet& set, Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw Error(Errc::invalid_config, "subsample count must be >= 1");
  DistributionSet out = set;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& d = out[i];
    const auto m = d.support.rows();
    if (m <= count) continue;
    Rng rng = make_rng(seed, i);
    auto keep = sample_without_replacement(static_cast<std::size_t>(m), static_cast<std::size_t>(count), rng);
    std::sort(keep.begin(), keep.end());
    Matrix support(count, d.dim());
    Vector weights(count);
    for (Eigen::Index k = 0; k < count; ++k) {
      support.row(k) = d.support.row(static_cast<Eigen::Index>(keep[k]));
      weights[k] = d.weights[static_cast<Eigen::Index>(keep[k])];
    }
    const double total = weights.sum();
    weights = total > 0.0 ? Vector(weights / total) : uniform_weights(count);
    d.support = std::move(support);
    d.weights = std::move(weights);
  }
  return out;
}

}  // namespace ddsc
