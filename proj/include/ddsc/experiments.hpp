#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddsc/distance_matrix.hpp"
#include "ddsc/distribution.hpp"
#include "ddsc/error.hpp"
#include "ddsc/graph.hpp"

namespace ddsc {

/// A metric with its hyperparameter, written `name` or `name:value`
/// (`sinkhorn:5` is epsilon = 5, `mmd:2` is bandwidth 2).
struct MetricSpec {
  std::string label;
  MetricParams params;
};

inline MetricSpec parse_metric_spec(const std::string& text) {
  const auto colon = text.find(':');
  MetricSpec spec;
  spec.label = text;
  spec.params.metric = parse_metric(text.substr(0, colon));
  if (colon == std::string::npos) return spec;
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(Errc::invalid_config, "bad metric value in '" + text + "'");
  }
  switch (spec.params.metric) {
    case Metric::sinkhorn:
      if (!(v > 0.0)) throw Error(Errc::non_positive_epsilon, "epsilon in '" + text + "' must be > 0");
      spec.params.epsilon = v;
      break;
    case Metric::mmd:
      if (!(v > 0.0)) throw Error(Errc::invalid_config, "bandwidth in '" + text + "' must be > 0");
      spec.params.sigma = v;
      break;
    default: throw Error(Errc::invalid_config, "metric '" + text.substr(0, colon) + "' takes no value");
  }
  return spec;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

/// `start:stop:step` (inclusive of stop up to rounding) or a comma list.
inline std::vector<double> parse_grid(const std::string& text) {
  auto num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::invalid_config, "bad number '" + s + "' in grid '" + text + "'");
    }
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw Error(Errc::invalid_config, "grid '" + text + "' is not start:stop:step");
    const double start = num(parts[0]), stop = num(parts[1]), step = num(parts[2]);
    if (!(step > 0.0) || stop < start) throw Error(Errc::invalid_config, "grid '" + text + "' is empty");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(start + static_cast<double>(i) * step);
  } else {
    for (const auto& s : split(text, ',')) out.push_back(num(s));
  }
  return out;
}

struct NoiseSweepRow {
  double sigma = 0.0;
  std::string metric;
  double median_rel_error = 0.0;      // median of (D_sigma - D_0) / D_0
  double median_abs_rel_error = 0.0;  // median of |D_sigma - D_0| / |D_0|
  std::size_t entries = 0;            // pairs with D_0 != 0
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace detail

/// For each sigma, adds N(0, sigma^2 I) to every support point and compares
/// the full distance matrix with the noise-free one over off-diagonal pairs.
/// The same seed is used for every sigma, so the noise draws are scaled
/// copies of each other. MMD specs without a bandwidth use 1.
inline std::vector<NoiseSweepRow> noise_sweep(const DistributionSet& set, const std::vector<double>& sigmas,
                                              std::vector<MetricSpec> metrics, std::uint64_t seed) {
  for (auto& m : metrics)
    if (m.params.metric == Metric::mmd && !m.params.sigma) m.params.sigma = 1.0;
  std::vector<DistanceMatrix> clean;
  for (const auto& m : metrics) clean.push_back(build_distance_matrix(set, m.params, 1.0, seed));

  std::vector<NoiseSweepRow> rows;
  for (double sigma : sigmas) {
    const auto noisy = add_gaussian_noise(set, sigma, seed);
    for (std::size_t k = 0; k < metrics.size(); ++k) {
      const auto d = build_distance_matrix(noisy, metrics[k].params, 1.0, seed);
      std::vector<double> rel, abs_rel;
      const auto& d0 = clean[k].values;
      for (Eigen::Index j = 0; j < d0.cols(); ++j)
        for (Eigen::Index i = 0; i < j; ++i) {
          if (d0(i, j) == 0.0) continue;
          const double r = (d.values(i, j) - d0(i, j)) / d0(i, j) + 0.0;  // + 0.0 turns -0 into 0
          rel.push_back(r);
          abs_rel.push_back(std::abs(r));
        }
      rows.push_back({sigma, metrics[k].label, detail::median(rel), detail::median(abs_rel), rel.size()});
    }
  }
  return rows;
}

inline std::string noise_sweep_csv(const std::vector<NoiseSweepRow>& rows) {
  std::string out = "sigma,metric,median_rel_error,median_abs_rel_error,entries\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%zu\n", r.sigma, r.metric.c_str(), r.median_rel_error,
                  r.median_abs_rel_error, r.entries);
    out += buf;
  }
  return out;
}

}  // namespace ddsc
