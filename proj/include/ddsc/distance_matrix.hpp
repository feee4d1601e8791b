#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

#include "ddsc/distribution.hpp"
#include "ddsc/error.hpp"

namespace ddsc {

// euclidean: distances between per-distribution mean vectors (baseline only).
enum class Metric { mmd, wasserstein, sinkhorn, lot, euclidean };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::mmd: return "mmd";
    case Metric::wasserstein: return "wasserstein";
    case Metric::sinkhorn: return "sinkhorn";
    case Metric::lot: return "lot";
    case Metric::euclidean: return "euclidean";
  }
  return "unknown";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "mmd") return Metric::mmd;
  if (s == "wasserstein") return Metric::wasserstein;
  if (s == "sinkhorn") return Metric::sinkhorn;
  if (s == "lot") return Metric::lot;
  if (s == "euclidean") return Metric::euclidean;
  throw Error(Errc::invalid_config, "unknown metric '" + s + "'");
}

/// Hyperparameters of one divergence. Entries of the distance matrix are:
/// mmd -> unbiased MMD^2 (may be negative); wasserstein -> W_2;
/// sinkhorn -> raw entropic objective <P,C> + eps KL; lot -> ||Z_i - Z_j||_F.
struct MetricParams {
  Metric metric = Metric::mmd;
  std::optional<double> sigma;  // MMD bandwidth; unset = median heuristic
  double epsilon = 1.0;
  double sinkhorn_tol = 1e-9;
  int sinkhorn_max_iter = 10000;

  std::string describe() const {
    std::string s = std::string("metric=") + to_string(metric);
    char buf[128];
    switch (metric) {
      case Metric::mmd:
        if (sigma) {
          std::snprintf(buf, sizeof buf, ";sigma=%.17g", *sigma);
          s += buf;
        } else {
          s += ";sigma=median";
        }
        break;
      case Metric::sinkhorn:
        std::snprintf(buf, sizeof buf, ";epsilon=%.17g;tol=%.17g;max_iter=%d", epsilon, sinkhorn_tol, sinkhorn_max_iter);
        s += buf;
        break;
      default: break;
    }
    return s;
  }
};

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Symmetric N x N divergence matrix; mask(i, j) marks computed entries.
struct DistanceMatrix {
  Matrix values;
  BoolMatrix mask;
  Metric metric = Metric::mmd;
  std::string params;              // MetricParams::describe() plus fraction/seed
  std::uint64_t params_hash = 0;   // digest of the set content and params
  std::size_t unconverged = 0;     // Sinkhorn pairs accepted from a partial iterate
  std::optional<double> resolved_sigma;

  Eigen::Index size() const { return values.rows(); }

  std::size_t computed_pairs() const {
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < size(); ++j)
      for (Eigen::Index i = 0; i < j; ++i) c += mask(i, j);
    return c;
  }

  bool operator==(const DistanceMatrix& o) const {
    return values.rows() == o.values.rows() && values == o.values && mask == o.mask && metric == o.metric &&
           params_hash == o.params_hash;
  }
};

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Cache text: `N,metric,params_hash,params`, then N value rows, then N mask
/// rows. The params field is informational and never contains a comma.
inline std::string to_cache_text(const DistanceMatrix& d) {
  const auto n = d.size();
  std::string out = std::to_string(n) + "," + to_string(d.metric) + "," + hex64(d.params_hash) + "," + d.params + "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", d.values(i, j));
      out += buf;
    }
    out += '\n';
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j) out += ',';
      out += d.mask(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline DistanceMatrix parse_cache_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto fail = [](const std::string& why) { return Error(Errc::parse_error, "distance cache: " + why); };
  if (!std::getline(in, line)) throw fail("empty file");
  const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) throw fail("bad header '" + line + "'");
  const auto c3 = line.find(',', c2 + 1);
  DistanceMatrix d;
  Eigen::Index n = 0;
  try {
    n = std::stol(line.substr(0, c1));
    d.metric = parse_metric(line.substr(c1 + 1, c2 - c1 - 1));
    d.params_hash = std::stoull(line.substr(c2 + 1, c3 == std::string::npos ? std::string::npos : c3 - c2 - 1), nullptr, 16);
    if (c3 != std::string::npos) d.params = line.substr(c3 + 1);
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw fail("bad header '" + line + "'");
  }
  if (n < 0) throw fail("negative size");
  d.values.resize(n, n);
  d.mask.resize(n, n);
  auto read_row = [&](Eigen::Index i, auto&& store) {
    if (!std::getline(in, line)) throw fail("truncated at row " + std::to_string(i));
    std::size_t pos = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto end = line.find(',', pos);
      const std::string cell = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      store(j, cell);
      if (j + 1 < n && end == std::string::npos) throw fail("row " + std::to_string(i) + " too short");
      pos = end + 1;
    }
  };
  for (Eigen::Index i = 0; i < n; ++i)
    read_row(i, [&](Eigen::Index j, const std::string& cell) {
      try {
        d.values(i, j) = std::stod(cell);
      } catch (const std::exception&) {
        throw fail("bad value '" + cell + "'");
      }
    });
  for (Eigen::Index i = 0; i < n; ++i)
    read_row(i, [&](Eigen::Index j, const std::string& cell) {
      if (cell != "0" && cell != "1") throw fail("bad mask cell '" + cell + "'");
      d.mask(i, j) = cell == "1";
    });
  return d;
}

}  // namespace ddsc
