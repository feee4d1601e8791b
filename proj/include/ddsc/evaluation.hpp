#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ddsc/error.hpp"
#include "ddsc/timing.hpp"

namespace ddsc {

struct ContingencyTable {
  std::vector<std::vector<std::int64_t>> counts;  // rows: classes of a, cols: classes of b
  std::vector<std::int64_t> row_sums, col_sums;
  std::int64_t n = 0;
};

inline ContingencyTable contingency(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw Error(Errc::length_mismatch, "labelings have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  std::map<int, std::size_t> ra, rb;
  for (int x : a) ra.emplace(x, 0);
  for (int x : b) rb.emplace(x, 0);
  std::size_t k = 0;
  for (auto& [key, idx] : ra) idx = k++;
  k = 0;
  for (auto& [key, idx] : rb) idx = k++;

  ContingencyTable t;
  t.n = static_cast<std::int64_t>(a.size());
  t.counts.assign(ra.size(), std::vector<std::int64_t>(rb.size(), 0));
  t.row_sums.assign(ra.size(), 0);
  t.col_sums.assign(rb.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = ra[a[i]], c = rb[b[i]];
    ++t.counts[r][c];
    ++t.row_sums[r];
    ++t.col_sums[c];
  }
  return t;
}

namespace detail {

inline double entropy(const std::vector<std::int64_t>& sums, std::int64_t n) {
  double h = 0.0;
  for (auto s : sums)
    if (s > 0) {
      const double p = static_cast<double>(s) / static_cast<double>(n);
      h -= p * std::log(p);
    }
  return h;
}

inline double mutual_information(const ContingencyTable& t) {
  const double n = static_cast<double>(t.n);
  double mi = 0.0;
  for (std::size_t i = 0; i < t.counts.size(); ++i)
    for (std::size_t j = 0; j < t.counts[i].size(); ++j) {
      const double nij = static_cast<double>(t.counts[i][j]);
      if (nij > 0.0)
        mi += nij / n * std::log(n * nij / (static_cast<double>(t.row_sums[i]) * static_cast<double>(t.col_sums[j])));
    }
  return mi;
}

/// E[MI] under the hypergeometric (fixed-margins permutation) model.
inline double expected_mutual_information(const ContingencyTable& t) {
  const auto n = t.n;
  const double nd = static_cast<double>(n);
  const double lg_n = std::lgamma(nd + 1.0);
  double emi = 0.0;
  for (auto ai : t.row_sums)
    for (auto bj : t.col_sums) {
      const double a = static_cast<double>(ai), b = static_cast<double>(bj);
      const double base = std::lgamma(a + 1) + std::lgamma(b + 1) + std::lgamma(nd - a + 1) + std::lgamma(nd - b + 1) - lg_n;
      for (std::int64_t nij = std::max<std::int64_t>(1, ai + bj - n); nij <= std::min(ai, bj); ++nij) {
        const double x = static_cast<double>(nij);
        const double log_p = base - std::lgamma(x + 1) - std::lgamma(a - x + 1) - std::lgamma(b - x + 1) - std::lgamma(nd - a - b + x + 1);
        emi += x / nd * std::log(nd * x / (a * b)) * std::exp(log_p);
      }
    }
  return emi;
}

}  // namespace detail

/// Adjusted mutual information, arithmetic-mean normalisation:
/// (MI - E[MI]) / (mean(H_a, H_b) - E[MI]).
inline double ami(const std::vector<int>& a, const std::vector<int>& b) {
  const auto t = contingency(a, b);
  if (t.n == 0) throw Error(Errc::length_mismatch, "empty labelings");
  if (t.row_sums.size() == 1 && t.col_sums.size() == 1) return 1.0;
  const double mi = detail::mutual_information(t);
  const double emi = detail::expected_mutual_information(t);
  const double norm = 0.5 * (detail::entropy(t.row_sums, t.n) + detail::entropy(t.col_sums, t.n));
  double denom = norm - emi;
  constexpr double tiny = std::numeric_limits<double>::epsilon();
  denom = denom < 0.0 ? std::min(denom, -tiny) : std::max(denom, tiny);
  return (mi - emi) / denom;
}

/// Adjusted Rand index by pair counting.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  const auto t = contingency(a, b);
  auto pairs = [](std::int64_t x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& row : t.counts)
    for (auto c : row) index += pairs(c);
  for (auto s : t.row_sums) sa += pairs(s);
  for (auto s : t.col_sums) sb += pairs(s);
  const double total = pairs(t.n);
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace ddsc
