#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "ddsc/evaluation.hpp"
#include "ddsc/timing.hpp"
#include "test_util.hpp"

namespace {

using Labels = std::vector<int>;

// Pair enumeration: counts of pairs together in both / only a / only b.
double ari_by_pairs(const Labels& a, const Labels& b) {
  double both = 0, in_a = 0, in_b = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      ++total;
    }
  const double expected = in_a * in_b / total;
  return (both - expected) / (0.5 * (in_a + in_b) - expected);
}

double choose(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// AMI with E[MI] from explicit hypergeometric probabilities C(b, nij) C(n-b, a-nij) / C(n, a).
double ami_oracle(const Labels& x, const Labels& y) {
  const int n = static_cast<int>(x.size());
  std::map<int, int> ca, cb;
  std::map<std::pair<int, int>, int> joint;
  for (int i = 0; i < n; ++i) {
    ++ca[x[i]];
    ++cb[y[i]];
    ++joint[{x[i], y[i]}];
  }
  double mi = 0, ha = 0, hb = 0, emi = 0;
  for (auto [k, c] : joint) mi += double(c) / n * std::log(double(n) * c / (double(ca[k.first]) * cb[k.second]));
  for (auto [k, c] : ca) ha -= double(c) / n * std::log(double(c) / n);
  for (auto [k, c] : cb) hb -= double(c) / n * std::log(double(c) / n);
  for (auto [ka, a] : ca)
    for (auto [kb, b] : cb)
      for (int nij = std::max(1, a + b - n); nij <= std::min(a, b); ++nij)
        emi += double(nij) / n * std::log(double(n) * nij / (double(a) * b)) * choose(b, nij) * choose(n - b, a - nij) / choose(n, a);
  return (mi - emi) / (0.5 * (ha + hb) - emi);
}

TEST(Ami, IdenticalAndRelabelled) {
  const Labels a{0, 0, 1, 1, 2, 2, 2};
  EXPECT_DOUBLE_EQ(ddsc::ami(a, a), 1.0);
  EXPECT_DOUBLE_EQ(ddsc::ami(a, {5, 5, 3, 3, 9, 9, 9}), 1.0);
  EXPECT_EQ(ddsc::ami({0, 0, 0}, {0, 0, 0}), 1.0);
}

TEST(Ami, ConstantVersusClasses) {
  EXPECT_NEAR(ddsc::ami({0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 2, 2}), 0.0, 1e-12);
  EXPECT_NEAR(ddsc::ami({0, 0, 0, 0}, {0, 1, 2, 3}), 0.0, 1e-12);
}

TEST(Ami, ReferenceValues) {
  // Reference values from scikit-learn (arithmetic normalisation).
  EXPECT_NEAR(ddsc::ami({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 2, 2}), 0.2987924581708901, 1e-12);
  EXPECT_NEAR(ddsc::ami({0, 0, 1, 1, 2, 2, 2, 3, 3, 0}, {1, 1, 0, 0, 2, 2, 0, 3, 1, 1}), 0.49651925539547676, 1e-12);
  EXPECT_NEAR(ddsc::ami({0, 1, 0, 1}, {0, 0, 1, 1}), -0.5, 1e-12);
}

TEST(Ami, MatchesExplicitHypergeometricOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + trial % 20, ka = 2 + trial % 4, kb = 1 + trial % 5;
    std::uniform_int_distribution<int> da(0, ka - 1), db(0, kb - 1);
    Labels a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = da(rng);
      b[i] = db(rng);
    }
    a[0] = 0;
    a[1] = 1;  // a has at least two clusters
    EXPECT_NEAR(ddsc::ami(a, b), ami_oracle(a, b), 1e-10) << "trial " << trial;
    EXPECT_NEAR(ddsc::ami(a, b), ddsc::ami(b, a), 1e-12);
  }
}

TEST(Ami, RandomLabelingsAverageZero) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(0, 4);
  double sum = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    Labels a(200), b(200);
    for (int i = 0; i < 200; ++i) {
      a[i] = d(rng);
      b[i] = d(rng);
    }
    sum += ddsc::ami(a, b);
  }
  EXPECT_NEAR(sum / 500.0, 0.0, 0.02);
}

TEST(Ari, Examples) {
  const Labels a{0, 0, 0, 1, 1, 1}, b{0, 0, 1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(ddsc::ari(a, a), 1.0);
  EXPECT_DOUBLE_EQ(ddsc::ari({0, 1, 0, 1}, {1, 0, 1, 0}), 1.0);
  // 15 pairs: together in both = 2, in a = 6, in b = 3.
  EXPECT_NEAR(ddsc::ari(a, b), (2.0 - 6.0 * 3.0 / 15.0) / (4.5 - 6.0 * 3.0 / 15.0), 1e-15);
  EXPECT_NEAR(ddsc::ari(a, b), 0.24242424242424243, 1e-15);
  EXPECT_EQ(ddsc::ari({0}, {3}), 1.0);
}

TEST(Ari, MatchesPairEnumeration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + trial % 30;
    std::uniform_int_distribution<int> d(0, 1 + trial % 4);
    Labels a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = d(rng);
      b[i] = d(rng);
    }
    a[0] = 0;
    a[1] = 1;
    EXPECT_NEAR(ddsc::ari(a, b), ari_by_pairs(a, b), 1e-12);
    EXPECT_NEAR(ddsc::ari(a, b), ddsc::ari(b, a), 1e-12);
  }
}

TEST(Metrics, RelabelInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    Labels a(40), b(40);
    for (int i = 0; i < 40; ++i) {
      a[i] = d(rng);
      b[i] = d(rng);
    }
    std::vector<int> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    Labels pa(40);
    for (int i = 0; i < 40; ++i) pa[i] = 10 + perm[a[i]];
    EXPECT_NEAR(ddsc::ami(pa, b), ddsc::ami(a, b), 1e-12);
    EXPECT_NEAR(ddsc::ari(pa, b), ddsc::ari(a, b), 1e-12);
    EXPECT_LE(ddsc::ami(a, b), 1.0 + 1e-12);
    EXPECT_LE(ddsc::ari(a, b), 1.0 + 1e-12);
  }
}

TEST(Metrics, LengthMismatch) {
  EXPECT_EQ(testutil::code_of([] { ddsc::ami({0, 1}, {0}); }), ddsc::Errc::length_mismatch);
  EXPECT_EQ(testutil::code_of([] { ddsc::ari({0, 1}, {0}); }), ddsc::Errc::length_mismatch);
}

TEST(Contingency, Margins) {
  const auto t = ddsc::contingency({0, 0, 1, 2}, {1, 0, 0, 0});
  EXPECT_EQ(t.n, 4);
  EXPECT_EQ(t.row_sums, (std::vector<std::int64_t>{2, 1, 1}));
  EXPECT_EQ(t.col_sums, (std::vector<std::int64_t>{3, 1}));
  EXPECT_EQ(t.counts[0], (std::vector<std::int64_t>{1, 1}));
}

TEST(Timing, TimedAndCumulative) {
  auto [value, secs] = ddsc::timed([] { return 7; });
  EXPECT_EQ(value, 7);
  EXPECT_GE(secs, 0.0);

  ddsc::StageTimings t;
  ddsc::timed(t, "a", [] { return 1; });
  ddsc::timed(t, "b", [] {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    return 2;
  });
  ddsc::timed(t, "a", [] { return 3; });
  ASSERT_EQ(t.stages.size(), 2u);
  EXPECT_EQ(t.stages[0].first, "a");
  EXPECT_EQ(t.stages[1].first, "b");
  EXPECT_GE(t.get("b"), 0.002);
  EXPECT_DOUBLE_EQ(t.total(), t.get("a") + t.get("b"));
}

}  // namespace
