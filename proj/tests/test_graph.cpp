#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddsc/graph.hpp"
#include "ddsc/io.hpp"
#include "test_util.hpp"

namespace {

using ddsc::Matrix;
using testutil::code_of;
using testutil::random_points;
using testutil::uniform_dist;

ddsc::DistributionSet random_set(std::mt19937_64& rng, int n, int m) {
  ddsc::DistributionSet set;
  for (int i = 0; i < n; ++i) set.distributions.push_back(uniform_dist("d" + std::to_string(i), random_points(rng, m, 2, 1.0 + 0.1 * i), i % 2));
  return set;
}

ddsc::DistanceMatrix from_values(const Matrix& v) {
  ddsc::DistanceMatrix d;
  d.values = v;
  d.mask = ddsc::BoolMatrix::Constant(v.rows(), v.cols(), true);
  return d;
}

ddsc::MetricParams mmd_params(double sigma) {
  ddsc::MetricParams p;
  p.metric = ddsc::Metric::mmd;
  p.sigma = sigma;
  return p;
}

TEST(DistanceMatrix, FullAndPartialCounts) {
  std::mt19937_64 rng(1);
  const auto set = random_set(rng, 40, 5);
  const auto full = ddsc::build_distance_matrix(set, mmd_params(1.0), 1.0, 3);
  EXPECT_EQ(full.computed_pairs(), 780u);
  EXPECT_TRUE(full.mask.all());

  const auto half = ddsc::build_distance_matrix(set, mmd_params(1.0), 0.5, 3);
  EXPECT_EQ(half.computed_pairs(), 390u);
  EXPECT_EQ(half.mask, ddsc::BoolMatrix(half.mask.transpose()));
  EXPECT_EQ(half.values, Matrix(half.values.transpose()));
  EXPECT_TRUE(half.mask.diagonal().all());
  for (int j = 0; j < 40; ++j)
    for (int i = 0; i < 40; ++i) {
      if (half.mask(i, j)) {
        EXPECT_EQ(half.values(i, j), full.values(i, j));
      } else {
        EXPECT_EQ(half.values(i, j), 0.0);
      }
    }

  EXPECT_EQ(ddsc::build_distance_matrix(set, mmd_params(1.0), 0.5, 3), half);
  EXPECT_NE(ddsc::build_distance_matrix(set, mmd_params(1.0), 0.5, 4).mask, half.mask);
  EXPECT_EQ(ddsc::build_distance_matrix(set, mmd_params(1.0), 0.3, 3).computed_pairs(), 234u);
}

TEST(DistanceMatrix, EntriesMatchDirectCalls) {
  std::mt19937_64 rng(2);
  const auto set = random_set(rng, 5, 6);
  ddsc::MetricParams w;
  w.metric = ddsc::Metric::wasserstein;
  const auto dw = ddsc::build_distance_matrix(set, w);
  const auto dm = ddsc::build_distance_matrix(set, mmd_params(0.7));
  EXPECT_EQ(*dm.resolved_sigma, 0.7);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      if (i == j) continue;
      const auto a = std::min(i, j), b = std::max(i, j);
      EXPECT_EQ(dw.values(i, j), ddsc::wasserstein2_exact(set[a], set[b]).distance);
      EXPECT_EQ(dm.values(i, j), ddsc::mmd2(set[a], set[b], ddsc::KernelSpec{0.7}));
    }
}

TEST(DistanceMatrix, IdenticalDistributionsAreAtZero) {
  std::mt19937_64 rng(3);
  auto set = random_set(rng, 3, 6);
  set.distributions[2].support = set.distributions[0].support;
  ddsc::MetricParams w;
  w.metric = ddsc::Metric::wasserstein;
  EXPECT_NEAR(ddsc::build_distance_matrix(set, w).values(0, 2), 0.0, 1e-12);
}

TEST(DistanceMatrix, ErrorsCarryPair) {
  std::mt19937_64 rng(4);
  const auto set = random_set(rng, 3, 4);
  ddsc::MetricParams p;
  p.metric = ddsc::Metric::sinkhorn;
  p.epsilon = -1.0;
  try {
    ddsc::build_distance_matrix(set, p);
    FAIL() << "expected an error";
  } catch (const ddsc::Error& e) {
    EXPECT_EQ(e.code(), ddsc::Errc::non_positive_epsilon);
    EXPECT_NE(std::string(e.what()).find("pair (0, 1)"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([&] { ddsc::build_distance_matrix(set, mmd_params(1.0), 0.0); }), ddsc::Errc::invalid_config);
  EXPECT_EQ(code_of([&] { ddsc::build_distance_matrix(set, mmd_params(1.0), 1.5); }), ddsc::Errc::invalid_config);
}

TEST(Affinity, ZeroDistanceGivesOne) {
  const auto g = ddsc::to_affinity(from_values(Matrix::Zero(3, 3)), 2.0, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(g.adjacency(i, j), i == j ? 0.0 : 1.0);
}

TEST(Affinity, ThreeNodeTauOne) {
  Matrix d(3, 3);
  d << 0, 1, 3, 1, 0, 2, 3, 2, 0;
  const auto g = ddsc::to_affinity(from_values(d), 1.0, 1);
  // Column 0 keeps row 1, column 1 keeps row 0, column 2 keeps row 1.
  Matrix expected = Matrix::Zero(3, 3);
  expected(0, 1) = expected(1, 0) = std::exp(-1.0);
  expected(1, 2) = expected(2, 1) = 0.5 * std::exp(-4.0);
  EXPECT_EQ(g.adjacency, expected);
  EXPECT_EQ(g.tau, 1);
  EXPECT_EQ(g.gamma, 1.0);
}

TEST(Affinity, UncomputedEntriesNeverKept) {
  Matrix v = Matrix::Constant(4, 4, 5.0);
  v.diagonal().setZero();
  auto d = from_values(v);
  // The uncomputed pair has value 0, which would otherwise be the nearest.
  d.values(0, 1) = d.values(1, 0) = 0.0;
  d.mask(0, 1) = d.mask(1, 0) = false;
  const auto g = ddsc::to_affinity(d, 0.01, 3);
  EXPECT_EQ(g.adjacency(0, 1), 0.0);
  EXPECT_EQ(g.adjacency(1, 0), 0.0);
  EXPECT_GT(g.adjacency(0, 2), 0.0);
}

TEST(Affinity, NegativeEntriesClamped) {
  Matrix v(3, 3);
  v << 0, -0.2, 1, -0.2, 0, 1, 1, 1, 0;
  const auto g = ddsc::to_affinity(from_values(v), 1.0, 2);
  EXPECT_EQ(g.clamped_negative, 1u);
  EXPECT_EQ(g.adjacency(0, 1), 1.0);
}

TEST(Affinity, AutoGammaIsMedianRule) {
  Matrix v(3, 3);
  v << 0, 1, 2, 1, 0, 4, 2, 4, 0;
  EXPECT_DOUBLE_EQ(ddsc::auto_gamma(from_values(v)), 1.0 / 8.0);
  Matrix w(4, 4);
  w << 0, 1, 2, 3, 1, 0, 4, 5, 2, 4, 0, 6, 3, 5, 6, 0;
  EXPECT_DOUBLE_EQ(ddsc::auto_gamma(from_values(w)), 1.0 / (2.0 * 3.5 * 3.5));
  EXPECT_EQ(ddsc::auto_gamma(from_values(Matrix::Zero(3, 3))), 1.0);
  EXPECT_DOUBLE_EQ(ddsc::to_affinity(from_values(v), std::nullopt, 1).gamma, 1.0 / 8.0);
}

TEST(Affinity, Errors) {
  const auto d = from_values(Matrix::Ones(4, 4) - Matrix::Identity(4, 4));
  EXPECT_EQ(code_of([&] { ddsc::to_affinity(d, 1.0, 0); }), ddsc::Errc::tau_out_of_range);
  EXPECT_EQ(code_of([&] { ddsc::to_affinity(d, 1.0, 4); }), ddsc::Errc::tau_out_of_range);
  EXPECT_EQ(code_of([&] { ddsc::to_affinity(d, -1.0, 2); }), ddsc::Errc::invalid_config);
  auto empty = d;
  empty.mask.setConstant(false);
  empty.mask.diagonal().setConstant(true);
  EXPECT_EQ(code_of([&] { ddsc::to_affinity(empty, 1.0, 2); }), ddsc::Errc::all_entries_uncomputed);
}

TEST(Affinity, SymmetricWithBoundedColumns) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6 + trial;
    Matrix v(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) v(i, j) = v(j, i) = i == j ? 0.0 : u(rng);
    const int tau = 1 + trial % (n - 1);
    const auto g = ddsc::to_affinity(from_values(v), 0.5, tau);
    EXPECT_EQ(g.adjacency, Matrix(g.adjacency.transpose()));
    EXPECT_EQ(g.adjacency.diagonal(), ddsc::Vector::Zero(n));
    EXPECT_GE(g.adjacency.minCoeff(), 0.0);
    // Every node is in at most tau columns of its own plus the columns that chose it.
    Matrix full(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) full(i, j) = i == j ? 0.0 : std::exp(-0.5 * v(i, j) * v(i, j));
    const Matrix kept = ddsc::sparse_top_tau(full, tau);
    for (int j = 0; j < n; ++j) EXPECT_EQ((kept.col(j).array() > 0).count(), tau);
  }
}

TEST(SparseTopTau, IdempotentAndMonotone) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + trial % 10, tau = 1 + trial % (n - 1);
    Matrix a(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) a(i, j) = i == j ? 0.0 : u(rng);
    const Matrix once = ddsc::sparse_top_tau(a, tau);
    EXPECT_EQ(ddsc::sparse_top_tau(once, tau), once);
    for (int j = 0; j < n; ++j) {
      double min_kept = 2.0, max_dropped = -1.0;
      for (int i = 0; i < n; ++i) {
        if (i == j) continue;
        if (once(i, j) > 0.0) {
          min_kept = std::min(min_kept, a(i, j));
        } else {
          max_dropped = std::max(max_dropped, a(i, j));
        }
      }
      EXPECT_GE(min_kept, max_dropped);
    }
  }
}

TEST(SparseTopTau, TiesKeepLowerIndex) {
  Matrix a = Matrix::Ones(4, 4);
  a.diagonal().setZero();
  const Matrix kept = ddsc::sparse_top_tau(a, 1);
  EXPECT_EQ(kept(1, 0), 1.0);
  EXPECT_EQ(kept(0, 1), 1.0);
  EXPECT_EQ(kept(0, 2), 1.0);
  EXPECT_EQ(kept(0, 3), 1.0);
  EXPECT_EQ(kept.sum(), 4.0);
}

TEST(Connectivity, BlockDiagonal) {
  Matrix a = Matrix::Zero(5, 5);
  a(0, 1) = a(1, 0) = 0.9;
  a(1, 2) = a(2, 1) = 0.5;
  a(3, 4) = a(4, 3) = 0.7;
  const auto rep = ddsc::check_connectivity(a, {0, 0, 0, 1, 1});
  EXPECT_EQ(rep.components, 2);
  EXPECT_TRUE(rep.no_inter_class_edges);
  EXPECT_DOUBLE_EQ(rep.xi, 0.5);
  EXPECT_EQ(rep.component_of, (std::vector<int>{0, 0, 0, 1, 1}));
}

TEST(Connectivity, InterClassEdges) {
  Matrix a = Matrix::Constant(4, 4, 0.3);
  a.diagonal().setZero();
  a(0, 1) = a(1, 0) = 0.8;
  a(2, 3) = a(3, 2) = 0.2;
  const auto rep = ddsc::check_connectivity(a, {0, 0, 1, 1});
  EXPECT_EQ(rep.components, 1);
  EXPECT_FALSE(rep.no_inter_class_edges);
  EXPECT_EQ(rep.xi, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(code_of([&] { ddsc::check_connectivity(a, {0, 1}); }), ddsc::Errc::length_mismatch);
}

TEST(Connectivity, PositiveMarginWithWeakInterEdge) {
  Matrix a = Matrix::Zero(4, 4);
  a(0, 1) = a(1, 0) = 0.9;
  a(2, 3) = a(3, 2) = 0.8;
  a(1, 2) = a(2, 1) = 0.1;
  const auto rep = ddsc::check_connectivity(a, {0, 0, 1, 1});
  EXPECT_FALSE(rep.no_inter_class_edges);
  EXPECT_EQ(rep.components, 1);
  EXPECT_DOUBLE_EQ(rep.xi, 0.7);
}

TEST(Connectivity, SyntheticDefaultSet) {
  const auto set = ddsc::generate_synthetic({});
  for (auto metric : {ddsc::Metric::mmd, ddsc::Metric::lot}) {
    ddsc::MetricParams p;
    p.metric = metric;
    const auto g = ddsc::to_affinity(ddsc::build_distance_matrix(set, p, 1.0, 42), std::nullopt, 10);
    const auto rep = ddsc::check_connectivity(g, set.labels());
    EXPECT_EQ(rep.components, 2) << ddsc::to_string(metric);
    EXPECT_TRUE(rep.no_inter_class_edges) << ddsc::to_string(metric);
    EXPECT_GT(rep.xi, 0.0) << ddsc::to_string(metric);
  }
}

TEST(Cache, TextRoundTrip) {
  std::mt19937_64 rng(7);
  const auto set = random_set(rng, 6, 4);
  const auto d = ddsc::build_distance_matrix(set, mmd_params(0.9), 0.6, 11);
  const auto back = ddsc::parse_cache_text(ddsc::to_cache_text(d));
  EXPECT_EQ(back, d);
  EXPECT_EQ(ddsc::to_cache_text(back), ddsc::to_cache_text(d));
  EXPECT_EQ(code_of([] { ddsc::parse_cache_text("3,mmd\n"); }), ddsc::Errc::parse_error);
  EXPECT_EQ(code_of([] { ddsc::parse_cache_text("2,mmd,00\n0,1\n"); }), ddsc::Errc::parse_error);
}

TEST(Cache, HitMissAndBitIdentical) {
  std::mt19937_64 rng(8);
  const auto set = random_set(rng, 8, 5);
  const auto dir = testutil::temp_dir();
  ddsc::MetricParams w;
  w.metric = ddsc::Metric::wasserstein;
  bool hit = true;
  const auto first = ddsc::load_or_build_distance_matrix(dir, set, w, 1.0, 0, &hit);
  EXPECT_FALSE(hit);
  const auto path = ddsc::distance_cache_path(dir, set, w, 1.0, 0);
  ASSERT_TRUE(std::filesystem::exists(path));
  const auto bytes = ddsc::read_file(path);

  const auto second = ddsc::load_or_build_distance_matrix(dir, set, w, 1.0, 0, &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(second, first);

  std::filesystem::remove(path);
  ddsc::load_or_build_distance_matrix(dir, set, w, 1.0, 0, &hit);
  EXPECT_FALSE(hit);
  EXPECT_EQ(ddsc::read_file(path), bytes);

  // Different params land in a different file.
  EXPECT_NE(ddsc::distance_cache_path(dir, set, mmd_params(1.0), 1.0, 0), path);
  EXPECT_NE(ddsc::distance_cache_path(dir, set, w, 1.0, 1), path);
}

TEST(Cache, StaleHeaderIsRebuilt) {
  std::mt19937_64 rng(9);
  const auto set = random_set(rng, 4, 3);
  const auto dir = testutil::temp_dir();
  const auto p = mmd_params(1.0);
  const auto path = ddsc::distance_cache_path(dir, set, p, 1.0, 0);
  auto wrong = ddsc::build_distance_matrix(set, p);
  wrong.params_hash ^= 1;
  wrong.values(0, 1) = wrong.values(1, 0) = 123.0;
  ddsc::write_file_atomic(path, ddsc::to_cache_text(wrong));
  bool hit = true;
  const auto d = ddsc::load_or_build_distance_matrix(dir, set, p, 1.0, 0, &hit);
  EXPECT_FALSE(hit);
  EXPECT_NE(d.values(0, 1), 123.0);
}

}  // namespace
