#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddsc/evaluation.hpp"
#include "ddsc/spectral.hpp"
#include "test_util.hpp"

namespace {

using ddsc::Matrix;
using ddsc::Vector;
using testutil::code_of;
using testutil::random_points;

Matrix block_affinity(const std::vector<int>& sizes, std::mt19937_64& rng) {
  int n = 0;
  for (int s : sizes) n += s;
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Matrix a = Matrix::Zero(n, n);
  int start = 0;
  for (int s : sizes) {
    for (int i = start; i < start + s; ++i)
      for (int j = start; j < i; ++j) a(i, j) = a(j, i) = u(rng);
    start += s;
  }
  return a;
}

TEST(Laplacian, TwoNodes) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const auto l = ddsc::laplacian(a);
  Matrix expected(2, 2);
  expected << 1, -1, -1, 1;
  EXPECT_EQ(l.l, expected);
  EXPECT_EQ(l.degree, Vector::Ones(2));

  const auto e = ddsc::eig_smallest(l.l, 1);
  EXPECT_NEAR(e.eigenvalues[0], 0.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 2.0, 1e-14);
  EXPECT_NEAR(e.vectors(0, 0), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(e.vectors(1, 0), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(e.gap, 2.0, 1e-14);
}

TEST(Laplacian, BlocksGiveZeroEigenvalues) {
  std::mt19937_64 rng(1);
  for (int k = 1; k <= 4; ++k) {
    std::vector<int> sizes;
    for (int b = 0; b < k; ++b) sizes.push_back(3 + b);
    const auto l = ddsc::laplacian(block_affinity(sizes, rng));
    const auto e = ddsc::eig_smallest(l.l, k);
    for (int i = 0; i < k; ++i) EXPECT_LE(std::abs(e.eigenvalues[i]), 1e-10);
    EXPECT_GT(e.eigenvalues[k], 1e-3);
    EXPECT_GE(e.eigenvalues.minCoeff(), -1e-9);
    EXPECT_LE(e.eigenvalues.maxCoeff(), 2.0 + 1e-8);
  }
}

TEST(Laplacian, IsolatedNode) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = 1.0;
  try {
    ddsc::laplacian(a);
    FAIL() << "expected an error";
  } catch (const ddsc::Error& e) {
    EXPECT_EQ(e.code(), ddsc::Errc::isolated_node);
    EXPECT_NE(std::string(e.what()).find("node 2"), std::string::npos);
  }
}

TEST(Eigen, IdentityResidualOnly) {
  const auto e = ddsc::eig_smallest(Matrix::Identity(5, 5), 3);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(e.eigenvalues[i], 1.0, 1e-15);
  EXPECT_NEAR((e.vectors.transpose() * e.vectors - Matrix::Identity(3, 3)).norm(), 0.0, 1e-12);
}

TEST(Eigen, ReconstructsRandomSymmetric) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix r = random_points(rng, 8, 8);
    const Matrix l = 0.5 * (r + r.transpose());
    const auto e = ddsc::eig_smallest(l, 8);
    const Matrix recon = e.vectors * e.eigenvalues.asDiagonal() * e.vectors.transpose();
    EXPECT_LE((recon - l).norm(), 1e-8);
    EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix::Identity(8, 8)).norm(), 1e-8);
    for (int i = 1; i < 8; ++i) EXPECT_LE(e.eigenvalues[i - 1], e.eigenvalues[i]);
    for (int c = 0; c < 8; ++c) {
      Eigen::Index at;
      e.vectors.col(c).cwiseAbs().maxCoeff(&at);
      EXPECT_GT(e.vectors(at, c), 0.0);
    }
  }
  EXPECT_EQ(code_of([] { ddsc::eig_smallest(Matrix::Identity(3, 3), 0); }), ddsc::Errc::invalid_config);
}

TEST(Eigen, RowNormalizeKeepsZeroRows) {
  Matrix v(3, 2);
  v << 3, 4, 0, 0, 0, -2;
  std::size_t zeros = 0;
  const Matrix r = ddsc::row_normalize(v, &zeros);
  EXPECT_EQ(zeros, 1u);
  EXPECT_NEAR(r(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(r(0, 1), 0.8, 1e-15);
  EXPECT_EQ(r.row(1), Eigen::RowVector2d::Zero());
  EXPECT_EQ(r(2, 1), -1.0);
}

TEST(KMeans, SeparatedGroups) {
  std::mt19937_64 rng(3);
  Matrix x(30, 2);
  std::vector<int> truth;
  for (int i = 0; i < 30; ++i) {
    const int g = i % 3;
    x.row(i) = random_points(rng, 1, 2, 0.1) + Eigen::RowVector2d(10.0 * g, -5.0 * g);
    truth.push_back(g);
  }
  const auto a = ddsc::kmeans(x, 3, 7);
  EXPECT_EQ(ddsc::ami(truth, a.labels), 1.0);
  EXPECT_FALSE(a.missing_cluster);
  // Inertia equals the within-group sum of squares.
  double sse = 0.0;
  for (int g = 0; g < 3; ++g) {
    Eigen::RowVector2d c = Eigen::RowVector2d::Zero();
    for (int i = g; i < 30; i += 3) c += x.row(i);
    c /= 10.0;
    for (int i = g; i < 30; i += 3) sse += (x.row(i) - c).squaredNorm();
  }
  EXPECT_NEAR(a.inertia, sse, 1e-9 * sse);
  EXPECT_EQ(a.labels[0], 0);
}

TEST(KMeans, KEqualsN) {
  std::mt19937_64 rng(4);
  const Matrix x = random_points(rng, 6, 3);
  const auto a = ddsc::kmeans(x, 6, 1);
  EXPECT_EQ(a.inertia, 0.0);
  EXPECT_EQ(a.labels, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(KMeans, Deterministic) {
  std::mt19937_64 rng(5);
  const Matrix x = random_points(rng, 50, 2);
  const auto a = ddsc::kmeans(x, 4, 99), b = ddsc::kmeans(x, 4, 99);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, DuplicatePointsFlagMissingCluster) {
  const Matrix x = Matrix::Ones(5, 2);
  const auto a = ddsc::kmeans(x, 2, 0);
  EXPECT_EQ(a.inertia, 0.0);
  EXPECT_EQ(a.labels.size(), 5u);
}

TEST(KMeans, CanonicalLabels) {
  EXPECT_EQ(ddsc::detail::canonical_labels({2, 2, 0, 1, 0}), (std::vector<int>{0, 0, 1, 2, 1}));
}

TEST(Spectral, BlockAffinityRecoveredForAnySeed) {
  std::mt19937_64 rng(6);
  const Matrix a = block_affinity({5, 7, 6}, rng);
  std::vector<int> truth;
  int b = 0;
  for (int s : {5, 7, 6}) {
    for (int i = 0; i < s; ++i) truth.push_back(b);
    ++b;
  }
  ddsc::AffinityGraph g;
  g.adjacency = a;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = ddsc::spectral_cluster(g, 3, seed);
    EXPECT_EQ(ddsc::ami(truth, r.assignment.labels), 1.0) << "seed " << seed;
    EXPECT_NEAR(r.delta, r.embedding.eigenvalues[3] - r.embedding.eigenvalues[2], 1e-15);
    EXPECT_EQ(r.alpha, ddsc::smallest_nonzero(a));
  }
}

TEST(Pipeline, SingleCluster) {
  const auto set = ddsc::generate_synthetic({});
  ddsc::MetricParams p;
  p.metric = ddsc::Metric::lot;
  const auto r = ddsc::cluster_pipeline(set, p, 1, 10, std::nullopt, 0);
  EXPECT_EQ(r.assignment.labels, std::vector<int>(40, 0));
}

TEST(Pipeline, SyntheticMmdFullAndPartial) {
  const auto set = ddsc::generate_synthetic({});
  ddsc::MetricParams p;
  p.metric = ddsc::Metric::mmd;
  const auto full = ddsc::cluster_pipeline(set, p, 2, 10, std::nullopt, 42);
  EXPECT_EQ(ddsc::ami(set.labels(), full.assignment.labels), 1.0);
  std::vector<std::string> stages;
  for (const auto& [name, secs] : full.timings.stages) {
    stages.push_back(name);
    EXPECT_GE(secs, 0.0);
  }
  EXPECT_EQ(stages, (std::vector<std::string>{"distmat", "affinity", "eig", "kmeans"}));

  const auto partial = ddsc::cluster_pipeline(set, p, 2, 10, std::nullopt, 42, 0.8);
  EXPECT_EQ(partial.distances.computed_pairs(), 624u);
  EXPECT_EQ(ddsc::ami(set.labels(), partial.assignment.labels), 1.0);

  const auto again = ddsc::cluster_pipeline(set, p, 2, 10, std::nullopt, 42, 0.8);
  EXPECT_EQ(again.assignment.labels, partial.assignment.labels);
}

}  // namespace
