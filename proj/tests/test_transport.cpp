#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ddsc/divergences.hpp"
#include "ddsc/transport.hpp"

namespace {

using ddsc::Matrix;
using ddsc::Vector;

Matrix random_points(std::mt19937_64& rng, int m, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix x(m, d);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < d; ++k) x(i, k) = n(rng);
  return x;
}

Vector random_simplex(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vector w(m);
  for (int i = 0; i < m; ++i) w[i] = u(rng);
  return w / w.sum();
}

// Brute force over all m! assignments: optimal value for uniform equal-size marginals.
double brute_force_assignment(const Matrix& c) {
  const int m = static_cast<int>(c.rows());
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += c(i, perm[i]);
    best = std::min(best, s / m);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

TEST(TransportSimplex, MatchesPermutationBruteForce) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 1 + trial % 6;
    const Matrix x = random_points(rng, m, 2), y = random_points(rng, m, 2);
    const Matrix c = ddsc::cost_matrix(x, y);
    const auto plan = ddsc::solve_exact_transport(c, ddsc::uniform_weights(m), ddsc::uniform_weights(m));
    EXPECT_NEAR(plan.objective, brute_force_assignment(c), 1e-10) << "m=" << m;
  }
}

TEST(TransportSimplex, DualCertificateOnGeneralMarginals) {
  // Strong duality + dual feasibility + complementary slackness certify optimality.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 2 + trial % 9, n = 1 + (trial * 7) % 12;
    const Matrix c = ddsc::cost_matrix(random_points(rng, m, 3), random_points(rng, n, 3));
    const Vector a = random_simplex(rng, m), b = random_simplex(rng, n);
    const auto r = ddsc::solve_exact_transport(c, a, b);
    EXPECT_LE(r.row_residual(), 1e-12);
    EXPECT_LE(r.col_residual(), 1e-12);
    EXPECT_GE(r.plan.minCoeff(), 0.0);
    const double dual = a.dot(r.u) + b.dot(r.v);
    EXPECT_NEAR(dual, r.objective, 1e-10);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        EXPECT_LE(r.u[i] + r.v[j], c(i, j) + 1e-10);
        if (r.plan(i, j) > 1e-14) {
          EXPECT_NEAR(r.u[i] + r.v[j], c(i, j), 1e-10);
        }
      }
  }
}

TEST(TransportSimplex, VertexPlanHasAtMostMPlusNMinusOneSupport) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 3 + trial % 10, n = 2 + trial % 7;
    const Matrix c = ddsc::cost_matrix(random_points(rng, m, 2), random_points(rng, n, 2));
    const auto r = ddsc::solve_exact_transport(c, random_simplex(rng, m), random_simplex(rng, n));
    EXPECT_LE((r.plan.array() > 0.0).count(), m + n - 1);
  }
}

TEST(TransportSimplex, UniformEqualSizesGivePermutationPlan) {
  std::mt19937_64 rng(5);
  const int m = 12;
  const Matrix c = ddsc::cost_matrix(random_points(rng, m, 2), random_points(rng, m, 2));
  const auto r = ddsc::solve_exact_transport(c, ddsc::uniform_weights(m), ddsc::uniform_weights(m));
  for (int i = 0; i < m; ++i) {
    int nonzero = 0;
    for (int j = 0; j < m; ++j)
      if (r.plan(i, j) > 1e-12) {
        ++nonzero;
        EXPECT_NEAR(r.plan(i, j), 1.0 / m, 1e-14);
      }
    EXPECT_EQ(nonzero, 1);
  }
}

TEST(TransportSimplex, DegenerateTiesTerminate) {
  // All costs equal and integer-friendly marginals: heavily degenerate.
  const int m = 15;
  const Matrix c = Matrix::Ones(m, m);
  const auto r = ddsc::solve_exact_transport(c, ddsc::uniform_weights(m), ddsc::uniform_weights(m));
  EXPECT_NEAR(r.objective, 1.0, 1e-12);

  // Duplicated points on both sides.
  Matrix x(6, 1), y(6, 1);
  x << 0, 0, 0, 1, 1, 1;
  y << 1, 1, 0, 0, 1, 0;
  const auto r2 = ddsc::solve_exact_transport(ddsc::cost_matrix(x, y), ddsc::uniform_weights(6), ddsc::uniform_weights(6));
  EXPECT_NEAR(r2.objective, 0.0, 1e-14);
}

TEST(TransportSimplex, RejectsInfeasibleMarginals) {
  const Matrix c = Matrix::Ones(2, 2);
  Vector a(2), b(2);
  a << 0.5, 0.5;
  b << 0.5, 0.6;
  try {
    ddsc::solve_exact_transport(c, a, b);
    FAIL() << "expected SolverFailure";
  } catch (const ddsc::Error& e) {
    EXPECT_EQ(e.code(), ddsc::Errc::solver_failure);
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(TransportSimplex, CounterCountsSolves) {
  const auto before = ddsc::exact_solve_counter().load();
  const Matrix c = Matrix::Ones(1, 1);
  ddsc::solve_exact_transport(c, Vector::Ones(1), Vector::Ones(1));
  ddsc::solve_exact_transport(c, Vector::Ones(1), Vector::Ones(1));
  EXPECT_EQ(ddsc::exact_solve_counter().load() - before, 2u);
}

}  // namespace
