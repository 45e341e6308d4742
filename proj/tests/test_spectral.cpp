#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "sysid/dynamics.hpp"
#include "sysid/linalg.hpp"
#include "sysid/noise.hpp"
#include "sysid/spectral.hpp"
#include "test_util.hpp"

using namespace sysid;
using testutil::jordan_block;

namespace {

std::multiset<std::pair<long, int>> block_key(const std::vector<JordanBlock>& blocks) {
  std::multiset<std::pair<long, int>> out;
  for (const auto& b : blocks) out.insert({std::lround(b.eigenvalue.real() * 1e6), b.size});
  return out;
}

}  // namespace

TEST(EigExtremes, Examples) {
  EXPECT_EQ(spectral::eig_extremes(Matrix::Identity(2, 2)), std::make_pair(1.0, 1.0));
  auto [lo, hi] = spectral::eig_extremes(Eigen::Vector2d(0.5, 2.0).asDiagonal().toDenseMatrix());
  EXPECT_DOUBLE_EQ(lo, 0.5);
  EXPECT_DOUBLE_EQ(hi, 2.0);
  std::tie(lo, hi) = spectral::eig_extremes(jordan_block(2.0, 2));
  EXPECT_NEAR(lo, 2.0, 1e-7);
  EXPECT_NEAR(hi, 2.0, 1e-7);
}

TEST(JordanInfer, Diagonal) {
  const auto jf = spectral::jordan_infer(Eigen::Vector2d(0.3, 0.7).asDiagonal().toDenseMatrix());
  ASSERT_EQ(jf.blocks.size(), 2u);
  EXPECT_FALSE(jf.exact);
  EXPECT_NEAR(jf.blocks[0].eigenvalue.real(), 0.3, 1e-12);
  EXPECT_NEAR(jf.blocks[1].eigenvalue.real(), 0.7, 1e-12);
  EXPECT_EQ(jf.blocks[0].size, 1);
}

TEST(JordanInfer, CanonicalBlock) {
  const auto jf = spectral::jordan_infer(jordan_block(2.0, 2));
  ASSERT_EQ(jf.blocks.size(), 1u);
  EXPECT_EQ(jf.blocks[0].size, 2);
  EXPECT_NEAR(jf.blocks[0].eigenvalue.real(), 2.0, 1e-10);
}

TEST(JordanInfer, SimilarDiagonal) {
  std::mt19937_64 g(3);
  const Matrix Q = testutil::wellconditioned(2, g);
  const Matrix A = Q * Eigen::Vector2d(0.5, 0.9).asDiagonal() * Q.inverse();
  const auto jf = spectral::jordan_infer(A);
  ASSERT_EQ(jf.blocks.size(), 2u);
  EXPECT_NEAR(jf.blocks[0].eigenvalue.real(), 0.5, 1e-10);
  EXPECT_NEAR(jf.blocks[1].eigenvalue.real(), 0.9, 1e-10);
  EXPECT_LT((jf.reconstruct() - A.cast<Complex>()).norm(), 1e-8);
  EXPECT_GE(jf.condition, 1.0);
}

TEST(JordanInfer, ComplexPair) {
  Matrix A(2, 2);
  A << 0.5, -0.4, 0.4, 0.5;
  const auto jf = spectral::jordan_infer(A);
  ASSERT_EQ(jf.blocks.size(), 2u);
  EXPECT_NEAR(std::abs(jf.blocks[0].eigenvalue - Complex(0.5, 0.4)), 0.0, 1e-10);
  EXPECT_LT((jf.reconstruct() - A.cast<Complex>()).norm(), 1e-8);
}

// Constructed forms with kappa(P) <= 10 are recovered block for block, including
// one eigenvalue shared by several blocks.
TEST(JordanInfer, RoundTripProperty) {
  std::mt19937_64 g(11);
  const std::vector<std::vector<JordanBlock>> shapes = {
      {{0.5, 2}, {1.7, 1}},
      {{0.3, 1}, {0.8, 3}},
      {{2.0, 2}, {-1.5, 2}},
      {{0.2, 1}, {0.6, 1}, {3.0, 2}},
      {{1.25, 4}},
      {{1.6, 2}, {1.6, 1}},
      {{0.7, 2}, {0.7, 2}},
      {{2.2, 1}, {2.2, 1}, {0.4, 1}},
  };
  for (int rep = 0; rep < 10; ++rep) {
    for (const auto& blocks : shapes) {
      int p = 0;
      for (const auto& b : blocks) p += b.size;
      const Matrix P = testutil::wellconditioned(p, g);
      const auto spec = make_system_from_jordan(blocks, P, NoiseModel::gaussian(Matrix::Identity(p, p)),
                                                InitialState::zero(p));
      JordanForm jf;
      try {
        jf = spectral::jordan_infer(spec.A0);
      } catch (const NumericError& e) {
        ADD_FAILURE() << e.what() << " for shape led by " << blocks[0].eigenvalue.real() << " at rep " << rep
                      << ", kappa(P) = " << linalg::condition_number(P.cast<Complex>());
        continue;
      }
      EXPECT_EQ(block_key(jf.blocks), block_key(blocks));
      EXPECT_LT(jf.residual, 1e-6 * std::max(1.0, linalg::norm2(spec.A0)));
    }
  }
}

TEST(Regularity, PaperPair) {
  std::mt19937_64 g(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix P1 = testutil::wellconditioned(2, g), P2 = testutil::wellconditioned(2, g);
    const Matrix A1 = P1.inverse() * jordan_block(1.5, 2) * P1;
    const Matrix A2 = P2.inverse() * (1.5 * Matrix::Identity(2, 2)) * P2;
    EXPECT_TRUE(spectral::regularity_check(A1));
    EXPECT_FALSE(spectral::regularity_check(A2));
  }
}

TEST(Regularity, VacuousAndUnitRoot) {
  EXPECT_TRUE(spectral::regularity_check(Eigen::Vector2d(0.5, 0.9).asDiagonal().toDenseMatrix()));
  EXPECT_THROW(spectral::regularity_check(Eigen::Vector2d(0.5, 1.0).asDiagonal().toDenseMatrix()), RegimeError);
}

TEST(Regularity, SimilarityInvariant) {
  std::mt19937_64 g(8);
  for (int rep = 0; rep < 30; ++rep) {
    Matrix A = testutil::gaussian(4, 4, g);
    if (rep % 3 == 0) A = Eigen::Vector4d(2.0, 2.0, 0.5, 3.0).asDiagonal();
    const Matrix Q = testutil::wellconditioned(4, g);
    EXPECT_EQ(spectral::regularity_check(A), spectral::regularity_check(Q * A * Q.inverse()));
  }
}

TEST(Reachability, Examples) {
  auto r = spectral::reachability_gramian(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  EXPECT_TRUE(r.K.isApprox(Matrix::Identity(2, 2)));
  EXPECT_DOUBLE_EQ(r.lambda_min, 1.0);

  r = spectral::reachability_gramian(Eigen::Vector2d(2.0, 0.5).asDiagonal().toDenseMatrix(),
                                     Matrix::Identity(2, 2));
  EXPECT_NEAR(r.K(0, 0), 5.0, 1e-14);
  EXPECT_NEAR(r.K(1, 1), 1.25, 1e-14);
  EXPECT_NEAR(r.lambda_min, 1.25, 1e-12);

  Matrix N(2, 2);
  N << 0, 1, 0, 0;
  Matrix e1 = Matrix::Zero(2, 2);
  e1(0, 0) = 1.0;
  r = spectral::reachability_gramian(N, e1);
  // K = e1 e1' + N e1 e1' N' = diag(1, 0)
  EXPECT_NEAR(r.K(1, 1), 0.0, 1e-15);
  EXPECT_NEAR(r.lambda_min, 0.0, 1e-15);
  EXPECT_FALSE(r.reachable);
}

TEST(Reachability, AsymmetricC) {
  Matrix C(2, 2);
  C << 1, 0.5, 0, 1;
  EXPECT_THROW(spectral::reachability_gramian(Matrix::Zero(2, 2), C), InputError);
}

TEST(Reachability, PositiveDefiniteC) {
  std::mt19937_64 g(9);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix A = 2.0 * testutil::gaussian(3, 3, g);
    const Matrix B = testutil::gaussian(3, 3, g);
    const Matrix C = B * B.transpose() + 0.1 * Matrix::Identity(3, 3);
    EXPECT_GT(spectral::reachability_gramian(A, C).lambda_min, 0.0);
  }
}

TEST(Split, DiagonalInput) {
  const auto s = spectral::stable_explosive_split(Eigen::Vector2d(0.5, 2.0).asDiagonal().toDenseMatrix());
  EXPECT_EQ(s.p1, 1);
  EXPECT_EQ(s.p2, 1);
  EXPECT_NEAR(s.A1(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(s.A2(0, 0), 2.0, 1e-12);
}

TEST(Split, Degenerate) {
  const auto s = spectral::stable_explosive_split(Eigen::Vector2d(0.5, 0.2).asDiagonal().toDenseMatrix());
  EXPECT_EQ(s.p1, 2);
  EXPECT_EQ(s.p2, 0);
  EXPECT_TRUE(s.M.isIdentity());
  EXPECT_EQ(s.A2.size(), 0);
}

TEST(Split, UnitRoot) {
  EXPECT_THROW(spectral::stable_explosive_split(Eigen::Vector2d(0.5, 1.0).asDiagonal().toDenseMatrix()),
               RegimeError);
}

TEST(Split, RandomSimilarity) {
  std::mt19937_64 g(12);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix Q = testutil::wellconditioned(3, g);
    const Matrix A = Q * Eigen::Vector3d(0.9, 1.5, 2.0).asDiagonal() * Q.inverse();
    const auto s = spectral::stable_explosive_split(A);
    ASSERT_EQ(s.p1, 1);
    ASSERT_EQ(s.p2, 2);
    Eigen::EigenSolver<Matrix> es(s.A2);
    std::vector<double> ev = {es.eigenvalues()(0).real(), es.eigenvalues()(1).real()};
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], 1.5, 1e-9);
    EXPECT_NEAR(ev[1], 2.0, 1e-9);
    // M A M^{-1} = diag(A1, A2)
    Matrix D = Matrix::Zero(3, 3);
    D.topLeftCorner(1, 1) = s.A1;
    D.bottomRightCorner(2, 2) = s.A2;
    EXPECT_LT((s.M * A * s.M_inv - D).norm(), 1e-9 * A.norm());
    EXPECT_LT((s.M * s.M_inv - Matrix::Identity(3, 3)).norm(), 1e-10);
  }
}

// Reachability of (A0, C) carries over to both diagonal blocks.
TEST(Split, ReachabilityInherited) {
  std::mt19937_64 g(13);
  for (int rep = 0; rep < 30; ++rep) {
    const Matrix Q = testutil::wellconditioned(4, g);
    const Matrix A = Q * Eigen::Vector4d(0.3, -0.7, 1.4, -2.2).asDiagonal() * Q.inverse();
    const Matrix b = testutil::gaussian(4, 1, g);
    const Matrix C = b * b.transpose();  // rank one, but (A, C) generically reachable
    if (!spectral::reachability_gramian(A, C).reachable) continue;
    const auto s = spectral::stable_explosive_split(A);
    const Matrix Ct = s.M * C * s.M.transpose();
    EXPECT_TRUE(spectral::reachability_gramian(s.A1, Ct.topLeftCorner(s.p1, s.p1)).reachable);
    EXPECT_TRUE(spectral::reachability_gramian(s.A2, Ct.bottomRightCorner(s.p2, s.p2)).reachable);
  }
}

TEST(Companion, ScalarVar2) {
  const Matrix c = spectral::companion_embed({Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.2)});
  Matrix expected(2, 2);
  expected << 0.5, 0.2, 1, 0;
  EXPECT_EQ(c, expected);
}

TEST(Companion, OrderOne) {
  std::mt19937_64 g(1);
  const Matrix A = testutil::gaussian(3, 3, g);
  EXPECT_EQ(spectral::companion_embed({A}), A);
}

TEST(Companion, Errors) {
  EXPECT_THROW(spectral::companion_embed({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}), InputError);
  EXPECT_THROW(spectral::companion_embed({Matrix::Identity(2, 2), Matrix::Zero(2, 2)}), InputError);
}

TEST(Companion, EmbeddedSimulationMatchesRecursion) {
  std::mt19937_64 g(4);
  const Matrix A1 = 0.4 * testutil::gaussian(2, 2, g), A2 = 0.3 * testutil::gaussian(2, 2, g);
  const Matrix C = spectral::companion_embed({A1, A2});
  Matrix S = Matrix::Zero(4, 2);
  S.topRows(2).setIdentity();
  SystemSpec spec;
  spec.A0 = C;
  spec.noise = NoiseModel::shaped(NoiseKind::gaussian, S);
  spec.x0 = InitialState::zero(4);
  const auto traj = simulate(spec, 100, 77);
  Matrix y = Matrix::Zero(2, 101);
  for (int t = 1; t <= 100; ++t) {
    const Eigen::Vector2d prev = t >= 2 ? Eigen::Vector2d(y.col(t - 2)) : Eigen::Vector2d::Zero();
    y.col(t) = A1 * y.col(t - 1) + A2 * prev + traj.noises.col(t - 1).head(2);
    EXPECT_TRUE(traj.noises.col(t - 1).tail(2).isZero(0.0));
  }
  const double scale = y.cwiseAbs().maxCoeff();
  EXPECT_LT((traj.states.topRows(2) - y).cwiseAbs().maxCoeff(), 1e-12 * scale);
  EXPECT_LT((traj.states.bottomRows(2).rightCols(100) - y.leftCols(100)).cwiseAbs().maxCoeff(), 1e-12 * scale);
}

TEST(Mincoor, Examples) {
  CMatrix a(2, 2);
  a << 3, 0, 0, -2;
  EXPECT_DOUBLE_EQ(spectral::mincoor(a), 2.0);
  EXPECT_EQ(spectral::mincoor(CMatrix::Zero(3, 2)), kInf);
  CMatrix b(1, 2);
  b << 1e-14, 5;
  EXPECT_DOUBLE_EQ(spectral::mincoor(b, 1e-12), 5.0);
}

TEST(FactOne, GaussianMatricesAreRegular) {
  std::mt19937_64 g(2024);
  for (int rep = 0; rep < 300; ++rep) {
    const Matrix A = testutil::gaussian(5, 5, g);
    const auto ev = linalg::eigenvalues(A);
    for (Eigen::Index i = 0; i < ev.size(); ++i) EXPECT_GT(std::abs(std::abs(ev(i)) - 1.0), 1e-6);
    EXPECT_TRUE(spectral::regularity_check(A));
  }
}
