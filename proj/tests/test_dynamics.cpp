#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sysid/dynamics.hpp"
#include "sysid/linalg.hpp"
#include "test_util.hpp"

using namespace sysid;

namespace {

SystemSpec noiseless(const Matrix& A, const Vector& x0) {
  SystemSpec s;
  s.A0 = A;
  s.noise = NoiseModel::gaussian(Matrix::Zero(A.rows(), A.rows()));
  s.x0 = InitialState::fixed(x0);
  return s;
}

}  // namespace

TEST(Simulate, FixedPoint) {
  const Vector v = Eigen::Vector3d(1.0, -2.0, 0.5);
  const auto traj = simulate(noiseless(Matrix::Identity(3, 3), v), 20, 1);
  ASSERT_EQ(traj.length(), 20);
  for (int t = 0; t <= 20; ++t) EXPECT_EQ(traj.states.col(t), v);
}

TEST(Simulate, PureNoise) {
  SystemSpec s;
  s.A0 = Matrix::Zero(2, 2);
  s.noise = NoiseModel::gaussian(Matrix::Identity(2, 2));
  s.x0 = InitialState::zero(2);
  const auto traj = simulate(s, 50, 2);
  EXPECT_EQ(traj.states.rightCols(50), traj.noises);
}

TEST(Simulate, Geometric) {
  const auto traj = simulate(noiseless(Matrix::Constant(1, 1, 2.0), Vector::Ones(1)), 40, 3);
  for (int t = 0; t <= 40; ++t) EXPECT_EQ(traj.states(0, t), std::ldexp(1.0, t));
}

TEST(Simulate, OverflowGuard) {
  // 2^800 < 1e250 < 2^900, all exact
  const auto traj = simulate(noiseless(Matrix::Constant(1, 1, std::ldexp(1.0, 100)), Vector::Ones(1)), 40, 4);
  ASSERT_TRUE(traj.overflowed_at.has_value());
  EXPECT_EQ(*traj.overflowed_at, 9);
  EXPECT_EQ(traj.length(), 8);
  EXPECT_THROW(simulate(noiseless(Matrix::Constant(1, 1, 1e300), Vector::Ones(1)), 5, 4), NumericError);
}

TEST(Simulate, ReproducibleAndConsistent) {
  std::mt19937_64 g(5);
  SystemSpec s;
  s.A0 = 0.4 * testutil::gaussian(3, 3, g);
  s.noise = NoiseModel::weibull(0.8, 1.0, 3);
  s.x0 = InitialState::gaussian(3, 1.0);
  const auto a = simulate(s, 200, 42), b = simulate(s, 200, 42), c = simulate(s, 200, 43);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.noises, b.noises);
  EXPECT_NE(a.states, c.states);
  for (int t = 0; t < 200; ++t) {
    const Vector step = s.A0 * a.states.col(t);
    EXPECT_EQ(Vector(step + a.noises.col(t)), Vector(a.states.col(t + 1))) << "t=" << t;
  }
  const auto path = draw_noise_path(s, 200, 42);
  EXPECT_EQ(path.x0, Vector(a.states.col(0)));
  EXPECT_EQ(path.noises, a.noises);
}

TEST(Simulate, ExplosiveGrowthRate) {
  std::mt19937_64 g(6);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix Q = testutil::wellconditioned(3, g);
    const Matrix A = Q * Eigen::Vector3d(1.3, 1.8, -2.5).asDiagonal() * Q.inverse();
    const auto traj = simulate(noiseless(A, Eigen::Vector3d(1, 1, 1).normalized()), 120, 1);
    const double ratio = traj.states.col(120).norm() / traj.states.col(119).norm();
    EXPECT_GE(ratio, 1.3 - 1e-6);
    EXPECT_NEAR(ratio, 2.5, 1e-3);
  }
}

TEST(FromJordan, Examples) {
  const auto noise = NoiseModel::gaussian(Matrix::Identity(1, 1));
  auto s = make_system_from_jordan({{0.5, 1}}, Matrix::Ones(1, 1), noise, InitialState::zero(1));
  EXPECT_EQ(s.A0, Matrix::Constant(1, 1, 0.5));
  ASSERT_TRUE(s.jordan.has_value());
  EXPECT_TRUE(s.jordan->exact);

  s = make_system_from_jordan({{2.0, 2}}, Matrix::Identity(2, 2), NoiseModel::gaussian(Matrix::Identity(2, 2)),
                              InitialState::zero(2));
  EXPECT_EQ(s.A0, testutil::jordan_block(2.0, 2));

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    s = make_system_from_jordan({{0.9, 1}, {1.5, 1}}, seed, NoiseModel::gaussian(Matrix::Identity(2, 2)),
                                InitialState::zero(2));
    EXPECT_LT(s.jordan->condition, 100.0);
    auto ev = linalg::eigenvalues(s.A0);
    std::vector<double> re = {ev(0).real(), ev(1).real()};
    std::sort(re.begin(), re.end());
    EXPECT_NEAR(re[0], 0.9, 1e-10);
    EXPECT_NEAR(re[1], 1.5, 1e-10);
    EXPECT_LT(std::abs(ev(0).imag()) + std::abs(ev(1).imag()), 1e-10);
  }
}

TEST(FromJordan, ComplexPairs) {
  const Complex l(0.3, 0.8);
  const auto noise = NoiseModel::gaussian(Matrix::Identity(4, 4));
  const auto s = make_system_from_jordan({{l, 2}, {std::conj(l), 2}}, 7, noise, InitialState::zero(4));
  EXPECT_LT((s.jordan->reconstruct() - s.A0.cast<Complex>()).norm(), 1e-10 * s.A0.norm());
  EXPECT_THROW(make_system_from_jordan({{l, 1}, {0.5, 1}}, 7, NoiseModel::gaussian(Matrix::Identity(2, 2)),
                                       InitialState::zero(2)),
               InputError);
}

TEST(FromJordan, ReconstructionProperty) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto s = make_system_from_jordan({{0.2, 2}, {-1.4, 1}, {3.0, 1}}, seed,
                                           NoiseModel::gaussian(Matrix::Identity(4, 4)), InitialState::zero(4));
    EXPECT_LT(linalg::norm2(CMatrix(s.jordan->reconstruct() - s.A0.cast<Complex>())),
              1e-10 * linalg::norm2(s.A0));
  }
}

TEST(RandomWellconditioned, Bounds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix P = random_wellconditioned(4, seed);
    const auto sv = Eigen::JacobiSVD<Matrix>(P).singularValues();
    EXPECT_LE(sv(0), 10.0 + 1e-9);
    EXPECT_GE(sv(3), 1.0 - 1e-9);
  }
  EXPECT_NEAR(random_unit_vector(5, 3).norm(), 1.0, 1e-15);
}

TEST(ClosedLoop, Examples) {
  std::mt19937_64 g(9);
  const Matrix Ax = testutil::gaussian(3, 3, g), Au = testutil::gaussian(3, 2, g);
  EXPECT_EQ(closed_loop({Ax, Au, Matrix::Zero(2, 3)}), Ax);
  EXPECT_EQ(closed_loop({Ax, Matrix::Zero(3, 2), testutil::gaussian(2, 3, g)}), Ax);
  EXPECT_EQ(closed_loop({Matrix::Zero(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2)}),
            Matrix::Identity(2, 2));
  EXPECT_THROW(closed_loop({Ax, Au, Matrix::Zero(3, 3)}), InputError);
}

TEST(Lqr, SatisfiesRiccati) {
  std::mt19937_64 g(10);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix A = 1.5 * testutil::gaussian(3, 3, g), B = testutil::gaussian(3, 2, g);
    const Matrix X = solve_dare(A, B, Matrix::Identity(3, 3), Matrix::Identity(2, 2));
    const Matrix S = Matrix::Identity(2, 2) + B.transpose() * X * B;
    const Matrix rhs = A.transpose() * X * A - A.transpose() * X * B * S.ldlt().solve(B.transpose() * X * A) +
                       Matrix::Identity(3, 3);
    EXPECT_LT((X - rhs).norm(), 1e-8 * X.norm());
    const Matrix L = lqr_feedback(A, B);
    EXPECT_LT(linalg::spectral_radius(A + B * L), 1.0);
  }
}

TEST(Sensitivity, ZeroMagnitude) {
  std::mt19937_64 g(11);
  ControlSystem cs;
  cs.Ax = 1.2 * testutil::gaussian(3, 3, g);
  cs.Au = testutil::gaussian(3, 2, g);
  cs.L = lqr_feedback(cs.Ax, cs.Au);
  for (auto mode : {PerturbMode::global_awgn, PerturbMode::single_entry}) {
    const auto curve = sensitivity_scan(cs, mode, {0.0}, 5, 1);
    ASSERT_FALSE(curve.points.empty());
    for (const auto& pt : curve.points) EXPECT_NEAR(pt.lambda_max, curve.nominal_lambda_max, 1e-12);
    EXPECT_FALSE(curve.crossing().has_value());
  }
}

TEST(Sensitivity, DeterministicAcrossThreads) {
  std::mt19937_64 g(12);
  ControlSystem cs;
  cs.Ax = 1.5 * testutil::gaussian(3, 3, g);
  cs.Au = 0.3 * testutil::gaussian(3, 2, g);
  cs.L = lqr_feedback(cs.Ax, cs.Au);
  const auto a = sensitivity_scan(cs, PerturbMode::global_awgn, {0.01, 0.05}, 20, 3, 1);
  const auto b = sensitivity_scan(cs, PerturbMode::global_awgn, {0.01, 0.05}, 20, 3, 4);
  ASSERT_EQ(a.points.size(), 40u);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].index, b.points[i].index);
    EXPECT_TRUE(a.points[i].lambda_max == b.points[i].lambda_max ||
                (std::isnan(a.points[i].lambda_max) && std::isnan(b.points[i].lambda_max)));
  }
  const auto single = sensitivity_scan(cs, PerturbMode::single_entry, {0.01}, 20, 3);
  EXPECT_EQ(single.points.size(), 15u);
}

TEST(PerturbMode, RoundTrip) {
  for (auto m : {PerturbMode::global_awgn, PerturbMode::single_entry})
    EXPECT_EQ(perturb_mode_from_string(to_string(m)), m);
  EXPECT_THROW(perturb_mode_from_string("bogus"), InputError);
}
