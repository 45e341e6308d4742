#include "sysid/estimator.hpp"

#include <cmath>
#include <sstream>

#include "sysid/linalg.hpp"

namespace sysid {
namespace {

// Below this every further term of a decaying matrix power is negligible.
constexpr double kNegligible = 1e-300;

void check_singular(const Matrix& G, const char* what) {
  const auto [lo, hi] = linalg::sym_eig_extremes(G);
  if (!(hi > 0.0) || lo < kSingularGramRatio * hi) {
    std::ostringstream os;
    os << what << ": singular Gram matrix (lambda_min = " << lo << ")";
    throw SingularGramError(os.str(), lo);
  }
}

Matrix inverse_of(const Eigen::Ref<const Matrix>& a, const char* who) {
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericError(std::string(who) + ": A0 is singular");
  return lu.inverse();
}

void require_explosive(const Eigen::Ref<const Matrix>& a, const char* who) {
  const Vector mags = linalg::eigenvalues(a).cwiseAbs();
  if (mags.size() && mags.minCoeff() <= 1.0) {
    if (mags.minCoeff() == 0.0) throw NumericError(std::string(who) + ": A0 is singular");
    throw RegimeError(std::string(who) + ": A0 must be explosive (all |lambda| > 1)");
  }
}

}  // namespace

Matrix gram(const Trajectory& traj, int n) {
  if (n < 0 || n > traj.length() + 1) throw InputError("gram: n exceeds the trajectory length");
  const auto X = traj.states.leftCols(n);
  Matrix V = Matrix::Zero(traj.states.rows(), traj.states.rows());
  V.selfadjointView<Eigen::Lower>().rankUpdate(X);
  return V.selfadjointView<Eigen::Lower>();
}

EstimateReport ols_pairs(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Matrix>& Y,
                         double ridge) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols()) throw InputError("ols: X and Y must have equal shapes");
  if (ridge < 0.0) throw InputError("ols: ridge must be nonnegative");
  const auto p = X.rows();
  EstimateReport r;
  r.n = static_cast<int>(X.cols());
  r.gram = Matrix::Zero(p, p);
  r.gram.selfadjointView<Eigen::Lower>().rankUpdate(X);
  r.gram = r.gram.selfadjointView<Eigen::Lower>();
  r.gram_min_eig = linalg::sym_eig_extremes(r.gram).first;
  Matrix V = r.gram;
  if (ridge > 0.0) {
    V.diagonal().array() += ridge;
  } else {
    check_singular(V, "ols");
  }
  const Matrix cross = Y * X.transpose();
  // A_hat V = cross, with V symmetric.
  r.A_hat = V.ldlt().solve(cross.transpose()).transpose();
  return r;
}

EstimateReport ols(const Trajectory& traj, int n, double ridge, const Matrix* A0) {
  if (n < 1 || n > traj.length()) throw InputError("ols: n must be in [1, trajectory length]");
  EstimateReport r = ols_pairs(traj.states.leftCols(n), traj.states.middleCols(1, n), ridge);
  if (A0) r.error = error_norm(r.A_hat, *A0);
  return r;
}

double error_norm(const Eigen::Ref<const Matrix>& A_hat, const Eigen::Ref<const Matrix>& A0) {
  if (A_hat.rows() != A0.rows() || A_hat.cols() != A0.cols()) {
    throw InputError("error_norm: dimension mismatch");
  }
  return linalg::norm2(Matrix(A_hat - A0));
}

Matrix normalized_states(const Eigen::Ref<const Matrix>& A, const Eigen::Ref<const Vector>& x0,
                         const Eigen::Ref<const Matrix>& noises, int n) {
  const auto p = A.rows();
  if (n < 0 || noises.cols() < n) throw InputError("normalized_states: not enough noise columns");
  const Matrix Ainv = inverse_of(A, "normalized_states");
  Matrix z(p, n + 1);
  z.col(0) = x0;
  Matrix R = Matrix::Identity(p, p);
  bool active = true;
  for (int t = 1; t <= n; ++t) {
    z.col(t) = z.col(t - 1);
    if (!active) continue;
    R = R * Ainv;
    if (R.cwiseAbs().maxCoeff() < kNegligible) {
      active = false;
      continue;
    }
    z.col(t).noalias() += R * noises.col(t - 1);
  }
  Matrix u = Matrix::Zero(p, n + 1);
  Matrix B = Matrix::Identity(p, p);
  for (int t = n; t >= 0; --t) {
    u.col(t).noalias() = B * z.col(t);
    B = B * Ainv;
    if (B.cwiseAbs().maxCoeff() < kNegligible) break;
  }
  return u;
}

Matrix normalized_gram_matrix(const Trajectory& traj, const Eigen::Ref<const Matrix>& A0, int n) {
  if (n < 0 || n > traj.length()) throw InputError("normalized_gram: n exceeds the trajectory length");
  require_explosive(A0, "normalized_gram");
  const Matrix u = normalized_states(A0, traj.states.col(0), traj.noises, n);
  Matrix G = Matrix::Zero(A0.rows(), A0.rows());
  G.selfadjointView<Eigen::Lower>().rankUpdate(u);
  return G.selfadjointView<Eigen::Lower>();
}

std::pair<double, double> normalized_gram_explosive(const Trajectory& traj,
                                                     const Eigen::Ref<const Matrix>& A0, int n) {
  return linalg::sym_eig_extremes(normalized_gram_matrix(traj, A0, n));
}

EstimateReport ols_normalized(const SystemSpec& spec, const SpectralSplit& split,
                              const NoisePath& path, int n) {
  const int p = spec.dimension();
  const int p1 = split.p1, p2 = split.p2;
  if (n < 1 || path.noises.cols() < n) throw InputError("ols_normalized: not enough noise columns");
  if (p1 + p2 != p) throw InputError("ols_normalized: split does not match the system");

  const Matrix wt = split.M * path.noises.leftCols(n);
  const Vector x0t = split.M * path.x0;
  Matrix y(p, n);  // y(t), t = 0..n-1

  if (p1 > 0) {
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    Vector x1 = x0t.head(p1);
    for (int t = 0; t < n; ++t) {
      y.col(t).head(p1) = s * x1;
      if (t + 1 < n) x1 = split.A1 * x1 + wt.col(t).head(p1);
    }
  }
  Matrix D2;  // A2^{-(n-1)}
  if (p2 > 0) {
    const Matrix A2inv = inverse_of(split.A2, "ols_normalized");
    // z(t) = x2(0) + sum_{i<=t} A2^{-i} w2(i), t = 0..n-1.
    Matrix z(p2, n);
    z.col(0) = x0t.tail(p2);
    Matrix R = Matrix::Identity(p2, p2);
    bool active = true;
    for (int t = 1; t < n; ++t) {
      z.col(t) = z.col(t - 1);
      if (!active) continue;
      R = R * A2inv;
      if (R.cwiseAbs().maxCoeff() < kNegligible) {
        active = false;
        continue;
      }
      z.col(t).noalias() += R * wt.col(t - 1).tail(p2);
    }
    y.bottomRows(p2).setZero();
    Matrix B = Matrix::Identity(p2, p2);
    bool underflow = false;
    for (int t = n - 1; t >= 0; --t) {
      y.col(t).tail(p2).noalias() = B * z.col(t);
      if (t > 0) B = B * A2inv;
      if (B.cwiseAbs().maxCoeff() < kNegligible) {
        underflow = true;
        break;
      }
    }
    D2 = underflow ? Matrix::Zero(p2, p2) : B;
  }

  EstimateReport r;
  r.n = n;
  r.gram = Matrix::Zero(p, p);
  r.gram.selfadjointView<Eigen::Lower>().rankUpdate(y);
  r.gram = r.gram.selfadjointView<Eigen::Lower>();
  r.gram_min_eig = linalg::sym_eig_extremes(r.gram).first;
  check_singular(r.gram, "ols_normalized");

  // noise-regressor cross term sum_t w~(t+1) y(t)'
  const Matrix cross = wt * y.transpose();
  Matrix D = Matrix::Zero(p, p);
  if (p1 > 0) D.topLeftCorner(p1, p1).diagonal().setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  if (p2 > 0) D.bottomRightCorner(p2, p2) = D2;
  const Matrix E = r.gram.ldlt().solve(cross.transpose()).transpose() * D;
  const Matrix delta = split.M_inv * E * split.M;
  r.A_hat = spec.A0 + delta;
  r.error = linalg::norm2(delta);
  return r;
}

}  // namespace sysid
