#pragma once

#include <optional>

#include "sysid/common.hpp"
#include "sysid/dynamics.hpp"

namespace sysid {

struct EstimateReport {
  Matrix A_hat;
  Matrix gram;
  double gram_min_eig = 0.0;
  std::optional<double> error;
  int n = 0;
};

/// V_n is numerically singular: lambda_min(V_n) < 1e-12 lambda_max(V_n).
class SingularGramError : public NumericError {
 public:
  SingularGramError(const std::string& what, double lambda_min)
      : NumericError(what), lambda_min_(lambda_min) {}
  double lambda_min() const { return lambda_min_; }

 private:
  double lambda_min_;
};

inline constexpr double kSingularGramRatio = 1e-12;

/// V_n = sum_{t<n} x(t) x(t)'.
Matrix gram(const Trajectory& traj, int n);

/// Least squares from regressors X (column t = x(t)) and responses Y
/// (column t = x(t+1)).
EstimateReport ols_pairs(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Matrix>& Y,
                         double ridge = 0.0);

/// A_hat from the first n transitions. Fills `error` when A0 is given.
EstimateReport ols(const Trajectory& traj, int n, double ridge = 0.0,
                   const Matrix* A0 = nullptr);

/// ||A_hat - A0||_2.
double error_norm(const Eigen::Ref<const Matrix>& A_hat, const Eigen::Ref<const Matrix>& A0);

/// u_t = A^{-n} x(t) for t = 0..n, from x(0) and w(1..n), accumulated through
/// z(t) = A^{-t} x(t) so that no growing state is ever formed. Column t is u_t.
Matrix normalized_states(const Eigen::Ref<const Matrix>& A, const Eigen::Ref<const Vector>& x0,
                         const Eigen::Ref<const Matrix>& noises, int n);

/// A^{-n} V_{n+1} A'^{-n} and its extreme eigenvalues.
Matrix normalized_gram_matrix(const Trajectory& traj, const Eigen::Ref<const Matrix>& A0, int n);
std::pair<double, double> normalized_gram_explosive(const Trajectory& traj,
                                                     const Eigen::Ref<const Matrix>& A0, int n);

/// OLS error for long horizons of explosive or mixed systems without forming
/// x(t). Works in split coordinates M x(t): the stable part is scaled by
/// n^{-1/2}, the explosive part by A2^{-(n-1)}. `gram` and `gram_min_eig`
/// refer to that normalized Gram matrix. Equals ols() in exact arithmetic.
EstimateReport ols_normalized(const SystemSpec& spec, const SpectralSplit& split,
                              const NoisePath& path, int n);

}  // namespace sysid
