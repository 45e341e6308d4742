#include "sysid/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace sysid::linalg {

double norm2(const Eigen::Ref<const Matrix>& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

double norm2(const Eigen::Ref<const CMatrix>& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(a);
  return svd.singularValues()(0);
}

double norm_inf(const Eigen::Ref<const CMatrix>& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().rowwise().sum().maxCoeff();
}

double norm_2_to_inf(const Eigen::Ref<const CMatrix>& a) {
  if (a.size() == 0) return 0.0;
  return a.rowwise().norm().maxCoeff();
}

double norm_inf_to_2(const Eigen::Ref<const CMatrix>& a) {
  if (a.size() == 0) return 0.0;
  const auto q = a.cols();
  if (is_real(a) && q <= 16) {
    const Matrix re = a.real();
    double best = 0.0;
    Vector v(q);
    // v and -v give the same norm, so fix the sign of the last entry.
    const std::uint32_t count = 1u << (q - 1);
    for (std::uint32_t mask = 0; mask < count; ++mask) {
      for (Eigen::Index j = 0; j < q; ++j) v(j) = (mask >> j) & 1u ? -1.0 : 1.0;
      best = std::max(best, (re * v).norm());
    }
    return best;
  }
  const double row_bound = a.cwiseAbs().rowwise().sum().norm();
  const double spectral_bound = std::sqrt(static_cast<double>(q)) * norm2(a);
  return std::min(row_bound, spectral_bound);
}

double condition_number(const Eigen::Ref<const CMatrix>& a) {
  Eigen::JacobiSVD<CMatrix> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  return smin == 0.0 ? kInf : s(0) / smin;
}

CVector eigenvalues(const Eigen::Ref<const Matrix>& a) {
  if (a.rows() != a.cols()) throw InputError("eigenvalues: matrix must be square");
  if (!a.allFinite()) throw InputError("eigenvalues: matrix has non-finite entries");
  if (a.size() == 0) return CVector(0);
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalues: eigen-solver failed to converge");
  }
  return solver.eigenvalues();
}

double spectral_radius(const Eigen::Ref<const Matrix>& a) {
  if (a.size() == 0) return 0.0;
  return eigenvalues(a).cwiseAbs().maxCoeff();
}

std::pair<double, double> sym_eig_extremes(const Eigen::Ref<const Matrix>& a) {
  if (a.size() == 0) return {0.0, 0.0};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericError("sym_eig_extremes: eigen-solver failed to converge");
  }
  const auto& ev = solver.eigenvalues();
  return {ev(0), ev(ev.size() - 1)};
}

bool is_real(const Eigen::Ref<const CMatrix>& a, double tol) {
  return a.size() == 0 || a.imag().cwiseAbs().maxCoeff() <= tol;
}

Matrix symmetrize(const Eigen::Ref<const Matrix>& a) {
  return 0.5 * (a + a.transpose());
}

int numerical_rank(const Eigen::Ref<const CMatrix>& a, double abs_cutoff) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<CMatrix> svd(a);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > abs_cutoff) ++rank;
  }
  return rank;
}

}  // namespace sysid::linalg
