#include "schur.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

namespace sysid::detail {

RealSchur real_schur(const Eigen::Ref<const Matrix>& a) {
  Eigen::RealSchur<Matrix> solver(a);
  if (solver.info() != Eigen::Success) throw NumericError("real Schur decomposition failed");
  return {solver.matrixT(), solver.matrixU()};
}

ComplexSchur complex_schur(const Eigen::Ref<const Matrix>& a) {
  Eigen::ComplexSchur<Matrix> solver(a);
  if (solver.info() != Eigen::Success) throw NumericError("complex Schur decomposition failed");
  return {solver.matrixT(), solver.matrixU()};
}

std::vector<Complex> quasi_triangular_eigenvalues(const Matrix& T) {
  const auto n = T.rows();
  std::vector<Complex> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n;) {
    if (i + 1 < n && T(i + 1, i) != 0.0) {
      const double a = T(i, i), b = T(i, i + 1), c = T(i + 1, i), d = T(i + 1, i + 1);
      const double mean = 0.5 * (a + d);
      const double disc = 0.25 * (a - d) * (a - d) + b * c;
      const Complex root = std::sqrt(Complex(disc, 0.0));
      ev[i] = mean + root;
      ev[i + 1] = mean - root;
      i += 2;
    } else {
      ev[i] = T(i, i);
      i += 1;
    }
  }
  return ev;
}

int reorder(RealSchur& schur, const std::vector<int>& select) {
  const auto n = static_cast<lapack_int>(schur.T.rows());
  if (n == 0) return 0;
  std::vector<lapack_logical> sel(select.begin(), select.end());
  Vector wr(n), wi(n);
  lapack_int m = 0;
  double s = 0.0, sep = 0.0;
  // Straight to the Fortran routine: the LAPACKE wrapper mishandles the
  // integer workspace for job = 'N' in some releases.
  const char job = 'N', compq = 'V';
  lapack_int lwork = std::max<lapack_int>(1, n), liwork = 1, info = 0;
  std::vector<double> work(static_cast<std::size_t>(lwork));
  std::vector<lapack_int> iwork(static_cast<std::size_t>(liwork));
  LAPACK_dtrsen(&job, &compq, sel.data(), &n, schur.T.data(), &n, schur.U.data(), &n, wr.data(),
                wi.data(), &m, &s, &sep, work.data(), &lwork, iwork.data(), &liwork, &info);
  if (info != 0) {
    throw NumericError("real Schur reordering failed (dtrsen info=" + std::to_string(info) + ")");
  }
  return static_cast<int>(m);
}

int reorder(ComplexSchur& schur, const std::vector<int>& select) {
  const auto n = static_cast<lapack_int>(schur.T.rows());
  if (n == 0) return 0;
  std::vector<lapack_logical> sel(select.begin(), select.end());
  CVector w(n);
  lapack_int m = 0;
  double s = 0.0, sep = 0.0;
  const lapack_int info =
      LAPACKE_ztrsen(LAPACK_COL_MAJOR, 'N', 'V', sel.data(), n, schur.T.data(), n,
                     schur.U.data(), n, w.data(), &m, &s, &sep);
  if (info != 0) {
    throw NumericError("complex Schur reordering failed (ztrsen info=" + std::to_string(info) + ")");
  }
  return static_cast<int>(m);
}

Matrix solve_sylvester(const Matrix& T11, const Matrix& T22, const Matrix& rhs) {
  const auto m = static_cast<lapack_int>(T11.rows());
  const auto n = static_cast<lapack_int>(T22.rows());
  Matrix x = rhs;
  if (m == 0 || n == 0) return x;
  double scale = 1.0;
  const lapack_int info = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'N', 'N', -1, m, n, T11.data(), m,
                                         T22.data(), n, x.data(), m, &scale);
  if (info < 0) throw NumericError("Sylvester solve failed (dtrsyl info=" + std::to_string(info) + ")");
  // info == 1 flags perturbed eigenvalues; the split gap makes that benign.
  return x / scale;
}

}  // namespace sysid::detail
