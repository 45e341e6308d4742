#pragma once

// Thin wrappers over LAPACK's Schur reordering and triangular Sylvester
// solvers. Internal to the library.

#include <vector>

#include "sysid/common.hpp"

namespace sysid::detail {

struct RealSchur {
  Matrix T;  // quasi upper triangular
  Matrix U;  // orthogonal, A = U T U'
};

struct ComplexSchur {
  CMatrix T;  // upper triangular
  CMatrix U;  // unitary, A = U T U^*
};

RealSchur real_schur(const Eigen::Ref<const Matrix>& a);
ComplexSchur complex_schur(const Eigen::Ref<const Matrix>& a);

/// Eigenvalue of each diagonal position of a real quasi-triangular T; the two
/// positions of a 2x2 block share the conjugate pair.
std::vector<Complex> quasi_triangular_eigenvalues(const Matrix& T);

/// Moves the selected eigenvalues to the leading block in place. For real
/// Schur forms both positions of a 2x2 block must carry the same flag.
/// Returns the size of the leading block.
int reorder(RealSchur& schur, const std::vector<int>& select);
int reorder(ComplexSchur& schur, const std::vector<int>& select);

/// Solves T11 X - X T22 = rhs for quasi-triangular T11, T22 with disjoint
/// spectra.
Matrix solve_sylvester(const Matrix& T11, const Matrix& T22, const Matrix& rhs);

}  // namespace sysid::detail
