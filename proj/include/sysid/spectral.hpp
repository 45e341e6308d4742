#pragma once

#include <vector>

#include "sysid/common.hpp"

namespace sysid {

struct JordanBlock {
  Complex eigenvalue;
  int size = 1;
};

/// Jordan decomposition A = P^{-1} Lambda P, with Lambda the block-diagonal
/// assembly of `blocks` (ones on the superdiagonal inside each block).
struct JordanForm {
  std::vector<JordanBlock> blocks;
  CMatrix P;
  CMatrix P_inv;
  /// True when built from a known specification, false when inferred.
  bool exact = false;
  /// 2-norm condition number of P.
  double condition = 1.0;
  /// ||P^{-1} Lambda P - A||_2 against the matrix it was built for or from.
  double residual = 0.0;

  int dimension() const;
  /// Largest block size (largest algebraic multiplicity per block).
  int max_block_size() const;
  CMatrix lambda() const;
  CMatrix reconstruct() const;
  double min_abs_eigenvalue() const;
  double max_abs_eigenvalue() const;
};

/// Block-diagonal split M A M^{-1} = diag(A1, A2) with A1 stable, A2 explosive.
struct SpectralSplit {
  Matrix M;
  Matrix M_inv;
  Matrix A1;
  Matrix A2;
  int p1 = 0;
  int p2 = 0;
};

struct ReachabilityResult {
  Matrix K;
  double lambda_min = 0.0;
  bool reachable = false;
};

namespace spectral {

inline constexpr double kDefaultUnitGap = 1e-6;
inline constexpr double kRankCutoff = 1e-10;
inline constexpr double kMincoorZeroTol = 1e-12;

/// Smallest and largest eigenvalue magnitudes.
std::pair<double, double> eig_extremes(const Eigen::Ref<const Matrix>& a);

/// Numerical Jordan form. Eigenvalues closer than cluster_tol are merged;
/// block sizes come from the rank staircase of the restricted nilpotent part.
/// With cluster_tol <= 0 the merge radius adapts to the cluster size m as
/// max(1e-8, 10 u^{1/m}) * max(||A||_2, 1), the scale at which rounding splits
/// a defective eigenvalue.
///
/// Throws NumericError("ill-conditioned Jordan structure") when a rank
/// decision is ambiguous (singular values on both sides of the cutoff within a
/// factor of 10) or the reconstruction residual is too large.
JordanForm jordan_infer(const Eigen::Ref<const Matrix>& a, double cluster_tol = 0.0);

/// True iff every eigenvalue outside the unit circle has geometric
/// multiplicity one. Throws RegimeError on eigenvalues within unit_gap of the
/// unit circle.
bool regularity_check(const Eigen::Ref<const Matrix>& a, double unit_gap = kDefaultUnitGap);

/// K(C) = sum_{i<p} A^i C A'^i and its smallest eigenvalue.
ReachabilityResult reachability_gramian(const Eigen::Ref<const Matrix>& a,
                                        const Eigen::Ref<const Matrix>& c);

/// Real block diagonalization via ordered real Schur form and a Sylvester
/// solve. Degenerate splits (all stable or all explosive) return M = I.
SpectralSplit stable_explosive_split(const Eigen::Ref<const Matrix>& a,
                                     double unit_gap = kDefaultUnitGap);

/// VAR(k) companion [[A1 ... Ak], [I, 0]].
Matrix companion_embed(const std::vector<Matrix>& coeffs);

/// Smallest magnitude among entries above rel_tol * (largest magnitude).
/// Returns +inf for an all-zero matrix.
double mincoor(const Eigen::Ref<const CMatrix>& m, double rel_tol = kMincoorZeroTol);

/// Jordan forms of the two diagonal blocks of a split, derived from the exact
/// form of the full matrix. Requires exact.
std::pair<JordanForm, JordanForm> split_jordan(const JordanForm& jf, const SpectralSplit& split);

}  // namespace spectral
}  // namespace sysid
