#pragma once

#include "sysid/common.hpp"

namespace sysid::linalg {

/// Largest singular value.
double norm2(const Eigen::Ref<const Matrix>& a);
double norm2(const Eigen::Ref<const CMatrix>& a);

/// Induced infinity norm (maximum absolute row sum).
double norm_inf(const Eigen::Ref<const CMatrix>& a);

/// Induced 2 -> infinity norm: the largest Euclidean row norm.
double norm_2_to_inf(const Eigen::Ref<const CMatrix>& a);

/// Induced infinity -> 2 norm, sup ||A v||_2 / ||v||_inf.
///
/// Exact for real matrices with at most 16 columns (the supremum is attained
/// on a vertex of the cube, so all sign vectors are enumerated). Otherwise an
/// upper bound: min(||row l1 norms||_2, sqrt(q) ||A||_2). Every constant that
/// consumes this norm is itself an upper bound, so overestimating is safe.
double norm_inf_to_2(const Eigen::Ref<const CMatrix>& a);

/// 2-norm condition number (sigma_max / sigma_min); +inf when singular.
double condition_number(const Eigen::Ref<const CMatrix>& a);

/// Eigenvalues of a general real square matrix.
CVector eigenvalues(const Eigen::Ref<const Matrix>& a);

double spectral_radius(const Eigen::Ref<const Matrix>& a);

/// Extreme eigenvalues of a symmetric matrix (smallest, largest).
std::pair<double, double> sym_eig_extremes(const Eigen::Ref<const Matrix>& a);

bool is_real(const Eigen::Ref<const CMatrix>& a, double tol = 0.0);

Matrix symmetrize(const Eigen::Ref<const Matrix>& a);

/// Number of singular values strictly above abs_cutoff.
int numerical_rank(const Eigen::Ref<const CMatrix>& a, double abs_cutoff);

}  // namespace sysid::linalg
