#include "sysid/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "schur.hpp"
#include "sysid/linalg.hpp"

namespace sysid {

int JordanForm::dimension() const {
  int p = 0;
  for (const auto& b : blocks) p += b.size;
  return p;
}

int JordanForm::max_block_size() const {
  int m = 0;
  for (const auto& b : blocks) m = std::max(m, b.size);
  return m;
}

CMatrix JordanForm::lambda() const {
  const int p = dimension();
  CMatrix L = CMatrix::Zero(p, p);
  int offset = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.size; ++i) {
      L(offset + i, offset + i) = b.eigenvalue;
      if (i + 1 < b.size) L(offset + i, offset + i + 1) = 1.0;
    }
    offset += b.size;
  }
  return L;
}

CMatrix JordanForm::reconstruct() const { return P_inv * lambda() * P; }

double JordanForm::min_abs_eigenvalue() const {
  double m = kInf;
  for (const auto& b : blocks) m = std::min(m, std::abs(b.eigenvalue));
  return m;
}

double JordanForm::max_abs_eigenvalue() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, std::abs(b.eigenvalue));
  return m;
}

namespace spectral {
namespace {

void require_square(const Eigen::Ref<const Matrix>& a, const char* who) {
  if (a.rows() != a.cols()) throw InputError(std::string(who) + ": matrix must be square");
  if (!a.allFinite()) throw InputError(std::string(who) + ": matrix has non-finite entries");
}

void check_unit_gap(const CVector& ev, double unit_gap, const char* what) {
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double mag = std::abs(ev(i));
    if (std::abs(mag - 1.0) <= unit_gap) {
      std::ostringstream os;
      os << what << ": eigenvalue of magnitude " << mag << " within " << unit_gap
         << " of the unit circle";
      throw RegimeError(os.str());
    }
  }
}

// Orthonormal basis (columns) of the null space of x, by singular-value cutoff.
CMatrix null_space(const CMatrix& x, double cutoff) {
  const auto n = x.cols();
  if (n == 0) return CMatrix(0, 0);
  Eigen::JacobiSVD<CMatrix> svd(x, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > cutoff) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

// Rank by cutoff, refusing to decide when the gap across the cutoff is thin.
int decisive_rank(const CMatrix& x, double cutoff) {
  if (x.size() == 0) return 0;
  Eigen::JacobiSVD<CMatrix> svd(x);
  const auto& s = svd.singularValues();
  int rank = 0;
  while (rank < s.size() && s(rank) > cutoff) ++rank;
  if (rank > 0 && rank < s.size()) {
    const double hi = s(rank - 1);
    const double lo = s(rank);
    if (lo > 0.0 && hi / lo < 10.0) throw NumericError("ill-conditioned Jordan structure");
  }
  return rank;
}

// Relative size below which entries of a cluster's nilpotent part are
// rounding: a cluster of m eigenvalues is only resolved to about u^{1/m}.
double nilpotent_rtol(Eigen::Index m) {
  constexpr double u = std::numeric_limits<double>::epsilon();
  return std::max(spectral::kRankCutoff, 10.0 * std::pow(u, 1.0 / static_cast<double>(m)));
}

struct Cluster {
  std::vector<Eigen::Index> positions;
  Complex center;
};

// Single-linkage clustering. A defective eigenvalue of multiplicity m is
// split by about u^{1/m} in floating point, so with `adaptive` a group of size
// m is linked at radius max(tol, 10 u^{1/m} scale): the whole set is linked at
// the radius of its size, and each component is refined at its own.
std::vector<Cluster> cluster_eigenvalues(const CVector& ev, double tol, double scale, bool adaptive) {
  constexpr double u = std::numeric_limits<double>::epsilon();
  auto radius = [&](std::size_t m) {
    return adaptive ? std::max(tol, 10.0 * std::pow(u, 1.0 / static_cast<double>(m)) * scale) : tol;
  };
  auto link = [&](const std::vector<Eigen::Index>& set, double r) {
    std::vector<std::vector<Eigen::Index>> comps;
    std::vector<bool> seen(set.size(), false);
    for (std::size_t s0 = 0; s0 < set.size(); ++s0) {
      if (seen[s0]) continue;
      std::vector<std::size_t> stack = {s0};
      seen[s0] = true;
      std::vector<Eigen::Index> comp;
      while (!stack.empty()) {
        const std::size_t k = stack.back();
        stack.pop_back();
        comp.push_back(set[k]);
        for (std::size_t j = 0; j < set.size(); ++j) {
          if (!seen[j] && std::abs(ev(set[k]) - ev(set[j])) <= r) {
            seen[j] = true;
            stack.push_back(j);
          }
        }
      }
      comps.push_back(std::move(comp));
    }
    return comps;
  };
  std::vector<Cluster> clusters;
  std::vector<std::vector<Eigen::Index>> work(1);
  for (Eigen::Index i = 0; i < ev.size(); ++i) work[0].push_back(i);
  while (!work.empty()) {
    auto set = std::move(work.back());
    work.pop_back();
    auto comps = link(set, radius(set.size()));
    if (comps.size() == 1 || !adaptive) {
      for (auto& comp : comps) {
        Complex sum = 0.0;
        for (auto i : comp) sum += ev(i);
        clusters.push_back({comp, sum / static_cast<double>(comp.size())});
      }
    } else {
      for (auto& comp : comps) work.push_back(std::move(comp));
    }
  }
  for (auto& c : clusters) {
    std::sort(c.positions.begin(), c.positions.end());
    if (std::abs(c.center.imag()) <= radius(c.positions.size())) c.center = c.center.real();
  }
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    const double ma = std::abs(a.center), mb = std::abs(b.center);
    if (ma != mb) return ma < mb;
    return a.center.imag() > b.center.imag();
  });
  return clusters;
}

// One cluster moved to the top of the Schur form. N = T11 - center I with its
// diagonal set to zero, so it is exactly nilpotent; the backward error is the
// cluster's spread.
struct ClusterPart {
  Complex center;
  int m = 0;
  CMatrix U;  // p x m orthonormal basis of the invariant subspace
  CMatrix N;
  double spread = 0.0;  // max |lambda_i - center| over the cluster
};

std::vector<ClusterPart> cluster_parts(const Eigen::Ref<const Matrix>& a, double cluster_tol) {
  const auto p = a.rows();
  const double scale = std::max(linalg::norm2(a), 1.0);
  const bool adaptive = !(cluster_tol > 0.0);
  const double tol = adaptive ? 1e-8 * scale : cluster_tol;
  const detail::ComplexSchur schur = detail::complex_schur(a);
  std::vector<ClusterPart> parts;
  for (const auto& c : cluster_eigenvalues(schur.T.diagonal(), tol, scale, adaptive)) {
    std::vector<int> select(static_cast<std::size_t>(p), 0);
    for (auto i : c.positions) select[i] = 1;
    detail::ComplexSchur ordered = schur;
    ClusterPart part;
    part.center = c.center;
    part.m = detail::reorder(ordered, select);
    part.U = ordered.U.leftCols(part.m);
    part.N = ordered.T.topLeftCorner(part.m, part.m).triangularView<Eigen::StrictlyUpper>();
    for (auto i : c.positions) part.spread = std::max(part.spread, std::abs(schur.T(i, i) - c.center));
    parts.push_back(std::move(part));
  }
  return parts;
}

// Jordan chains of the nilpotent part N (m x m) of one cluster. Returns the
// chain columns in block order and appends the block sizes.
CMatrix jordan_chains(const CMatrix& N, double scale, std::vector<int>& sizes) {
  const auto m = N.rows();
  std::vector<int> rank(static_cast<std::size_t>(m) + 1, 0);
  std::vector<CMatrix> power(static_cast<std::size_t>(m) + 1);
  power[0] = CMatrix::Identity(m, m);
  rank[0] = static_cast<int>(m);
  std::vector<double> cutoff(static_cast<std::size_t>(m) + 1, 0.0);
  int nilpotency = 0;
  for (Eigen::Index k = 1; k <= m; ++k) {
    power[k] = power[k - 1] * N;
    cutoff[k] = nilpotent_rtol(m) * std::pow(scale, static_cast<double>(k));
    rank[k] = decisive_rank(power[k], cutoff[k]);
    if (rank[k] == 0) {
      nilpotency = static_cast<int>(k);
      break;
    }
    if (rank[k] >= rank[k - 1]) break;
  }
  if (nilpotency == 0) throw NumericError("ill-conditioned Jordan structure");

  // at_least(k): number of blocks of size >= k.
  auto at_least = [&](int k) { return k > nilpotency ? 0 : rank[k - 1] - rank[k]; };
  CMatrix chains(m, 0);
  std::vector<std::pair<int, CVector>> tops;
  for (int k = nilpotency; k >= 1; --k) {
    const int count = at_least(k) - at_least(k + 1);
    if (count <= 0) continue;
    const CMatrix kernel = null_space(power[k], cutoff[k]);
    CMatrix span = k > 1 ? null_space(power[k - 1], cutoff[k - 1]) : CMatrix(m, 0);
    for (const auto& [len, t] : tops) {
      span.conservativeResize(m, span.cols() + 1);
      span.col(span.cols() - 1) = power[len - k] * t;
    }
    CMatrix projected = kernel;
    if (span.cols() > 0) {
      Eigen::HouseholderQR<CMatrix> qr(span);
      const Eigen::Index r = std::min(span.cols(), m);
      const CMatrix q = qr.householderQ() * CMatrix::Identity(m, r);
      projected -= q * (q.adjoint() * kernel);
    }
    Eigen::JacobiSVD<CMatrix> svd(projected, Eigen::ComputeFullV);
    for (int i = 0; i < count; ++i) {
      const CVector t = kernel * svd.matrixV().col(i);
      tops.emplace_back(k, t);
      const auto start = chains.cols();
      chains.conservativeResize(m, start + k);
      for (int j = 0; j < k; ++j) chains.col(start + j) = power[k - 1 - j] * t;
      sizes.push_back(k);
    }
  }
  if (chains.cols() != m) throw NumericError("ill-conditioned Jordan structure");
  return chains;
}

}  // namespace

std::pair<double, double> eig_extremes(const Eigen::Ref<const Matrix>& a) {
  require_square(a, "eig_extremes");
  if (a.size() == 0) return {0.0, 0.0};
  const Vector m = linalg::eigenvalues(a).cwiseAbs();
  return {m.minCoeff(), m.maxCoeff()};
}

JordanForm jordan_infer(const Eigen::Ref<const Matrix>& a, double cluster_tol) {
  require_square(a, "jordan_infer");
  const auto p = a.rows();
  JordanForm jf;
  jf.exact = false;
  if (p == 0) return jf;
  const double scale = std::max(linalg::norm2(a), 1.0);

  jf.P_inv = CMatrix(p, p);
  Eigen::Index col = 0;
  double spread = 0.0;
  for (const auto& part : cluster_parts(a, cluster_tol)) {
    spread = std::max(spread, part.spread);
    std::vector<int> sizes;
    const CMatrix chains = jordan_chains(part.N, scale, sizes);
    // Regrow each chain from its top vector with A itself, so every link but
    // the last, (A - lambda)^m v = 0, holds to rounding.
    const CMatrix shifted = a.cast<Complex>() - part.center * CMatrix::Identity(p, p);
    Eigen::Index offset = 0;
    for (int k : sizes) {
      CVector v = part.U * chains.col(offset + k - 1);
      for (int j = k - 1; j >= 0; --j) {
        jf.P_inv.col(col + offset + j) = v;
        v = shifted * v;
      }
      offset += k;
      jf.blocks.push_back({part.center, k});
    }
    col += part.m;
  }

  Eigen::PartialPivLU<CMatrix> lu(jf.P_inv);
  jf.P = lu.inverse();
  jf.condition = linalg::condition_number(jf.P);
  if (!std::isfinite(jf.condition) || !jf.P.allFinite()) {
    throw NumericError("ill-conditioned Jordan structure");
  }
  jf.residual = linalg::norm2(CMatrix(jf.reconstruct() - a.cast<Complex>()));
  // Snapping a cluster to its mean moves A by up to the spread.
  if (jf.residual > 1e-6 * scale + 10.0 * jf.condition * spread) {
    throw NumericError("ill-conditioned Jordan structure");
  }
  return jf;
}

bool regularity_check(const Eigen::Ref<const Matrix>& a, double unit_gap) {
  require_square(a, "regularity_check");
  const auto p = a.rows();
  if (p == 0) return true;
  const CVector ev = linalg::eigenvalues(a);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(std::abs(ev(i)) - 1.0) <= unit_gap) {
      throw RegimeError("unit-root ambiguity: eigenvalue within unit_gap of the unit circle");
    }
  }
  // Geometric multiplicity of each explosive cluster is m - rank(N).
  const double scale = std::max(linalg::norm2(a), 1.0);
  for (const auto& part : cluster_parts(a, 0.0)) {
    if (std::abs(part.center) <= 1.0 || part.m == 1) continue;
    if (linalg::numerical_rank(part.N, nilpotent_rtol(part.m) * scale) < part.m - 1) return false;
  }
  return true;
}

ReachabilityResult reachability_gramian(const Eigen::Ref<const Matrix>& a,
                                        const Eigen::Ref<const Matrix>& c) {
  require_square(a, "reachability_gramian");
  if (c.rows() != a.rows() || c.cols() != a.cols()) {
    throw InputError("reachability_gramian: C must match the dimension of A");
  }
  const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
  if (c.size() > 0 && asym > 1e-10 * std::max(c.cwiseAbs().maxCoeff(), 1.0)) {
    throw InputError("reachability_gramian: C is not symmetric");
  }
  const auto p = a.rows();
  ReachabilityResult r;
  r.K = Matrix::Zero(p, p);
  Matrix term = c;
  for (Eigen::Index i = 0; i < p; ++i) {
    r.K += term;
    term = a * term * a.transpose();
  }
  r.K = linalg::symmetrize(r.K);
  if (p == 0) return r;
  const auto [lo, hi] = linalg::sym_eig_extremes(r.K);
  r.lambda_min = std::max(lo, 0.0);
  r.reachable = r.lambda_min > 1e-12 * std::max(hi, 1.0);
  return r;
}

SpectralSplit stable_explosive_split(const Eigen::Ref<const Matrix>& a, double unit_gap) {
  require_square(a, "stable_explosive_split");
  const auto p = a.rows();
  check_unit_gap(linalg::eigenvalues(a), unit_gap, "unit-root");

  detail::RealSchur schur = detail::real_schur(a);
  const auto ev = detail::quasi_triangular_eigenvalues(schur.T);
  std::vector<int> select(static_cast<std::size_t>(p));
  int p1 = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    select[i] = std::abs(ev[i]) < 1.0 ? 1 : 0;
    p1 += select[i];
  }

  SpectralSplit s;
  s.p1 = p1;
  s.p2 = static_cast<int>(p) - p1;
  if (p1 == 0 || p1 == p) {
    s.M = Matrix::Identity(p, p);
    s.M_inv = Matrix::Identity(p, p);
    s.A1 = p1 == p ? Matrix(a) : Matrix(0, 0);
    s.A2 = p1 == 0 ? Matrix(a) : Matrix(0, 0);
    return s;
  }

  if (detail::reorder(schur, select) != p1) throw NumericError("stable/explosive reordering failed");
  const Eigen::Index p2 = p - p1;
  const Matrix T11 = schur.T.topLeftCorner(p1, p1);
  const Matrix T12 = schur.T.topRightCorner(p1, p2);
  const Matrix T22 = schur.T.bottomRightCorner(p2, p2);
  const Matrix X = detail::solve_sylvester(T11, T22, -T12);

  Matrix S = Matrix::Identity(p, p);
  S.topRightCorner(p1, p2) = X;
  Matrix S_inv = Matrix::Identity(p, p);
  S_inv.topRightCorner(p1, p2) = -X;
  s.M = S_inv * schur.U.transpose();
  s.M_inv = schur.U * S;
  s.A1 = T11;
  s.A2 = T22;
  return s;
}

Matrix companion_embed(const std::vector<Matrix>& coeffs) {
  if (coeffs.empty()) throw InputError("companion_embed: need at least one coefficient matrix");
  const auto m = coeffs.front().rows();
  for (const auto& c : coeffs) {
    if (c.rows() != m || c.cols() != m) {
      throw InputError("companion_embed: coefficient blocks must all be m x m");
    }
  }
  if (coeffs.back().cwiseAbs().maxCoeff() == 0.0) {
    throw InputError("companion_embed: the last coefficient matrix must be nonzero");
  }
  const auto k = static_cast<Eigen::Index>(coeffs.size());
  Matrix out = Matrix::Zero(k * m, k * m);
  for (Eigen::Index i = 0; i < k; ++i) out.block(0, i * m, m, m) = coeffs[i];
  if (k > 1) out.bottomLeftCorner((k - 1) * m, (k - 1) * m).setIdentity();
  return out;
}

double mincoor(const Eigen::Ref<const CMatrix>& m, double rel_tol) {
  if (m.size() == 0) return kInf;
  const Matrix mag = m.cwiseAbs();
  const double largest = mag.maxCoeff();
  if (largest == 0.0) return kInf;
  const double zero = rel_tol * largest;
  double best = kInf;
  for (Eigen::Index j = 0; j < mag.cols(); ++j) {
    for (Eigen::Index i = 0; i < mag.rows(); ++i) {
      if (mag(i, j) > zero) best = std::min(best, mag(i, j));
    }
  }
  return best;
}

std::pair<JordanForm, JordanForm> split_jordan(const JordanForm& jf, const SpectralSplit& split) {
  const int p = jf.dimension();
  if (split.p1 + split.p2 != p) throw InputError("split_jordan: dimension mismatch");
  const CMatrix Q = jf.P * split.M_inv.cast<Complex>();
  std::vector<Eigen::Index> rows_stable, rows_explosive;
  JordanForm stable, explosive;
  stable.exact = explosive.exact = jf.exact;
  int offset = 0;
  for (const auto& b : jf.blocks) {
    const bool is_stable = std::abs(b.eigenvalue) < 1.0;
    (is_stable ? stable : explosive).blocks.push_back(b);
    for (int i = 0; i < b.size; ++i) (is_stable ? rows_stable : rows_explosive).push_back(offset + i);
    offset += b.size;
  }
  if (static_cast<int>(rows_stable.size()) != split.p1) {
    throw InputError("split_jordan: Jordan form and split disagree on the stable dimension");
  }
  auto finish = [&](JordanForm& part, const std::vector<Eigen::Index>& rows, Eigen::Index col0,
                    const Matrix& block) {
    const auto q = static_cast<Eigen::Index>(rows.size());
    part.P = CMatrix(q, q);
    for (Eigen::Index i = 0; i < q; ++i) part.P.row(i) = Q.row(rows[i]).segment(col0, q);
    if (q == 0) {
      part.P_inv = CMatrix(0, 0);
      return;
    }
    part.P_inv = part.P.inverse();
    part.condition = linalg::condition_number(part.P);
    part.residual = linalg::norm2(CMatrix(part.reconstruct() - block.cast<Complex>()));
  };
  finish(stable, rows_stable, 0, split.A1);
  finish(explosive, rows_explosive, split.p1, split.A2);
  return {stable, explosive};
}

}  // namespace spectral
}  // namespace sysid
