#include "sysid/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sysid/linalg.hpp"
#include "sysid/parallel.hpp"
#include "sysid/rng.hpp"

namespace sysid {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

Matrix orthogonal(int p, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(p, p, rng));
  Matrix q = qr.householderQ();
  // Fix column signs so the factor is Haar distributed.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < p; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

// Unitary W with W^* Lambda W real, pairing each complex block with a later
// block of conjugate eigenvalue and equal size.
CMatrix real_form_rotation(const std::vector<JordanBlock>& blocks) {
  int p = 0;
  std::vector<int> offsets;
  for (const auto& b : blocks) {
    if (b.size < 1) throw InputError("Jordan block sizes must be positive");
    offsets.push_back(p);
    p += b.size;
  }
  CMatrix W = CMatrix::Identity(p, p);
  std::vector<bool> used(blocks.size(), false);
  const double r = 1.0 / std::sqrt(2.0);
  const Complex I(0.0, 1.0);
  for (std::size_t a = 0; a < blocks.size(); ++a) {
    const Complex lam = blocks[a].eigenvalue;
    if (used[a] || lam.imag() == 0.0) continue;
    std::size_t partner = blocks.size();
    for (std::size_t b = a + 1; b < blocks.size(); ++b) {
      if (!used[b] && blocks[b].size == blocks[a].size && blocks[b].eigenvalue == std::conj(lam)) {
        partner = b;
        break;
      }
    }
    if (partner == blocks.size()) throw InputError("unpaired complex eigenvalue in Jordan specification");
    used[a] = used[partner] = true;
    for (int k = 0; k < blocks[a].size; ++k) {
      const int i = offsets[a] + k, j = offsets[partner] + k;
      W(i, i) = r;
      W(i, j) = -I * r;
      W(j, i) = r;
      W(j, j) = I * r;
    }
  }
  return W;
}

}  // namespace

void SystemSpec::validate() const {
  const auto p = A0.rows();
  if (A0.cols() != p || p < 1) throw InputError("A0 must be a nonempty square matrix");
  if (!A0.allFinite()) throw InputError("A0 has non-finite entries");
  if (noise.C_sqrt.rows() != p) throw InputError("noise dimension does not match A0");
  if (x0.kind == InitialState::Kind::fixed && x0.value.size() != p) {
    throw InputError("x0 dimension does not match A0");
  }
  if (jordan && jordan->dimension() != p) throw InputError("Jordan form dimension does not match A0");
}

NoisePath draw_noise_path(const SystemSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InputError("simulate: n must be at least 1");
  const int p = spec.dimension();
  Rng rng(seed);
  NoisePath path;
  if (spec.x0.stochastic()) {
    path.x0.resize(p);
    for (int i = 0; i < p; ++i) path.x0(i) = spec.x0.sigma * rng.normal();
  } else {
    path.x0 = spec.x0.value;
  }
  path.noises.resize(p, n);
  for (int t = 0; t < n; ++t) sample_noise_into(spec.noise, rng, path.noises.col(t));
  return path;
}

Trajectory simulate(const SystemSpec& spec, int n, std::uint64_t seed) {
  NoisePath path = draw_noise_path(spec, n, seed);
  const int p = spec.dimension();
  Trajectory traj;
  traj.seed = seed;
  traj.states.resize(p, n + 1);
  traj.states.col(0) = path.x0;
  int last = n;
  for (int t = 0; t < n; ++t) {
    traj.states.col(t + 1).noalias() = spec.A0 * traj.states.col(t);
    traj.states.col(t + 1) += path.noises.col(t);
    const double mag = traj.states.col(t + 1).cwiseAbs().maxCoeff();
    if (!(mag <= kOverflowGuard)) {
      last = t;
      traj.overflowed_at = t + 1;
      break;
    }
  }
  if (traj.overflowed_at) {
    if (*traj.overflowed_at < 2) {
      throw NumericError("simulate: state overflow before t = 2 (system and horizon mismatch)");
    }
    traj.states.conservativeResize(p, last + 1);
    path.noises.conservativeResize(p, last);
  }
  traj.noises = std::move(path.noises);
  return traj;
}

Matrix random_wellconditioned(int p, std::uint64_t seed) {
  if (p < 1) throw InputError("random_wellconditioned: p must be positive");
  Rng rng(seed);
  const Matrix q1 = orthogonal(p, rng);
  const Matrix q2 = orthogonal(p, rng);
  Vector s(p);
  for (int i = 0; i < p; ++i) s(i) = std::pow(10.0, rng.uniform());
  return q1 * s.asDiagonal() * q2;
}

Vector random_unit_vector(int p, std::uint64_t seed) {
  if (p < 1) throw InputError("random_unit_vector: p must be positive");
  Rng rng(seed);
  Vector v(p);
  do {
    for (int i = 0; i < p; ++i) v(i) = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

SystemSpec make_system_from_jordan(const std::vector<JordanBlock>& blocks, const Matrix& P,
                                   const NoiseModel& noise, const InitialState& x0) {
  if (blocks.empty()) throw InputError("Jordan specification has no blocks");
  const CMatrix W = real_form_rotation(blocks);
  const auto p = W.rows();
  if (P.rows() != p || P.cols() != p) throw InputError("P must be p x p with p = sum of block sizes");
  Eigen::PartialPivLU<Matrix> lu(P);
  if (!(std::abs(lu.determinant()) > 0.0)) throw InputError("P must be invertible");

  JordanForm jf;
  jf.blocks = blocks;
  jf.exact = true;
  jf.P = W * P.cast<Complex>();
  jf.P_inv = P.inverse().cast<Complex>() * W.adjoint();
  jf.condition = linalg::condition_number(jf.P);

  const CMatrix A = jf.reconstruct();
  const double scale = std::max(linalg::norm2(A), 1.0);
  if (A.imag().cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InputError("Jordan specification does not give a real matrix");
  }
  SystemSpec spec;
  spec.A0 = A.real();
  jf.residual = 0.0;
  spec.jordan = std::move(jf);
  spec.noise = noise;
  spec.x0 = x0;
  spec.validate();
  return spec;
}

SystemSpec make_system_from_jordan(const std::vector<JordanBlock>& blocks, std::uint64_t P_seed,
                                   const NoiseModel& noise, const InitialState& x0) {
  int p = 0;
  for (const auto& b : blocks) p += b.size;
  return make_system_from_jordan(blocks, random_wellconditioned(p, P_seed), noise, x0);
}

Matrix ControlSystem::theta() const {
  Matrix t(Ax.rows(), Ax.cols() + Au.cols());
  t << Ax, Au;
  return t;
}

Matrix closed_loop(const ControlSystem& cs) {
  const auto p = cs.Ax.rows();
  if (cs.Ax.cols() != p) throw InputError("closed_loop: Ax must be square");
  if (cs.Au.rows() != p) throw InputError("closed_loop: Au must have p rows");
  if (cs.L.rows() != cs.Au.cols() || cs.L.cols() != p) throw InputError("closed_loop: L must be r x p");
  return cs.Ax + cs.Au * cs.L;
}

Matrix solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
  const auto p = A.rows();
  Matrix Ak = A;
  Matrix Gk = B * R.ldlt().solve(B.transpose());
  Matrix Hk = Q;
  const Matrix I = Matrix::Identity(p, p);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::PartialPivLU<Matrix> W(I + Gk * Hk);
    const Matrix WA = W.solve(Ak);
    const Matrix WG = W.solve(Gk);
    const Matrix H_next = Hk + Ak.transpose() * Hk * WA;
    const Matrix A_next = Ak * WA;
    const Matrix G_next = Gk + Ak * WG * Ak.transpose();
    if (!H_next.allFinite() || !G_next.allFinite() || !A_next.allFinite()) break;
    const double change = (H_next - Hk).norm();
    Hk = linalg::symmetrize(H_next);
    Gk = linalg::symmetrize(G_next);
    Ak = A_next;
    if (change <= 1e-13 * std::max(Hk.norm(), 1.0)) {
      const Matrix S = R + B.transpose() * Hk * B;
      const Matrix K = S.ldlt().solve(B.transpose() * Hk * A);
      if (linalg::spectral_radius(A - B * K) < 1.0) return Hk;
      break;
    }
  }
  throw NumericError("solve_dare: doubling iteration did not reach a stabilizing solution");
}

Matrix lqr_feedback(const Matrix& Ax, const Matrix& Au) {
  const auto p = Ax.rows();
  const auto r = Au.cols();
  const Matrix X = solve_dare(Ax, Au, Matrix::Identity(p, p), Matrix::Identity(r, r));
  const Matrix S = Matrix::Identity(r, r) + Au.transpose() * X * Au;
  return -S.ldlt().solve(Au.transpose() * X * Ax);
}

std::string to_string(PerturbMode mode) {
  return mode == PerturbMode::global_awgn ? "global_awgn" : "single_entry";
}

PerturbMode perturb_mode_from_string(const std::string& name) {
  if (name == "global_awgn") return PerturbMode::global_awgn;
  if (name == "single_entry") return PerturbMode::single_entry;
  throw InputError("unknown perturbation mode '" + name + "'");
}

std::optional<double> SensitivityCurve::crossing() const {
  std::optional<double> best;
  for (const auto& pt : points) {
    if (pt.lambda_max > 1.0 && (!best || pt.magnitude < *best)) best = pt.magnitude;
  }
  return best;
}

SensitivityCurve sensitivity_scan(const ControlSystem& cs, PerturbMode mode,
                                  const std::vector<double>& magnitudes, int trials,
                                  std::uint64_t seed, int threads) {
  const int p = cs.p(), r = cs.r();
  const Matrix theta = cs.theta();
  const double theta_norm = linalg::norm2(theta);
  SensitivityCurve curve;
  curve.mode = mode;
  Matrix L0;
  try {
    L0 = lqr_feedback(cs.Ax, cs.Au);
  } catch (const NumericError&) {
    throw InputError("sensitivity_scan: the designer fails on the unperturbed system");
  }
  curve.nominal_lambda_max = linalg::spectral_radius(cs.Ax + cs.Au * L0);
  if (!(curve.nominal_lambda_max < 1.0)) {
    throw InputError("sensitivity_scan: the designer does not stabilize the unperturbed system");
  }

  const int per = mode == PerturbMode::global_awgn ? std::max(trials, 1) : p * (p + r);
  if (mode == PerturbMode::global_awgn && trials < 1) throw InputError("sensitivity_scan: trials must be >= 1");
  curve.points.resize(magnitudes.size() * static_cast<std::size_t>(per));

  parallel_for(curve.points.size(), resolve_threads(threads), [&](std::size_t k) {
    const std::size_t mi = k / static_cast<std::size_t>(per);
    const int index = static_cast<int>(k % static_cast<std::size_t>(per));
    const double mag = magnitudes[mi];
    SensitivityPoint pt{mag, index, curve.nominal_lambda_max};
    if (mag != 0.0) {
      Matrix delta = Matrix::Zero(p, p + r);
      if (mode == PerturbMode::global_awgn) {
        Rng rng(derive_seed(seed, {mi, static_cast<std::uint64_t>(index)}));
        delta = gaussian_matrix(p, p + r, rng);
        delta *= mag * theta_norm / linalg::norm2(delta);
      } else {
        delta(index / (p + r), index % (p + r)) = mag * theta_norm;
      }
      const Matrix perturbed = theta + delta;
      try {
        const Matrix L = lqr_feedback(perturbed.leftCols(p), perturbed.rightCols(r));
        pt.lambda_max = linalg::spectral_radius(cs.Ax + cs.Au * L);
      } catch (const NumericError&) {
        pt.lambda_max = kNaN;
      }
    }
    curve.points[k] = pt;
  });
  return curve;
}

std::optional<FragileInstance> search_fragile_instance(int p, int r, double max_magnitude,
                                                      int trials, std::uint64_t seed,
                                                      int max_attempts, int threads) {
  std::vector<double> magnitudes;
  for (int k = 1; k <= 5; ++k) magnitudes.push_back(max_magnitude * k / 5.0);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
    ControlSystem cs;
    cs.Ax = gaussian_matrix(p, p, rng);
    const double radius = linalg::spectral_radius(cs.Ax);
    if (radius == 0.0) continue;
    cs.Ax *= (1.5 + 1.5 * rng.uniform()) / radius;
    cs.Au = (0.02 + 0.1 * rng.uniform()) * gaussian_matrix(p, r, rng);
    try {
      cs.L = lqr_feedback(cs.Ax, cs.Au);
    } catch (const NumericError&) {
      continue;
    }
    if (!(linalg::spectral_radius(closed_loop(cs)) < 1.0)) continue;
    auto curve = sensitivity_scan(cs, PerturbMode::global_awgn, magnitudes, trials,
                                  derive_seed(seed, {static_cast<std::uint64_t>(attempt), 1}), threads);
    const auto cross = curve.crossing();
    if (cross && *cross <= max_magnitude) return FragileInstance{cs, std::move(curve), attempt + 1};
  }
  return std::nullopt;
}

}  // namespace sysid
