#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sysid/common.hpp"
#include "sysid/noise.hpp"
#include "sysid/spectral.hpp"

namespace sysid {

/// x(0): a fixed vector, or i.i.d. N(0, sigma^2) coordinates drawn per
/// trajectory.
struct InitialState {
  enum class Kind { fixed, gaussian };
  Kind kind = Kind::fixed;
  Vector value;
  double sigma = 0.0;

  static InitialState fixed(const Vector& v) { return {Kind::fixed, v, 0.0}; }
  static InitialState zero(int p) { return fixed(Vector::Zero(p)); }
  static InitialState gaussian(int p, double sigma) { return {Kind::gaussian, Vector::Zero(p), sigma}; }
  bool stochastic() const { return kind == Kind::gaussian; }
};

struct SystemSpec {
  Matrix A0;
  std::optional<JordanForm> jordan;
  NoiseModel noise;
  InitialState x0;

  int dimension() const { return static_cast<int>(A0.rows()); }
  /// Throws InputError on inconsistent dimensions.
  void validate() const;
};

struct Trajectory {
  /// Column t is x(t), t = 0..length().
  Matrix states;
  /// Column t-1 is w(t), t = 1..length().
  Matrix noises;
  std::uint64_t seed = 0;
  /// First time index whose state exceeded the guard; states stop before it.
  std::optional<int> overflowed_at;

  int length() const { return static_cast<int>(states.cols()) - 1; }
};

inline constexpr double kOverflowGuard = 1e250;

/// The initial state and noise sequence w(1..n) that simulate() would use
/// for this seed, without running the recursion.
struct NoisePath {
  Vector x0;
  Matrix noises;
};
NoisePath draw_noise_path(const SystemSpec& spec, int n, std::uint64_t seed);

/// x(t+1) = A0 x(t) + w(t+1). Stops early when ||x(t)||_inf exceeds the
/// overflow guard; throws NumericError if that happens before t = 2.
Trajectory simulate(const SystemSpec& spec, int n, std::uint64_t seed);

/// Random real p x p matrix with singular values in [1, 10], so kappa <= 10.
Matrix random_wellconditioned(int p, std::uint64_t seed);

/// Uniformly random direction on the unit sphere.
Vector random_unit_vector(int p, std::uint64_t seed);

/// A0 = P^{-1} Lambda P. A real P is taken as the similarity of the real
/// Jordan form: complex blocks must come in conjugate pairs of equal size and
/// are rotated into real 2x2 form before P applies.
SystemSpec make_system_from_jordan(const std::vector<JordanBlock>& blocks, const Matrix& P,
                                   const NoiseModel& noise, const InitialState& x0);
SystemSpec make_system_from_jordan(const std::vector<JordanBlock>& blocks, std::uint64_t P_seed,
                                   const NoiseModel& noise, const InitialState& x0);

struct ControlSystem {
  Matrix Ax;
  Matrix Au;
  Matrix L;

  int p() const { return static_cast<int>(Ax.rows()); }
  int r() const { return static_cast<int>(Au.cols()); }
  /// Theta = [Ax, Au].
  Matrix theta() const;
};

Matrix closed_loop(const ControlSystem& cs);

/// Stabilizing solution of X = A'XA - A'XB (R + B'XB)^{-1} B'XA + Q by
/// structure-preserving doubling. Throws NumericError when it does not
/// converge (e.g. (A, B) not stabilizable).
Matrix solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R);

/// LQR feedback with identity weights: u = L x, L = -(I + B'XB)^{-1} B'XA.
Matrix lqr_feedback(const Matrix& Ax, const Matrix& Au);

enum class PerturbMode { global_awgn, single_entry };
std::string to_string(PerturbMode mode);
PerturbMode perturb_mode_from_string(const std::string& name);

struct SensitivityPoint {
  double magnitude = 0.0;
  /// Trial number (global_awgn) or perturbed entry i * (p + r) + j (single_entry).
  int index = 0;
  /// Spectral radius of Ax + Au L_hat; NaN when the designer failed on the
  /// perturbed parameters.
  double lambda_max = 0.0;
};

struct SensitivityCurve {
  PerturbMode mode = PerturbMode::global_awgn;
  double nominal_lambda_max = 0.0;
  std::vector<SensitivityPoint> points;

  /// Smallest magnitude with some lambda_max > 1, if any.
  std::optional<double> crossing() const;
};

/// Designs L_hat by LQR from Theta + Delta and records the true closed loop's
/// spectral radius. global_awgn: Delta Gaussian, scaled to ||Delta||_2 =
/// magnitude * ||Theta||_2. single_entry: each entry in turn gets
/// + magnitude * ||Theta||_2 (trials is ignored).
SensitivityCurve sensitivity_scan(const ControlSystem& cs, PerturbMode mode,
                                  const std::vector<double>& magnitudes, int trials,
                                  std::uint64_t seed, int threads = 0);

struct FragileInstance {
  ControlSystem system;
  SensitivityCurve curve;
  int attempts = 0;
};

/// Searches random stabilizable (p, r) systems with strongly unstable Ax and
/// weak actuation until an LQR design is destabilized by a global_awgn
/// perturbation of relative size at most max_magnitude.
std::optional<FragileInstance> search_fragile_instance(int p, int r, double max_magnitude,
                                                      int trials, std::uint64_t seed,
                                                      int max_attempts = 200, int threads = 0);

}  // namespace sysid
