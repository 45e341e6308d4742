#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sysid/common.hpp"
#include "sysid/dynamics.hpp"
#include "sysid/spectral.hpp"

namespace sysid {

enum class Regime { stable, explosive, general };
std::string to_string(Regime regime);

/// Stable if every |lambda| < 1, explosive if every |lambda| > 1, general
/// otherwise. Throws RegimeError near the unit circle.
Regime classify_regime(const Eigen::Ref<const Matrix>& a,
                       double unit_gap = spectral::kDefaultUnitGap);

namespace bounds {

inline constexpr double kEtaTailCutoff = 1e-10;
inline constexpr double kPhiTruncation = 1e-6;

enum class EtaDirection { A, A_transpose };

/// inf_{rho >= r} t^{m-1} rho^t sum_{j<m} rho^{-j} / j!, for t >= 1 (1 at t = 0).
double eta_t(double r, int m, int t);

/// eta of a stable matrix from its Jordan form. The series over t is cut once
/// a geometric bound on its remainder drops below tail_cutoff; the bound is
/// added, so the result never underestimates the series.
double eta_const(const JordanForm& jf, EtaDirection direction, double tail_cutoff = kEtaTailCutoff);

/// The same constant for A^{-1} of an explosive matrix: block magnitudes
/// 1/|lambda| with the prefactor of A's own P.
double eta_inverse_const(const JordanForm& jf, EtaDirection direction,
                         double tail_cutoff = kEtaTailCutoff);

/// X = A X A' + C for stable A, by doubling.
Matrix lyap_solve(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& c);

/// The prescribed n does not fit in 62 bits. lower_bound is a real number
/// the prescription is known to exceed.
class SampleSizeOverflow : public NumericError {
 public:
  SampleSizeOverflow(const std::string& what, double lower_bound)
      : NumericError(what), lower_bound_(lower_bound) {}
  double lower_bound() const { return lower_bound_; }

 private:
  double lower_bound_;
};

/// Smallest integer n >= 3 with n / (log n)^k >= rhs. Throws
/// SampleSizeOverflow past 2^62.
std::int64_t min_log_sample_size(double rhs, double k);

struct StableConstants {
  double eta = 0.0;
  double eta_transpose = 0.0;
  double norm_A = 0.0;
  double lambda_max_C = 0.0;
  double x0_inf = 0.0;
  double tail_factor = 0.0;  // (c2 log 2 c1 p)^{4/alpha}
  double k_min = 0.0;        // lambda_min(K(C))
  Matrix lyap;
  double c1 = 0.0;
  double c2 = 0.0;
};

StableConstants stable_constants(const SystemSpec& spec);
std::int64_t stable_sample_size(const SystemSpec& spec, double epsilon, double delta);

struct PsiSearchOpts {
  int samples = 10000;
  int refine_starts = 10;
  std::uint64_t seed = 0x9b1d5eedULL;
};

struct PsiEstimate {
  double value = 0.0;        // best objective found (estimate of the infimum)
  double lower_bound = 0.0;  // certified: psi >= lower_bound
  int evaluations = 0;
};

/// max_ij |(sum_k a_{k+1} Lambda^{-k})_ij| / (||a||_1 ||P||_{2->inf}).
double psi_objective(const JordanForm& jf, const Eigen::Ref<const Vector>& a);
PsiEstimate psi_const(const JordanForm& jf, const PsiSearchOpts& opts = {});

struct MonteCarloOpts {
  int samples = 100000;
  std::uint64_t seed = 0x0f1e2d3cULL;
  int threads = 0;
};

struct PhiEstimate {
  double delta = 0.0;
  double phi_hat = 0.0;
  double ci_lo = 0.0;  // 95% order-statistic band
  double ci_hi = 0.0;
  double standard_error = 0.0;
  int truncation_T = 0;
  double zeta_bar = 0.0;
  int samples = 0;
};

/// delta-quantiles of min_i |P_i' z_T| from one shared set of draws.
std::vector<PhiEstimate> phi_quantiles(const SystemSpec& spec, const std::vector<double>& deltas,
                                       const MonteCarloOpts& mc = {});
PhiEstimate phi_quantile(const SystemSpec& spec, double delta, const MonteCarloOpts& mc = {});

/// ||x(0)||_2 + ||P^{-1}||_{inf->2} ||P||_inf sum_{t>=1} eta_t(Lambda^{-1}) b_1(delta / 2t^2).
double zeta_bar(const SystemSpec& spec, double delta);

struct ExplosiveConstants {
  double lambda_min = 0.0;
  int mu = 0;
  double eta_inv = 0.0;            // eta(A^{-1})
  double eta_inv_transpose = 0.0;  // eta(A'^{-1})
  double prefactor = 0.0;          // ||P^{-1}||_{inf->2} ||P||_inf
  double prefactor_transpose = 0.0;
  double zeta_const = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  PsiEstimate psi;
  double n1 = 0.0;
  double n2 = 0.0;
};

ExplosiveConstants explosive_constants(const SystemSpec& spec, const PsiSearchOpts& psi = {});

struct ExplosiveSampleSize {
  std::int64_t n = 0;
  double coefficient = 0.0;  // 3(alpha+4) / (alpha log lambda_min)
  PhiEstimate phi;
  ExplosiveConstants constants;
};

ExplosiveSampleSize explosive_sample_size(const SystemSpec& spec, double epsilon, double delta,
                                          const MonteCarloOpts& mc = {},
                                          const PsiSearchOpts& psi = {});

/// The two decoupled subsystems (A1, C11) and (A2, C22) in split coordinates.
std::pair<SystemSpec, SystemSpec> split_subsystems(const SystemSpec& spec, const SpectralSplit& split);

struct GeneralConstants {
  double rho0 = 0.0;
  double rho3 = 0.0;
  double c3 = 0.0;
  double n3 = 0.0;
  Matrix K1;
  StableConstants stable;        // for (A1, C11)
  ExplosiveConstants explosive;  // for (A2, C22)
};

GeneralConstants general_constants(const SystemSpec& spec, const SpectralSplit& split,
                                   const PsiSearchOpts& psi = {});

struct SampleSize {
  Regime regime = Regime::stable;
  std::int64_t n = 0;
  std::optional<PhiEstimate> phi;
};

/// Routes pure regimes to their own prescriptions.
SampleSize general_sample_size(const SystemSpec& spec, double epsilon, double delta,
                               const MonteCarloOpts& mc = {}, const PsiSearchOpts& psi = {});

/// min(1, 2p exp(-3y^2 / (6 sigma^2 + 2 b y))).
double bernstein_bound(int p, double sigma_sq, double max_eig_bound, double y);
/// min(1, 2p exp(-y^2 / (8 sigma^2))).
double azuma_bound(int p, double sigma_sq, double y);

struct ConcentrationCheck {
  std::vector<double> grid;
  std::vector<double> empirical;
  std::vector<double> bound;
  int trials = 0;
  bool pass = true;
};

/// P(lambda_max(sum_{i<n} diag(eps_i)) >= y) for i.i.d. Rademacher diagonals
/// (b = 1, sigma^2 = n) against bernstein_bound.
ConcentrationCheck rademacher_check(int n, int p, int trials, const std::vector<double>& grid,
                                    std::uint64_t seed, int threads = 0);
/// Diagonal martingale differences s_t eps_t with a predictable scale
/// s_t in {1/2, 1} (A_t = I, sigma^2 = n) against azuma_bound.
ConcentrationCheck martingale_check(int n, int p, int trials, const std::vector<double>& grid,
                                    std::uint64_t seed, int threads = 0);

struct BoundReport {
  Regime regime = Regime::stable;
  std::optional<double> eta, eta_transpose, k_min;
  std::optional<Matrix> lyap_matrix;
  std::optional<double> c1_const, c2_const;
  std::optional<double> psi, phi_hat, zeta_bar;
  std::optional<double> n1, n2;
  std::optional<double> rho0, rho3, c3_const, n3;
  /// Absent when the prescription overflows; then sample_size_lower_bound
  /// holds a value it exceeds.
  std::optional<std::int64_t> sample_size;
  std::optional<double> sample_size_lower_bound;
};

BoundReport bound_report(const SystemSpec& spec, double epsilon, double delta,
                         const MonteCarloOpts& mc = {}, const PsiSearchOpts& psi = {});

}  // namespace bounds
}  // namespace sysid
