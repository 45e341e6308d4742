#pragma once

#include <string>
#include <vector>

#include "sysid/common.hpp"
#include "sysid/rng.hpp"

namespace sysid {

/// Coordinate tail P(|w_i| > y) <= c1 exp(-y^alpha / c2). alpha = +inf means
/// bounded noise, |w_i| <= bound.
struct TailParams {
  double c1 = 1.0;
  double c2 = 1.0;
  double alpha = 2.0;
  double bound = 0.0;

  bool bounded() const { return alpha == kInf; }
  /// Throws InputError unless the parameters are admissible.
  void validate() const;
  /// c1 exp(-y^alpha / c2), or the bounded-case indicator, clamped to [0, 1].
  double tail_bound(double y) const;
};

enum class NoiseKind { gaussian, weibull_symmetric, uniform_bounded };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

/// w = C_sqrt * xi, where xi has i.i.d. mean-zero unit-variance coordinates of
/// the given kind. C_sqrt may be rectangular (p x q, q base coordinates).
/// `tail` is the coordinate tail of w itself (exact for the factories below,
/// conservative after general shaping).
struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  TailParams tail;
  Matrix C_sqrt;
  /// Shape of the symmetric Weibull base; unused for the other kinds.
  double shape = 2.0;

  int dimension() const { return static_cast<int>(C_sqrt.rows()); }
  Matrix covariance() const { return C_sqrt * C_sqrt.transpose(); }

  /// Gaussian with covariance C (symmetric PSD).
  static NoiseModel gaussian(const Matrix& C);
  /// Symmetric Weibull coordinates with exact tail exp(-y^alpha / c2).
  static NoiseModel weibull(double alpha, double c2, int p);
  /// Independent uniform coordinates on [-B, B].
  static NoiseModel uniform(double B, int p);
  /// Any kind with an explicit square root. For weibull, `shape` is the
  /// base exponent.
  static NoiseModel shaped(NoiseKind kind, const Matrix& C_sqrt, double shape = 2.0);
};

Vector sample_noise(const NoiseModel& model, Rng& rng);
/// Writes one draw into out (length p) without allocating.
void sample_noise_into(const NoiseModel& model, Rng& rng, Eigen::Ref<Vector> out);

struct TailReport {
  std::vector<double> grid;
  /// empirical(g, i): exceedance frequency at grid[g] for coordinate i.
  Matrix empirical;
  std::vector<double> bound;
  std::size_t samples = 0;
  bool pass = true;
};

/// samples: one draw per row. Passes iff every empirical exceedance is at most
/// the bound plus three binomial standard errors.
TailReport verify_tail(const Eigen::Ref<const Matrix>& samples, const TailParams& tail,
                       const std::vector<double>& grid);

/// b_n(delta) = (c2 log(c1 n p / delta))^{1/alpha}; the declared bound when
/// alpha = +inf. Returns 0 (with a warning) when the logarithm is nonpositive.
double noise_sup_bound(double n, double delta, int p, const TailParams& tail);

}  // namespace sysid
