#include "sysid/noise.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "sysid/linalg.hpp"

namespace sysid {
namespace {

constexpr double kSqrt3 = 1.7320508075688772;

// Largest number of nonzeros in a row; a coordinate of C_sqrt * xi mixes at
// most this many base coordinates.
int max_row_support(const Matrix& s) {
  int best = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    best = std::max(best, static_cast<int>((s.row(i).array() != 0.0).count()));
  }
  return std::max(best, 1);
}

double weibull_base_scale(double shape) { return std::sqrt(std::tgamma(1.0 + 2.0 / shape)); }

}  // namespace

void TailParams::validate() const {
  if (!(c1 > 0.0) || !(c2 > 0.0) || !(alpha > 0.0)) {
    throw InputError("tail parameters c1, c2, alpha must be positive");
  }
  if (bounded() && !(bound > 0.0)) throw InputError("bounded noise (alpha = inf) needs a bound B > 0");
}

double TailParams::tail_bound(double y) const {
  if (bounded()) return y >= bound ? 0.0 : 1.0;
  if (y <= 0.0) return 1.0;
  return std::clamp(c1 * std::exp(-std::pow(y, alpha) / c2), 0.0, 1.0);
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::weibull_symmetric: return "weibull_symmetric";
    case NoiseKind::uniform_bounded: return "uniform_bounded";
  }
  return "unknown";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "weibull_symmetric" || name == "weibull") return NoiseKind::weibull_symmetric;
  if (name == "uniform_bounded" || name == "uniform") return NoiseKind::uniform_bounded;
  throw InputError("unknown noise kind '" + name + "'");
}

NoiseModel NoiseModel::gaussian(const Matrix& C) {
  if (C.rows() != C.cols()) throw InputError("noise covariance must be square");
  if (!C.allFinite()) throw InputError("noise covariance has non-finite entries");
  const double scale = C.size() ? std::max(C.cwiseAbs().maxCoeff(), 1.0) : 1.0;
  if (C.size() && (C - C.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InputError("noise covariance is not symmetric");
  }
  const Matrix Cs = linalg::symmetrize(C);
  Matrix root;
  Eigen::LLT<Matrix> llt(Cs);
  if (llt.info() == Eigen::Success) {
    root = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Cs);
    const Vector d = eig.eigenvalues();
    if (d.size() && d.minCoeff() < -1e-10 * scale) throw InputError("noise covariance is not PSD");
    root = eig.eigenvectors() * d.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  return shaped(NoiseKind::gaussian, root);
}

NoiseModel NoiseModel::weibull(double alpha, double c2, int p) {
  if (!(alpha > 0.0) || !(c2 > 0.0) || p < 1) throw InputError("weibull noise needs alpha, c2 > 0 and p >= 1");
  const double s = std::pow(c2, 1.0 / alpha) * weibull_base_scale(alpha);
  NoiseModel m = shaped(NoiseKind::weibull_symmetric, s * Matrix::Identity(p, p), alpha);
  m.tail.c2 = c2;  // exact, avoid round-off from the generic shaping rule
  return m;
}

NoiseModel NoiseModel::uniform(double B, int p) {
  if (!(B > 0.0) || p < 1) throw InputError("uniform noise needs B > 0 and p >= 1");
  NoiseModel m = shaped(NoiseKind::uniform_bounded, (B / kSqrt3) * Matrix::Identity(p, p));
  m.tail.bound = B;
  return m;
}

NoiseModel NoiseModel::shaped(NoiseKind kind, const Matrix& C_sqrt, double shape) {
  if (!C_sqrt.allFinite()) throw InputError("C_sqrt has non-finite entries");
  NoiseModel m;
  m.kind = kind;
  m.C_sqrt = C_sqrt;
  m.shape = shape;
  const double row_sum = C_sqrt.size() ? linalg::norm_inf(C_sqrt.cast<Complex>()) : 0.0;
  // Zero rows carry no noise; any positive scale keeps the parameters valid.
  const double spread = row_sum > 0.0 ? row_sum : 1.0;
  switch (kind) {
    case NoiseKind::gaussian: {
      const double var = C_sqrt.size() ? C_sqrt.rowwise().squaredNorm().maxCoeff() : 0.0;
      m.tail = {2.0, 2.0 * std::max(var, 1e-300), 2.0, 0.0};
      break;
    }
    case NoiseKind::weibull_symmetric: {
      if (!(shape > 0.0)) throw InputError("weibull shape must be positive");
      const double base_c2 = std::pow(weibull_base_scale(shape), -shape);
      m.tail = {static_cast<double>(max_row_support(C_sqrt)), base_c2 * std::pow(spread, shape), shape, 0.0};
      break;
    }
    case NoiseKind::uniform_bounded:
      m.tail = {1.0, 1.0, kInf, kSqrt3 * spread};
      break;
  }
  return m;
}

void sample_noise_into(const NoiseModel& model, Rng& rng, Eigen::Ref<Vector> out) {
  const auto p = model.C_sqrt.cols();
  Vector xi(p);
  switch (model.kind) {
    case NoiseKind::gaussian:
      for (Eigen::Index i = 0; i < p; ++i) xi(i) = rng.normal();
      break;
    case NoiseKind::weibull_symmetric: {
      const double scale = 1.0 / weibull_base_scale(model.shape);
      for (Eigen::Index i = 0; i < p; ++i) {
        const double s = rng.sign();
        xi(i) = s * scale * std::pow(rng.exponential(), 1.0 / model.shape);
      }
      break;
    }
    case NoiseKind::uniform_bounded:
      for (Eigen::Index i = 0; i < p; ++i) xi(i) = kSqrt3 * (2.0 * rng.uniform() - 1.0);
      break;
  }
  out.noalias() = model.C_sqrt * xi;
}

Vector sample_noise(const NoiseModel& model, Rng& rng) {
  Vector w(model.C_sqrt.rows());
  sample_noise_into(model, rng, w);
  return w;
}

TailReport verify_tail(const Eigen::Ref<const Matrix>& samples, const TailParams& tail,
                       const std::vector<double>& grid) {
  if (samples.rows() == 0) throw InputError("verify_tail: empty sample set");
  if (samples.rows() < 10000) throw InputError("verify_tail: need at least 10000 samples");
  tail.validate();
  TailReport r;
  r.grid = grid;
  r.samples = static_cast<std::size_t>(samples.rows());
  r.empirical = Matrix::Zero(static_cast<Eigen::Index>(grid.size()), samples.cols());
  const double N = static_cast<double>(samples.rows());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double q = tail.tail_bound(grid[g]);
    r.bound.push_back(q);
    const double se = std::sqrt(q * (1.0 - q) / N);
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
      const double freq = static_cast<double>((samples.col(i).array().abs() > grid[g]).count()) / N;
      r.empirical(static_cast<Eigen::Index>(g), i) = freq;
      if (freq > q + 3.0 * se) r.pass = false;
    }
  }
  return r;
}

double noise_sup_bound(double n, double delta, int p, const TailParams& tail) {
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("noise_sup_bound: delta must be in (0, 1)");
  if (!(n >= 1.0) || p < 1) throw InputError("noise_sup_bound: need n >= 1 and p >= 1");
  tail.validate();
  if (tail.bounded()) return tail.bound;
  const double arg = tail.c1 * n * p / delta;
  if (arg <= 1.0) {
    spdlog::warn("noise_sup_bound: c1 n p / delta = {} <= 1, bound is vacuous", arg);
    return 0.0;
  }
  return std::pow(tail.c2 * std::log(arg), 1.0 / tail.alpha);
}

}  // namespace sysid
