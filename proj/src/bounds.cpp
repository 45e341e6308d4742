#include "sysid/bounds.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sysid/linalg.hpp"
#include "sysid/noise.hpp"
#include "sysid/parallel.hpp"
#include "sysid/rng.hpp"

namespace sysid {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::stable: return "stable";
    case Regime::explosive: return "explosive";
    case Regime::general: return "general";
  }
  return "unknown";
}

Regime classify_regime(const Eigen::Ref<const Matrix>& a, double unit_gap) {
  const Vector mags = linalg::eigenvalues(a).cwiseAbs();
  for (Eigen::Index i = 0; i < mags.size(); ++i) {
    if (std::abs(mags(i) - 1.0) <= unit_gap) {
      throw RegimeError("unit-root eigenvalue: no bound applies within unit_gap of the unit circle");
    }
  }
  if (mags.maxCoeff() < 1.0) return Regime::stable;
  if (mags.minCoeff() > 1.0) return Regime::explosive;
  return Regime::general;
}

namespace bounds {
namespace {

struct BlockMag {
  double r;
  int m;
};

std::vector<BlockMag> block_mags(const JordanForm& jf, bool inverse) {
  std::vector<BlockMag> out;
  for (const auto& b : jf.blocks) {
    const double r = std::abs(b.eigenvalue);
    out.push_back({inverse ? 1.0 / r : r, b.size});
  }
  return out;
}

double eta_value(double rho, int m, int t) {
  const double lead = std::pow(static_cast<double>(t), m - 1);
  double sum = 0.0, fact = 1.0;
  for (int j = 0; j < m; ++j) {
    if (j > 0) fact *= j;
    sum += std::pow(rho, t - j) / fact;
  }
  return lead * sum;
}

// d/ds of eta_value(e^s, m, t) up to the positive factor t^{m-1}.
double eta_slope(double s, int m, int t) {
  double sum = 0.0, fact = 1.0;
  for (int j = 0; j < m; ++j) {
    if (j > 0) fact *= j;
    sum += (t - j) * std::exp((t - j) * s) / fact;
  }
  return sum;
}

// Sum over t >= 1 of max_i eta_t(block_i) * weight(t). Once t >= m_i - 1 the
// ratio of consecutive terms of block i is nonincreasing (for the weights
// used here), so the remainder after t is at most
// sum_i term_i(t+1) / (1 - q_i) with q_i = term_i(t+2) / term_i(t+1).
template <typename Weight>
double eta_series(const std::vector<BlockMag>& blocks, Weight weight, double cutoff,
                  int* last = nullptr) {
  int mmax = 1;
  for (const auto& b : blocks) {
    if (!(b.r < 1.0)) throw RegimeError("eta: series diverges (block magnitude >= 1)");
    mmax = std::max(mmax, b.m);
  }
  double sum = 0.0;
  for (int t = 1; t < 100000000; ++t) {
    double term = 0.0;
    for (const auto& b : blocks) term = std::max(term, eta_t(b.r, b.m, t));
    sum += term * weight(t);
    if (t + 1 < mmax - 1) continue;
    double remainder = 0.0;
    bool geometric = true;
    for (const auto& b : blocks) {
      const double a = eta_t(b.r, b.m, t + 1) * weight(t + 1);
      if (a == 0.0) continue;
      const double q = eta_t(b.r, b.m, t + 2) * weight(t + 2) / a;
      if (!(q < 1.0)) {
        geometric = false;
        break;
      }
      remainder += a / (1.0 - q);
    }
    if (geometric && remainder < cutoff) {
      if (last) *last = t;
      return sum + remainder;
    }
  }
  throw NumericError("eta: series did not converge");
}

double prefactor(const JordanForm& jf, EtaDirection direction) {
  if (direction == EtaDirection::A) {
    return linalg::norm_inf_to_2(jf.P_inv) * linalg::norm_inf(jf.P);
  }
  return linalg::norm_inf_to_2(jf.P.transpose()) * linalg::norm_inf(jf.P_inv.transpose());
}

JordanForm jordan_of(const SystemSpec& spec) {
  if (spec.jordan) return *spec.jordan;
  spdlog::debug("no exact Jordan form attached; inferring one numerically");
  return spectral::jordan_infer(spec.A0);
}

void require_deterministic_x0(const SystemSpec& spec) {
  if (spec.x0.stochastic()) {
    throw InputError("bounds need a deterministic x(0); got a stochastic initial state");
  }
}

void require_probability(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw InputError(std::string(name) + " must be in (0, 1)");
}

double clamped_c1(const TailParams& t) { return std::max(t.c1, 1.0); }

// b_1(delta) for the spec's noise: the per-step sup bound at horizon 1.
double b_one(const TailParams& tail, int p, double delta) {
  if (tail.bounded()) return tail.bound;
  const double arg = clamped_c1(tail) * p / delta;
  return arg > 1.0 ? std::pow(tail.c2 * std::log(arg), 1.0 / tail.alpha) : 0.0;
}

double log_exponent(const TailParams& tail) { return tail.bounded() ? 0.0 : 4.0 / tail.alpha; }

double zeta_const_of(const SystemSpec& spec, const JordanForm& jf, double eta_inv) {
  const auto& tail = spec.noise.tail;
  const int p = spec.dimension();
  const double c1 = clamped_c1(tail);
  auto weight = [&](int t) {
    if (tail.bounded()) return tail.bound;
    const double tt = static_cast<double>(t);
    return std::pow(tail.c2, 1.0 / tail.alpha) * std::pow(std::log(2.0 * c1 * p * tt * tt), 1.0 / tail.alpha);
  };
  const double series = eta_series(block_mags(jf, true), weight, kEtaTailCutoff);
  const double inner = spec.x0.value.norm() + prefactor(jf, EtaDirection::A) * series;
  return eta_inv * eta_inv * inner * inner;
}

double quantile_sorted(const std::vector<double>& sorted, double rank) {
  const auto N = static_cast<double>(sorted.size());
  const double k = std::clamp(std::ceil(rank), 1.0, N);
  return sorted[static_cast<std::size_t>(k) - 1];
}

}  // namespace

double eta_t(double r, int m, int t) {
  if (t == 0) return 1.0;
  if (m < 1 || t < 0 || r < 0.0) throw InputError("eta_t: need m >= 1, t >= 0, r >= 0");
  if (t >= m - 1) return eta_value(r, m, t);
  // t < m - 1: f(e^s) is a positive combination of exponentials in s, hence
  // convex; bisect on its slope.
  double lo = r > 0.0 ? std::log(r) : -700.0;
  if (eta_slope(lo, m, t) >= 0.0) return eta_value(std::exp(lo), m, t);
  double width = 1.0;
  double hi = lo + width;
  while (eta_slope(hi, m, t) < 0.0) {
    width *= 2.0;
    hi = lo + width;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (eta_slope(mid, m, t) < 0.0 ? lo : hi) = mid;
  }
  return eta_value(std::exp(0.5 * (lo + hi)), m, t);
}

double eta_const(const JordanForm& jf, EtaDirection direction, double tail_cutoff) {
  if (jf.max_abs_eigenvalue() >= 1.0) throw RegimeError("eta: matrix is not stable");
  const double series = eta_series(block_mags(jf, false), [](int) { return 1.0; }, tail_cutoff);
  return prefactor(jf, direction) * (1.0 + series);
}

double eta_inverse_const(const JordanForm& jf, EtaDirection direction, double tail_cutoff) {
  if (jf.min_abs_eigenvalue() <= 1.0) throw RegimeError("eta of the inverse: matrix is not explosive");
  const double series = eta_series(block_mags(jf, true), [](int) { return 1.0; }, tail_cutoff);
  return prefactor(jf, direction) * (1.0 + series);
}

Matrix lyap_solve(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& c) {
  if (a.rows() != a.cols() || c.rows() != a.rows() || c.cols() != a.cols()) {
    throw InputError("lyap_solve: A and C must be square of equal size");
  }
  if (a.size() == 0) return Matrix(0, 0);
  if (linalg::spectral_radius(a) >= 1.0) throw RegimeError("lyap_solve: A is not stable");
  Matrix X = c;
  Matrix Ak = a;
  for (int it = 0; it < 100; ++it) {
    const Matrix step = Ak * X * Ak.transpose();
    X += step;
    Ak = Ak * Ak;
    if (step.norm() <= 1e-16 * X.norm() || Ak.norm() == 0.0) {
      X = linalg::symmetrize(X);
      const double resid = (X - a * X * a.transpose() - c).norm();
      if (resid > 1e-12 * std::max(X.norm(), 1e-300) && resid > 1e-300) {
        throw NumericError("lyap_solve: residual above tolerance");
      }
      return X;
    }
  }
  throw NumericError("lyap_solve: doubling did not converge");
}

std::int64_t min_log_sample_size(double rhs, double k) {
  if (!std::isfinite(rhs)) throw NumericError("sample size: right-hand side is not finite");
  auto g = [k](std::int64_t n) {
    const long double x = static_cast<long double>(n);
    return k == 0.0 ? x : x / std::pow(std::log(x), static_cast<long double>(k));
  };
  const long double target = rhs;
  if (g(3) >= target) return 3;
  constexpr std::int64_t kMax = std::int64_t{1} << 62;
  const double turn = std::exp(k);
  if (turn >= static_cast<double>(kMax)) {
    throw SampleSizeOverflow("sample size exceeds the representable range", turn);
  }
  std::int64_t lo = std::max<std::int64_t>(3, static_cast<std::int64_t>(std::floor(turn)));
  std::int64_t hi = std::max<std::int64_t>(2 * lo, 4);
  while (g(hi) < target) {
    if (hi >= kMax / 2) {
      throw SampleSizeOverflow("sample size exceeds the representable range", static_cast<double>(hi));
    }
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (g(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

StableConstants stable_constants(const SystemSpec& spec) {
  spec.validate();
  require_deterministic_x0(spec);
  if (classify_regime(spec.A0) != Regime::stable) throw RegimeError("stable constants need a stable A0");
  const JordanForm jf = jordan_of(spec);
  const auto& tail = spec.noise.tail;
  const int p = spec.dimension();
  const Matrix C = spec.noise.covariance();

  StableConstants s;
  s.eta = eta_const(jf, EtaDirection::A);
  s.eta_transpose = eta_const(jf, EtaDirection::A_transpose);
  s.norm_A = linalg::norm2(spec.A0);
  s.lambda_max_C = linalg::sym_eig_extremes(C).second;
  s.x0_inf = spec.x0.value.size() ? spec.x0.value.cwiseAbs().maxCoeff() : 0.0;
  s.tail_factor = tail.bounded()
                      ? 1.0
                      : std::pow(tail.c2 * std::log(2.0 * clamped_c1(tail) * p), 4.0 / tail.alpha);
  const double x0f = std::max(s.x0_inf, 1.0);
  s.c1 = 288.0 * x0f * x0f * std::pow(s.eta, 2) * std::pow(s.eta_transpose, 4) *
         (s.norm_A * s.norm_A + 1.0) * (s.lambda_max_C + 1.0) * s.tail_factor * p *
         std::log(8.0 * p);
  const auto reach = spectral::reachability_gramian(spec.A0, C);
  s.k_min = reach.lambda_min;
  s.lyap = lyap_solve(spec.A0, C);
  if (!reach.reachable) throw RegimeError("c2 undefined: lambda_min(K(C)) = 0 (system not reachable)");
  s.c2 = 4.0 * s.c1 * std::max(s.norm_A * s.norm_A, 1.0) / (s.k_min * s.k_min) + 2.0;
  return s;
}

std::int64_t stable_sample_size(const SystemSpec& spec, double epsilon, double delta) {
  require_probability(epsilon, "epsilon");
  require_probability(delta, "delta");
  const StableConstants s = stable_constants(spec);
  const double k = log_exponent(spec.noise.tail);
  const double rhs = s.c2 / (epsilon * epsilon) * std::pow(-std::log(delta), 1.0 + k);
  return min_log_sample_size(rhs, k);
}

namespace {

// Rows: structurally possible entries (i, j) of f(Lambda^{-1}); columns: the
// coefficients a_1..a_p.
struct PsiProblem {
  CMatrix E;
  double scale = 1.0;  // 1 / ||P||_{2->inf}

  double objective(const Eigen::Ref<const Vector>& a) const {
    const double l1 = a.cwiseAbs().sum();
    if (l1 == 0.0) return kInf;
    return scale * (E * a.cast<Complex>()).cwiseAbs().maxCoeff() / l1;
  }
};

PsiProblem psi_problem(const JordanForm& jf) {
  if (jf.min_abs_eigenvalue() <= 1.0) throw RegimeError("psi: matrix is not explosive");
  const int p = jf.dimension();
  const CMatrix Linv = jf.lambda().inverse();
  std::vector<CMatrix> powers(static_cast<std::size_t>(p));
  powers[0] = CMatrix::Identity(p, p);
  for (int k = 1; k < p; ++k) powers[k] = powers[k - 1] * Linv;
  // Lambda^{-k} is block upper triangular; skip entries that vanish for all k.
  std::vector<std::pair<int, int>> entries;
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < p; ++i) {
      bool any = false;
      for (int k = 0; k < p && !any; ++k) any = std::abs(powers[k](i, j)) > 0.0;
      if (any) entries.emplace_back(i, j);
    }
  }
  PsiProblem prob;
  prob.E.resize(static_cast<Eigen::Index>(entries.size()), p);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    for (int k = 0; k < p; ++k) prob.E(e, k) = powers[k](entries[e].first, entries[e].second);
  }
  prob.scale = 1.0 / linalg::norm_2_to_inf(jf.P);
  return prob;
}

bool blocks_regular(const JordanForm& jf) {
  for (std::size_t a = 0; a < jf.blocks.size(); ++a) {
    for (std::size_t b = a + 1; b < jf.blocks.size(); ++b) {
      const Complex la = jf.blocks[a].eigenvalue, lb = jf.blocks[b].eigenvalue;
      if (std::abs(la) > 1.0 && std::abs(la - lb) <= 1e-12 * std::max(std::abs(la), 1.0)) return false;
    }
  }
  return true;
}

}  // namespace

double psi_objective(const JordanForm& jf, const Eigen::Ref<const Vector>& a) {
  const PsiProblem prob = psi_problem(jf);
  if (a.size() != prob.E.cols()) throw InputError("psi_objective: coefficient vector has wrong length");
  return prob.objective(a);
}

PsiEstimate psi_const(const JordanForm& jf, const PsiSearchOpts& opts) {
  const PsiProblem prob = psi_problem(jf);
  const int p = static_cast<int>(prob.E.cols());
  PsiEstimate est;

  // Certified bound: max|Ea| >= ||Ea||_2 / sqrt(R) >= sigma_min ||a||_2 / sqrt(R)
  // >= sigma_min ||a||_1 / sqrt(p R), with E split into real and imaginary rows.
  Matrix real_E(2 * prob.E.rows(), p);
  real_E << prob.E.real(), prob.E.imag();
  Eigen::JacobiSVD<Matrix> svd(real_E);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1), smax = sv(0);
  const double rows = static_cast<double>(prob.E.rows());
  est.lower_bound = prob.scale * smin / std::sqrt(p * rows);
  if (smin <= 1e-10 * smax && !blocks_regular(jf)) {
    est.value = 0.0;
    est.lower_bound = 0.0;
    return est;
  }

  // Stratified draws on the l1 sphere: sign pattern by index, Dirichlet(1)
  // magnitudes.
  Rng rng(opts.seed);
  const int samples = std::max(opts.samples, 1);
  std::vector<std::pair<double, Vector>> best;
  Vector a(p);
  for (int s = 0; s < samples; ++s) {
    const std::uint64_t pattern = p <= 30 ? static_cast<std::uint64_t>(s) % (std::uint64_t{1} << p) : rng.bits();
    for (int i = 0; i < p; ++i) {
      const double mag = rng.exponential();
      a(i) = ((pattern >> (i % 64)) & 1u) ? -mag : mag;
    }
    a /= a.cwiseAbs().sum();
    const double f = prob.objective(a);
    ++est.evaluations;
    if (static_cast<int>(best.size()) < opts.refine_starts || f < best.back().first) {
      best.emplace_back(f, a);
      std::sort(best.begin(), best.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      if (static_cast<int>(best.size()) > opts.refine_starts) best.pop_back();
    }
  }

  // Pattern search: single coordinates and pairwise transfers, shrinking step.
  double value = best.empty() ? kInf : best.front().first;
  for (auto [f, x] : best) {
    double step = 0.1;
    while (step > 1e-12) {
      bool moved = false;
      for (int i = 0; i < p && !moved; ++i) {
        for (int j = -1; j < p && !moved; ++j) {
          if (j == i) continue;
          for (double sign : {1.0, -1.0}) {
            Vector y = x;
            y(i) += sign * step;
            if (j >= 0) y(j) -= sign * step;
            const double l1 = y.cwiseAbs().sum();
            if (l1 == 0.0) continue;
            y /= l1;
            const double fy = prob.objective(y);
            ++est.evaluations;
            if (fy < f) {
              f = fy;
              x = y;
              moved = true;
              break;
            }
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    value = std::min(value, f);
  }
  est.value = value;
  return est;
}

double zeta_bar(const SystemSpec& spec, double delta) {
  require_probability(delta, "delta");
  require_deterministic_x0(spec);
  const JordanForm jf = jordan_of(spec);
  if (jf.min_abs_eigenvalue() <= 1.0) throw RegimeError("zeta_bar: matrix is not explosive");
  const int p = spec.dimension();
  const auto& tail = spec.noise.tail;
  auto weight = [&](int t) { return b_one(tail, p, delta / (2.0 * t * t)); };
  const double series = eta_series(block_mags(jf, true), weight, kEtaTailCutoff);
  return spec.x0.value.norm() + prefactor(jf, EtaDirection::A) * series;
}

std::vector<PhiEstimate> phi_quantiles(const SystemSpec& spec, const std::vector<double>& deltas,
                                       const MonteCarloOpts& mc) {
  spec.validate();
  require_deterministic_x0(spec);
  if (deltas.empty()) throw InputError("phi_quantile: no delta given");
  for (double d : deltas) require_probability(d, "delta");
  if (mc.samples < 1) throw InputError("phi_quantile: need at least one sample");
  const JordanForm jf = jordan_of(spec);
  if (jf.min_abs_eigenvalue() <= 1.0) throw RegimeError("phi: matrix is not explosive");
  const int p = spec.dimension();
  const auto reach = spectral::reachability_gramian(spec.A0, spec.noise.covariance());
  if (!reach.reachable) spdlog::warn("phi: (A0, C) is not reachable; phi may be 0");

  // Truncation: with probability >= 1 - delta/10 every coordinate of the
  // dropped remainder sum_{i>T} Lambda^{-i} P w(i) is below kPhiTruncation.
  const double dmin = *std::min_element(deltas.begin(), deltas.end());
  const double pinf = linalg::norm_inf(jf.P);
  int T = 1;
  eta_series(
      block_mags(jf, true),
      [&](int i) { return pinf * b_one(spec.noise.tail, p, dmin / (20.0 * i * i)); },
      kPhiTruncation, &T);

  const Matrix Ainv = spec.A0.inverse();
  std::vector<CMatrix> PA(static_cast<std::size_t>(T));
  CMatrix acc = jf.P;
  for (int i = 0; i < T; ++i) {
    acc = acc * Ainv.cast<Complex>();
    PA[i] = acc;
  }
  const CVector base = jf.P * spec.x0.value.cast<Complex>();

  const auto N = static_cast<std::size_t>(mc.samples);
  std::vector<double> mins(N);
  parallel_for(N, resolve_threads(mc.threads), [&](std::size_t k) {
    Rng rng(derive_seed(mc.seed, {static_cast<std::uint64_t>(k)}));
    CVector v = base;
    Vector w(p);
    for (int i = 0; i < T; ++i) {
      sample_noise_into(spec.noise, rng, w);
      v.noalias() += PA[i] * w.cast<Complex>();
    }
    mins[k] = v.cwiseAbs().minCoeff();
  });
  std::sort(mins.begin(), mins.end());

  std::vector<PhiEstimate> out;
  const double Nd = static_cast<double>(N);
  for (double d : deltas) {
    PhiEstimate e;
    e.delta = d;
    e.samples = static_cast<int>(N);
    e.truncation_T = T;
    e.phi_hat = quantile_sorted(mins, d * Nd);
    const double spread = 1.96 * std::sqrt(Nd * d * (1.0 - d));
    e.ci_lo = quantile_sorted(mins, std::floor(d * Nd - spread));
    e.ci_hi = quantile_sorted(mins, d * Nd + spread);
    e.standard_error = (e.ci_hi - e.ci_lo) / (2.0 * 1.96);
    e.zeta_bar = zeta_bar(spec, d);
    out.push_back(e);
  }
  return out;
}

PhiEstimate phi_quantile(const SystemSpec& spec, double delta, const MonteCarloOpts& mc) {
  return phi_quantiles(spec, {delta}, mc).front();
}

ExplosiveConstants explosive_constants(const SystemSpec& spec, const PsiSearchOpts& psi) {
  spec.validate();
  require_deterministic_x0(spec);
  if (classify_regime(spec.A0) != Regime::explosive) throw RegimeError("explosive constants need an explosive A0");
  const JordanForm jf = jordan_of(spec);
  const auto& tail = spec.noise.tail;
  const int p = spec.dimension();

  ExplosiveConstants e;
  e.lambda_min = jf.min_abs_eigenvalue();
  e.mu = jf.max_block_size();
  e.eta_inv = eta_inverse_const(jf, EtaDirection::A);
  e.eta_inv_transpose = eta_inverse_const(jf, EtaDirection::A_transpose);
  e.prefactor = prefactor(jf, EtaDirection::A);
  e.prefactor_transpose = prefactor(jf, EtaDirection::A_transpose);
  e.zeta_const = zeta_const_of(spec, jf, e.eta_inv);
  const double lmin = e.lambda_min;
  e.rho1 = 2.0 * (e.prefactor * e.eta_inv_transpose * e.eta_inv_transpose +
                  e.eta_inv * e.prefactor_transpose * e.prefactor_transpose) *
           std::exp(2.0 * lmin);
  e.rho2 = 2.0 * e.eta_inv_transpose * e.eta_inv_transpose * (2.0 + e.eta_inv) * e.prefactor *
           std::exp(lmin);
  e.psi = psi_const(jf, psi);

  // The logarithm log(c1 p) is taken at least 1 so the noise factor stays
  // meaningful for c1 p < e.
  const double noise_factor =
      tail.bounded() ? tail.bound
                     : std::pow(tail.c2 * std::max(std::log(clamped_c1(tail) * p), 1.0), 1.0 / tail.alpha);
  const double inv_alpha = tail.bounded() ? 0.0 : 1.0 / tail.alpha;
  e.n1 = (3.0 * std::log(e.rho1 * e.rho2 * std::pow(e.zeta_const, 3) * noise_factor) + 12.0 * e.mu +
          6.0 * inv_alpha) /
         lmin;
  e.n2 = e.n1 + 3.0 / lmin * std::log(2.0 * p * e.zeta_const * e.eta_inv / e.psi.value) +
         3.0 / lmin * std::log(e.prefactor * std::exp(lmin));
  return e;
}

namespace {

std::int64_t explosive_n(const ExplosiveConstants& c, const PhiEstimate& phi, const TailParams& tail,
                         double epsilon, double delta, double* coefficient = nullptr) {
  if (!(c.psi.value > 0.0)) {
    throw RegimeError("irregular or unreachable: identification inconsistent (psi = 0)");
  }
  if (!(phi.phi_hat > 0.0)) {
    throw RegimeError("irregular or unreachable: identification inconsistent (phi = 0)");
  }
  const double ratio = tail.bounded() ? 1.0 : (tail.alpha + 4.0) / tail.alpha;
  const double coef = 3.0 * ratio / std::log(c.lambda_min);
  if (coefficient) *coefficient = coef;
  const double need = std::max(coef * std::log(-std::log(delta) / (epsilon * phi.phi_hat)), c.n2);
  if (!std::isfinite(need)) throw NumericError("explosive sample size is not finite");
  if (need > 4e18) throw SampleSizeOverflow("sample size exceeds the representable range", need);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(need)));
}

std::int64_t general_n(const GeneralConstants& g, const PhiEstimate& phi, const TailParams& tail,
                       double epsilon, double delta) {
  if (!(g.explosive.psi.value > 0.0)) throw RegimeError("irregular: identification inconsistent (psi = 0)");
  if (!(phi.phi_hat > 0.0)) throw RegimeError("unreachable: identification inconsistent (phi = 0)");
  const double k = log_exponent(tail);
  const double R = g.c3 / (epsilon * epsilon) * (std::pow(-std::log(delta), 1.0 + k) - std::log(phi.phi_hat));
  return min_log_sample_size(std::max(R, g.n3), k);
}

}  // namespace

ExplosiveSampleSize explosive_sample_size(const SystemSpec& spec, double epsilon, double delta,
                                          const MonteCarloOpts& mc, const PsiSearchOpts& psi) {
  require_probability(epsilon, "epsilon");
  require_probability(delta, "delta");
  ExplosiveSampleSize out;
  out.constants = explosive_constants(spec, psi);
  if (!(out.constants.psi.value > 0.0)) {
    throw RegimeError("irregular or unreachable: identification inconsistent (psi = 0)");
  }
  out.phi = phi_quantile(spec, delta, mc);
  out.n = explosive_n(out.constants, out.phi, spec.noise.tail, epsilon, delta, &out.coefficient);
  return out;
}

std::pair<SystemSpec, SystemSpec> split_subsystems(const SystemSpec& spec, const SpectralSplit& split) {
  spec.validate();
  const int p1 = split.p1, p2 = split.p2;
  if (p1 + p2 != spec.dimension()) throw InputError("split does not match the system dimension");
  const Matrix S = split.M * spec.noise.C_sqrt;
  const Vector x0 = spec.x0.stochastic() ? Vector::Zero(spec.dimension()) : Vector(split.M * spec.x0.value);
  SystemSpec s1, s2;
  s1.A0 = split.A1;
  s2.A0 = split.A2;
  s1.noise = NoiseModel::shaped(spec.noise.kind, S.topRows(p1), spec.noise.shape);
  s2.noise = NoiseModel::shaped(spec.noise.kind, S.bottomRows(p2), spec.noise.shape);
  s1.x0 = spec.x0.stochastic() ? InitialState::gaussian(p1, spec.x0.sigma) : InitialState::fixed(x0.head(p1));
  s2.x0 = spec.x0.stochastic() ? InitialState::gaussian(p2, spec.x0.sigma) : InitialState::fixed(x0.tail(p2));
  if (spec.jordan && p1 > 0 && p2 > 0) {
    auto [j1, j2] = spectral::split_jordan(*spec.jordan, split);
    s1.jordan = std::move(j1);
    s2.jordan = std::move(j2);
  }
  return {s1, s2};
}

GeneralConstants general_constants(const SystemSpec& spec, const SpectralSplit& split,
                                   const PsiSearchOpts& psi) {
  if (split.p1 == 0 || split.p2 == 0) {
    throw RegimeError("degenerate split: use the stable or explosive prescription instead");
  }
  require_deterministic_x0(spec);
  if (!spectral::regularity_check(spec.A0)) throw RegimeError("A0 is not regular: identification inconsistent");
  const auto [s1, s2] = split_subsystems(spec, split);
  GeneralConstants g;
  g.K1 = lyap_solve(s1.A0, s1.noise.covariance());
  const auto [kmin, kmax] = linalg::sym_eig_extremes(g.K1);
  if (!(kmin > 0.0)) throw RegimeError("(A1, C11) is not reachable");
  g.rho0 = 0.5 - 0.5 * std::sqrt(1.0 - kmin / (9.0 * kmax));
  const double normM = linalg::norm2(split.M);
  g.rho3 = 4.0 * std::sqrt(4.0 / kmin + 3.0) * normM / (std::sqrt(kmin) * g.rho0);
  g.stable = stable_constants(s1);
  g.explosive = explosive_constants(s2, psi);
  const auto& tail = spec.noise.tail;
  const double ratio = tail.bounded() ? 1.0 : (tail.alpha + 4.0) / tail.alpha;
  const int p = spec.dimension();
  g.c3 = 72.0 * p * std::pow(std::max(normM, 1.0), 4) * g.rho3 * g.rho3 * g.stable.c2 +
         18.0 * ratio / std::log(g.explosive.lambda_min);
  g.n3 = 12.0 * (g.explosive.n2 + std::log(std::max(g.rho3 * linalg::norm_inf(split.M.cast<Complex>()), 1.0)));
  return g;
}

SampleSize general_sample_size(const SystemSpec& spec, double epsilon, double delta,
                               const MonteCarloOpts& mc, const PsiSearchOpts& psi) {
  require_probability(epsilon, "epsilon");
  require_probability(delta, "delta");
  SampleSize out;
  out.regime = classify_regime(spec.A0);
  if (out.regime == Regime::stable) {
    out.n = stable_sample_size(spec, epsilon, delta);
    return out;
  }
  if (out.regime == Regime::explosive) {
    const auto e = explosive_sample_size(spec, epsilon, delta, mc, psi);
    out.n = e.n;
    out.phi = e.phi;
    return out;
  }
  const SpectralSplit split = spectral::stable_explosive_split(spec.A0);
  const GeneralConstants g = general_constants(spec, split, psi);
  if (!(g.explosive.psi.value > 0.0)) throw RegimeError("irregular: identification inconsistent (psi = 0)");
  out.phi = phi_quantile(split_subsystems(spec, split).second, delta, mc);
  out.n = general_n(g, *out.phi, spec.noise.tail, epsilon, delta);
  return out;
}

double bernstein_bound(int p, double sigma_sq, double max_eig_bound, double y) {
  if (y <= 0.0) return 1.0;
  const double v = 2.0 * p * std::exp(-3.0 * y * y / (6.0 * sigma_sq + 2.0 * max_eig_bound * y));
  return std::clamp(v, 0.0, 1.0);
}

double azuma_bound(int p, double sigma_sq, double y) {
  if (y <= 0.0) return 1.0;
  return std::clamp(2.0 * p * std::exp(-y * y / (8.0 * sigma_sq)), 0.0, 1.0);
}

namespace {

template <typename Draw>
ConcentrationCheck concentration_check(int trials, const std::vector<double>& grid,
                                       std::uint64_t seed, int threads, Draw draw,
                                       const std::vector<double>& bound) {
  if (trials < 1) throw InputError("concentration check: trials must be >= 1");
  std::vector<double> lam(static_cast<std::size_t>(trials));
  parallel_for(lam.size(), resolve_threads(threads), [&](std::size_t k) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    lam[k] = draw(rng);
  });
  ConcentrationCheck c;
  c.grid = grid;
  c.bound = bound;
  c.trials = trials;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto hits = std::count_if(lam.begin(), lam.end(), [&](double v) { return v >= grid[g]; });
    const double freq = static_cast<double>(hits) / trials;
    c.empirical.push_back(freq);
    const double q = bound[g];
    if (freq > q + 3.0 * std::sqrt(q * (1.0 - q) / trials)) c.pass = false;
  }
  return c;
}

}  // namespace

ConcentrationCheck rademacher_check(int n, int p, int trials, const std::vector<double>& grid,
                                    std::uint64_t seed, int threads) {
  if (n < 1 || p < 1) throw InputError("rademacher_check: n and p must be positive");
  std::vector<double> bound;
  for (double y : grid) bound.push_back(bernstein_bound(p, n, 1.0, y));
  auto draw = [n, p](Rng& rng) {
    double best = -kInf;
    for (int j = 0; j < p; ++j) {
      // Sum of n signs = 2 * (#ones among n random bits) - n.
      int ones = 0;
      int left = n;
      while (left > 0) {
        std::uint64_t bits = rng.bits();
        if (left < 64) bits &= (std::uint64_t{1} << left) - 1;
        ones += std::popcount(bits);
        left -= 64;
      }
      best = std::max(best, 2.0 * ones - n);
    }
    return best;
  };
  return concentration_check(trials, grid, seed, threads, draw, bound);
}

ConcentrationCheck martingale_check(int n, int p, int trials, const std::vector<double>& grid,
                                    std::uint64_t seed, int threads) {
  if (n < 1 || p < 1) throw InputError("martingale_check: n and p must be positive");
  std::vector<double> bound;
  for (double y : grid) bound.push_back(azuma_bound(p, n, y));
  auto draw = [n, p](Rng& rng) {
    double best = -kInf;
    for (int j = 0; j < p; ++j) {
      double s = 0.0;
      for (int t = 0; t < n; ++t) {
        const double scale = s >= 0.0 ? 1.0 : 0.5;
        s += scale * rng.sign();
      }
      best = std::max(best, s);
    }
    return best;
  };
  return concentration_check(trials, grid, seed, threads, draw, bound);
}

BoundReport bound_report(const SystemSpec& spec, double epsilon, double delta,
                         const MonteCarloOpts& mc, const PsiSearchOpts& psi) {
  require_probability(epsilon, "epsilon");
  require_probability(delta, "delta");
  BoundReport r;
  r.regime = classify_regime(spec.A0);
  r.k_min = spectral::reachability_gramian(spec.A0, spec.noise.covariance()).lambda_min;
  auto settle = [&r](auto&& compute) {
    try {
      r.sample_size = compute();
    } catch (const SampleSizeOverflow& e) {
      r.sample_size_lower_bound = e.lower_bound();
    }
  };
  auto put_stable = [&r](const StableConstants& s) {
    r.eta = s.eta;
    r.eta_transpose = s.eta_transpose;
    r.lyap_matrix = s.lyap;
    r.c1_const = s.c1;
    r.c2_const = s.c2;
  };
  auto put_explosive = [&r](const ExplosiveConstants& e, const PhiEstimate& phi) {
    r.psi = e.psi.value;
    r.phi_hat = phi.phi_hat;
    r.zeta_bar = phi.zeta_bar;
    r.n1 = e.n1;
    r.n2 = e.n2;
  };

  if (r.regime == Regime::stable) {
    put_stable(stable_constants(spec));
    settle([&] { return stable_sample_size(spec, epsilon, delta); });
    return r;
  }
  if (r.regime == Regime::explosive) {
    const auto e = explosive_constants(spec, psi);
    if (!(e.psi.value > 0.0)) {
      throw RegimeError("irregular or unreachable: identification inconsistent (psi = 0)");
    }
    const auto phi = phi_quantile(spec, delta, mc);
    put_explosive(e, phi);
    settle([&] { return explosive_n(e, phi, spec.noise.tail, epsilon, delta); });
    return r;
  }
  const SpectralSplit split = spectral::stable_explosive_split(spec.A0);
  const auto g = general_constants(spec, split, psi);
  if (!(g.explosive.psi.value > 0.0)) throw RegimeError("irregular: identification inconsistent (psi = 0)");
  const auto phi = phi_quantile(split_subsystems(spec, split).second, delta, mc);
  put_stable(g.stable);
  r.lyap_matrix = g.K1;
  put_explosive(g.explosive, phi);
  r.rho0 = g.rho0;
  r.rho3 = g.rho3;
  r.c3_const = g.c3;
  r.n3 = g.n3;
  settle([&] { return general_n(g, phi, spec.noise.tail, epsilon, delta); });
  return r;
}

}  // namespace bounds
}  // namespace sysid
