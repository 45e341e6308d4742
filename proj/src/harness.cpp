#include "sysid/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/beta.hpp>
#include <spdlog/spdlog.h>

#include "sysid/linalg.hpp"
#include "sysid/parallel.hpp"
#include "sysid/rng.hpp"

namespace sysid {
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json num_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

NoiseModel noise_from_json(const Json& j, int p) {
  const std::string kind_name = get_or<std::string>(j, "kind", "gaussian");
  const NoiseKind kind = noise_kind_from_string(kind_name);
  if (j.contains("C_sqrt")) {
    return NoiseModel::shaped(kind, matrix_from_json(j.at("C_sqrt")), get_or(j, "alpha", 2.0));
  }
  switch (kind) {
    case NoiseKind::gaussian: {
      if (j.contains("C")) return NoiseModel::gaussian(matrix_from_json(j.at("C")));
      const double sigma = get_or(j, "sigma", 1.0);
      return NoiseModel::gaussian(sigma * sigma * Matrix::Identity(p, p));
    }
    case NoiseKind::weibull_symmetric:
      return NoiseModel::weibull(get_or(j, "alpha", 1.0), get_or(j, "c2", 1.0), p);
    case NoiseKind::uniform_bounded:
      return NoiseModel::uniform(get_or(j, "B", 1.0), p);
  }
  throw InputError("unknown noise kind");
}

InitialState x0_from_json(const Json& j, const Matrix& A0, std::uint64_t default_seed) {
  const int p = static_cast<int>(A0.rows());
  if (j.is_null()) {
    bool stable = true;
    try {
      stable = classify_regime(A0) == Regime::stable;
    } catch (const RegimeError&) {
    }
    return stable ? InitialState::zero(p) : InitialState::fixed(random_unit_vector(p, default_seed));
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "zero") return InitialState::zero(p);
    if (s == "random_unit") return InitialState::fixed(random_unit_vector(p, default_seed));
    throw InputError("x0: unknown keyword '" + s + "'");
  }
  if (j.is_array()) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != p) throw InputError("x0 must have p entries");
    return InitialState::fixed(Eigen::Map<const Vector>(v.data(), p));
  }
  if (j.is_object()) {
    if (j.contains("random_unit")) {
      return InitialState::fixed(random_unit_vector(p, j.at("random_unit").get<std::uint64_t>()));
    }
    if (j.contains("gaussian")) return InitialState::gaussian(p, j.at("gaussian").get<double>());
  }
  throw InputError("x0: expected a list, \"zero\", \"random_unit\" or {\"gaussian\": sigma}");
}

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  return m;
}

bool is_explosive_path(const SystemSpec& spec, EstimatorPath path) {
  if (path == EstimatorPath::direct) return false;
  if (path == EstimatorPath::normalized) return true;
  return classify_regime(spec.A0) != Regime::stable;
}

}  // namespace

void ExperimentConfig::validate() const {
  system.validate();
  if (trials < 1) throw InputError("trials must be >= 1");
  if (n_grid.empty()) throw InputError("n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw InputError("n_grid entries must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw InputError("n_grid must be strictly increasing");
  }
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must be in (0, 1)");
}

Matrix matrix_from_json(const Json& j) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw InputError("matrix: expected a non-empty list of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const bool flat = j.front().is_number();
  const auto cols = flat ? Eigen::Index{1} : static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (flat) {
      m(i, 0) = row.get<double>();
      continue;
    }
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InputError("matrix: ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(num_or_null(m(i, c)));
    out.push_back(row);
  }
  return out;
}

SystemSpec system_from_json(const Json& j) {
  try {
    const std::uint64_t x0_seed = get_or<std::uint64_t>(j, "x0_seed", 1);
    if (j.contains("jordan")) {
      const Json& jj = j.at("jordan");
      std::vector<JordanBlock> blocks;
      for (const auto& b : jj.at("blocks")) {
        if (!b.is_array() || b.size() != 3) throw InputError("jordan block must be [re, im, size]");
        blocks.push_back({Complex(b[0].get<double>(), b[1].get<double>()), b[2].get<int>()});
      }
      int p = 0;
      for (const auto& b : blocks) p += b.size;
      const Json Pj = jj.contains("P") ? jj.at("P") : Json("random");
      const Matrix P = Pj.is_string() ? random_wellconditioned(p, get_or<std::uint64_t>(jj, "P_seed", 1))
                                      : matrix_from_json(Pj);
      // A0 is only known after construction; x0 defaults depend on it.
      SystemSpec spec = make_system_from_jordan(blocks, P, NoiseModel::gaussian(Matrix::Identity(p, p)),
                                                InitialState::zero(p));
      spec.noise = noise_from_json(get_or(j, "noise", Json::object()), p);
      spec.x0 = x0_from_json(get_or(j, "x0", Json()), spec.A0, x0_seed);
      spec.validate();
      return spec;
    }
    if (!j.contains("A0")) throw InputError("system needs either A0 or jordan");
    SystemSpec spec;
    spec.A0 = matrix_from_json(j.at("A0"));
    if (spec.A0.rows() != spec.A0.cols()) throw InputError("A0 must be square");
    const int p = spec.dimension();
    spec.noise = noise_from_json(get_or(j, "noise", Json::object()), p);
    spec.x0 = x0_from_json(get_or(j, "x0", Json()), spec.A0, x0_seed);
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    throw InputError(std::string("system: ") + e.what());
  }
}

ExperimentConfig config_from_json(const Json& j) {
  try {
    ExperimentConfig c;
    c.raw = j;
    if (!j.contains("system")) throw InputError("config has no system section");
    c.system = system_from_json(j.at("system"));
    if (j.contains("n_grid")) c.n_grid = j.at("n_grid").get<std::vector<int>>();
    c.trials = get_or(j, "trials", c.trials);
    c.epsilon = get_or(j, "epsilon", c.epsilon);
    c.delta = get_or(j, "delta", c.delta);
    c.master_seed = get_or<std::uint64_t>(j, "master_seed", 0);
    c.outputs = get_or<std::string>(j, "outputs", "out");
    c.threads = get_or(j, "threads", 0);
    c.prescribe = get_or(j, "prescribe", false);
    const std::string est = get_or<std::string>(j, "estimator", "auto");
    if (est == "auto") {
      c.estimator = EstimatorPath::automatic;
    } else if (est == "direct") {
      c.estimator = EstimatorPath::direct;
    } else if (est == "normalized") {
      c.estimator = EstimatorPath::normalized;
    } else {
      throw InputError("estimator must be auto, direct or normalized");
    }
    c.phi.samples = get_or(j, "phi_samples", c.phi.samples);
    c.phi.seed = get_or<std::uint64_t>(j, "phi_seed", derive_seed(c.master_seed, {~std::uint64_t{0}}));
    c.phi.threads = c.threads;
    if (c.n_grid.empty()) c.n_grid = {100};
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const Json& j) {
  Json key = j;
  if (key.is_object()) {
    key.erase("threads");
    key.erase("outputs");
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : key.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string to_string(FailReason reason) {
  switch (reason) {
    case FailReason::none: return "";
    case FailReason::error_exceeds_eps: return "error_exceeds_eps";
    case FailReason::singular_gram: return "singular_gram";
    case FailReason::overflow: return "overflow";
  }
  return "";
}

TrialRecord run_trial(const SystemSpec& spec, const std::optional<SpectralSplit>& split, int n,
                      int trial, double epsilon, std::uint64_t master_seed) {
  TrialRecord rec;
  rec.n = n;
  rec.trial = trial;
  rec.error = std::nan("");
  const std::uint64_t seed =
      derive_seed(master_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)});
  try {
    EstimateReport est;
    if (split) {
      est = ols_normalized(spec, *split, draw_noise_path(spec, n, seed), n);
    } else {
      const Trajectory traj = simulate(spec, n, seed);
      if (traj.overflowed_at) {
        rec.failed = true;
        rec.reason = FailReason::overflow;
        return rec;
      }
      est = ols(traj, n, 0.0, &spec.A0);
    }
    rec.error = *est.error;
    rec.gram_min_eig = est.gram_min_eig;
    if (!(rec.error <= epsilon)) {
      rec.failed = true;
      rec.reason = FailReason::error_exceeds_eps;
    }
  } catch (const SingularGramError& e) {
    rec.gram_min_eig = e.lambda_min();
    rec.failed = true;
    rec.reason = FailReason::singular_gram;
  }
  return rec;
}

std::pair<double, double> clopper_pearson(int k, int m, double level) {
  if (m <= 0) return {0.0, 1.0};
  const double a = 0.5 * (1.0 - level);
  const double lo = k == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<>(k, m - k + 1), a);
  const double hi = k == m ? 1.0 : boost::math::quantile(boost::math::beta_distribution<>(k + 1, m - k), 1.0 - a);
  return {lo, hi};
}

ExperimentReport run_montecarlo(const ExperimentConfig& config, bool write) {
  config.validate();
  if (write) ensure_writable(config.outputs);
  const SystemSpec& spec = config.system;

  std::optional<SpectralSplit> split;
  if (is_explosive_path(spec, config.estimator)) split = spectral::stable_explosive_split(spec.A0);

  ExperimentReport report;
  report.seed = config.master_seed;
  report.config_hash = config_hash(config.raw);
  const std::size_t T = static_cast<std::size_t>(config.trials);
  report.records.resize(config.n_grid.size() * T);
  parallel_for(report.records.size(), resolve_threads(config.threads), [&](std::size_t k) {
    const int n = config.n_grid[k / T];
    report.records[k] = run_trial(spec, split, n, static_cast<int>(k % T), config.epsilon,
                                  config.master_seed);
  });

  for (std::size_t g = 0; g < config.n_grid.size(); ++g) {
    NSummary s;
    s.n = config.n_grid[g];
    s.trials = config.trials;
    for (std::size_t t = 0; t < T; ++t) {
      const auto& r = report.records[g * T + t];
      if (r.reason == FailReason::overflow) {
        ++s.overflowed;
      } else if (r.failed) {
        ++s.failures;
      }
    }
    const int m = s.trials - s.overflowed;
    s.fail_freq = m > 0 ? static_cast<double>(s.failures) / m : std::nan("");
    std::tie(s.ci_lo, s.ci_hi) = clopper_pearson(s.failures, m);
    if (s.overflowed > 0) spdlog::warn("n = {}: {} trials overflowed and are excluded", s.n, s.overflowed);
    report.per_n.push_back(s);
  }

  const bool explosive = classify_regime(spec.A0) == Regime::explosive;
  try {
    report.slope = fit_decay_rate(report, explosive ? DecayMode::log_error_vs_n : DecayMode::loglog_error_vs_n)
                       .slope;
  } catch (const NumericError& e) {
    spdlog::info("no decay fit: {}", e.what());
  }
  if (config.prescribe) {
    try {
      report.prescribed_n = bounds::general_sample_size(spec, config.epsilon, config.delta, config.phi).n;
    } catch (const std::exception& e) {
      spdlog::warn("no prescribed sample size: {}", e.what());
    }
  }

  if (write) {
    write_text(config.outputs / "campaign.csv", campaign_csv(report));
    write_text(config.outputs / "summary.json", summary_json(report).dump(2) + "\n");
  }
  return report;
}

std::string to_string(DecayMode mode) {
  return mode == DecayMode::log_error_vs_n ? "log_error_vs_n" : "loglog_error_vs_n";
}

DecayMode decay_mode_from_string(const std::string& name) {
  if (name == "log_error_vs_n") return DecayMode::log_error_vs_n;
  if (name == "loglog_error_vs_n") return DecayMode::loglog_error_vs_n;
  throw InputError("unknown decay mode '" + name + "'");
}

DecayFit fit_decay_rate(const std::vector<int>& ns, const std::vector<std::vector<double>>& errors,
                        DecayMode mode, int min_survivors) {
  if (ns.size() != errors.size()) throw InputError("fit_decay_rate: ns and errors differ in length");
  std::vector<double> xs, ys;
  std::vector<int> starved;
  for (std::size_t g = 0; g < ns.size(); ++g) {
    std::vector<double> logs;
    for (double e : errors[g]) {
      if (std::isfinite(e) && e > 0.0) logs.push_back(std::log(e));
    }
    if (static_cast<int>(logs.size()) < min_survivors) {
      starved.push_back(ns[g]);
      continue;
    }
    xs.push_back(mode == DecayMode::log_error_vs_n ? ns[g] : std::log(static_cast<double>(ns[g])));
    ys.push_back(median_of(std::move(logs)));
  }
  if (xs.size() < 4) {
    std::ostringstream msg;
    msg << "fit_decay_rate: need 4 grid points with " << min_survivors << " surviving trials; starved n =";
    for (int n : starved) msg << ' ' << n;
    throw NumericError(msg.str());
  }
  if (!starved.empty()) spdlog::warn("fit_decay_rate: skipping {} starved grid points", starved.size());
  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw NumericError("fit_decay_rate: degenerate grid");
  DecayFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = syy - fit.slope * sxy;
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

DecayFit fit_decay_rate(const ExperimentReport& report, DecayMode mode, int min_survivors) {
  std::vector<int> ns;
  std::vector<std::vector<double>> errors;
  for (const auto& s : report.per_n) {
    ns.push_back(s.n);
    errors.emplace_back();
  }
  for (const auto& r : report.records) {
    const auto it = std::find(ns.begin(), ns.end(), r.n);
    if (it != ns.end() && r.reason != FailReason::overflow && r.reason != FailReason::singular_gram) {
      errors[static_cast<std::size_t>(it - ns.begin())].push_back(r.error);
    }
  }
  return fit_decay_rate(ns, errors, mode, min_survivors);
}

std::string campaign_csv(const ExperimentReport& report) {
  std::string out = "n,trial,error,gram_min_eig,failed,reason\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.n) + ',' + std::to_string(r.trial) + ',' + num(r.error) + ',' +
           num(r.gram_min_eig) + ',' + (r.failed ? "1" : "0") + ',' + to_string(r.reason) + '\n';
  }
  return out;
}

Json summary_json(const ExperimentReport& report) {
  Json per_n = Json::array();
  for (const auto& s : report.per_n) {
    per_n.push_back({{"n", s.n},
                     {"fail_freq", num_or_null(s.fail_freq)},
                     {"ci_lo", s.ci_lo},
                     {"ci_hi", s.ci_hi},
                     {"trials", s.trials},
                     {"overflowed", s.overflowed}});
  }
  Json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["per_n"] = per_n;
  j["slope"] = report.slope ? num_or_null(*report.slope) : Json(nullptr);
  j["prescribed_n"] = report.prescribed_n ? Json(*report.prescribed_n) : Json(nullptr);
  return j;
}

std::string trajectory_csv(const Trajectory& traj, bool with_noise) {
  const auto p = traj.states.rows();
  std::string out = "t";
  for (Eigen::Index i = 1; i <= p; ++i) out += ",x_" + std::to_string(i);
  if (with_noise) {
    for (Eigen::Index i = 1; i <= p; ++i) out += ",w_" + std::to_string(i);
  }
  out += '\n';
  for (Eigen::Index t = 0; t < traj.states.cols(); ++t) {
    out += std::to_string(t);
    for (Eigen::Index i = 0; i < p; ++i) out += ',' + num(traj.states(i, t));
    if (with_noise) {
      for (Eigen::Index i = 0; i < p; ++i) out += ',' + (t > 0 ? num(traj.noises(i, t - 1)) : std::string());
    }
    out += '\n';
  }
  return out;
}

Json estimate_json(const EstimateReport& report) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < report.A_hat.rows(); ++i) {
    for (Eigen::Index c = 0; c < report.A_hat.cols(); ++c) a.push_back(report.A_hat(i, c));
  }
  return {{"n", report.n},
          {"error", report.error ? num_or_null(*report.error) : Json(nullptr)},
          {"gram_min_eig", report.gram_min_eig},
          {"a_hat", a}};
}

Json bound_report_json(const bounds::BoundReport& r) {
  Json j;
  j["regime"] = to_string(r.regime);
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = num_or_null(*v);
  };
  put("eta", r.eta);
  put("eta_transpose", r.eta_transpose);
  put("k_min", r.k_min);
  if (r.lyap_matrix) j["lyap_matrix"] = matrix_to_json(*r.lyap_matrix);
  put("c1_const", r.c1_const);
  put("c2_const", r.c2_const);
  put("psi", r.psi);
  put("phi_hat", r.phi_hat);
  put("zeta_bar", r.zeta_bar);
  put("n1", r.n1);
  put("n2", r.n2);
  put("rho0", r.rho0);
  put("rho3", r.rho3);
  put("c3_const", r.c3_const);
  put("n3", r.n3);
  j["sample_size"] = r.sample_size ? Json(*r.sample_size) : Json(nullptr);
  put("sample_size_lower_bound", r.sample_size_lower_bound);
  return j;
}

SensitivityFiles sensitivity_report(const SensitivityCurve& scan, const fs::path& out) {
  if (scan.points.empty()) throw InputError("sensitivity_report: empty scan");
  ensure_writable(out);
  SensitivityFiles files;
  files.csv = out / "sensitivity.csv";
  files.plot = out / "sensitivity_plot.dat";
  files.crossing = scan.crossing();

  std::string csv = "magnitude,index,lambda_max\n";
  std::vector<double> mags;
  for (const auto& pt : scan.points) {
    csv += num(pt.magnitude) + ',' + std::to_string(pt.index) + ',' + num(pt.lambda_max) + '\n';
    if (std::find(mags.begin(), mags.end(), pt.magnitude) == mags.end()) mags.push_back(pt.magnitude);
  }
  std::sort(mags.begin(), mags.end());
  std::string plot = "# mode " + to_string(scan.mode) + "\n# nominal_lambda_max " +
                     num(scan.nominal_lambda_max) + "\n# crossing " +
                     (files.crossing ? num(*files.crossing) : std::string("none")) +
                     "\n# magnitude min median max\n";
  for (double m : mags) {
    std::vector<double> vals;
    for (const auto& pt : scan.points) {
      if (pt.magnitude == m && std::isfinite(pt.lambda_max)) vals.push_back(pt.lambda_max);
    }
    if (vals.empty()) {
      plot += num(m) + " nan nan nan\n";
      continue;
    }
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    plot += num(m) + ' ' + num(*lo) + ' ' + num(median_of(vals)) + ' ' + num(*hi) + '\n';
  }
  write_text(files.csv, csv);
  write_text(files.plot, plot);
  return files;
}

void ensure_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("output directory '" + dir.string() + "' cannot be created");
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + file.string() + "'");
  f << text;
  if (!f) throw IoError("write to '" + file.string() + "' failed");
}

}  // namespace sysid
