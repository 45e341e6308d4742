#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sysid/bounds.hpp"
#include "sysid/dynamics.hpp"
#include "sysid/estimator.hpp"

namespace sysid {

using Json = nlohmann::json;

/// Which OLS path a campaign uses. `auto` picks the direct estimator for
/// stable systems and the split-coordinate normalized one otherwise.
enum class EstimatorPath { automatic, direct, normalized };

struct ExperimentConfig {
  SystemSpec system;
  std::vector<int> n_grid;
  int trials = 400;
  double epsilon = 0.1;
  double delta = 0.05;
  std::uint64_t master_seed = 0;
  std::filesystem::path outputs = "out";
  int threads = 0;
  EstimatorPath estimator = EstimatorPath::automatic;
  /// Attach the bounds-module sample size to the summary.
  bool prescribe = false;
  bounds::MonteCarloOpts phi;
  /// The parsed document, kept for hashing and for subcommand sections.
  Json raw;

  void validate() const;
};

/// Matrices are row-major nested lists. See README for the schema.
Matrix matrix_from_json(const Json& j);
Json matrix_to_json(const Eigen::Ref<const Matrix>& m);
SystemSpec system_from_json(const Json& j);
ExperimentConfig config_from_json(const Json& j);
/// Throws InputError if the file is missing or malformed.
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the compact dump of the document, as 16 hex digits. The
/// "threads" and "outputs" keys do not take part.
std::string config_hash(const Json& j);

enum class FailReason { none, error_exceeds_eps, singular_gram, overflow };
std::string to_string(FailReason reason);

struct TrialRecord {
  int n = 0;
  int trial = 0;
  double error = 0.0;  // NaN when no estimate was produced
  double gram_min_eig = 0.0;
  bool failed = false;
  FailReason reason = FailReason::none;
};

struct NSummary {
  int n = 0;
  int trials = 0;      // records at this n
  int overflowed = 0;  // flagged, excluded from fail_freq
  int failures = 0;
  double fail_freq = 0.0;
  double ci_lo = 0.0;  // two-sided 95% Clopper-Pearson
  double ci_hi = 1.0;
};

struct ExperimentReport {
  std::vector<TrialRecord> records;  // ordered by (n, trial)
  std::vector<NSummary> per_n;
  std::optional<double> slope;
  std::optional<std::int64_t> prescribed_n;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// One trial with seed derive_seed(master, {n, trial}). With a split the
/// normalized estimator is used, otherwise the direct one on a simulation.
TrialRecord run_trial(const SystemSpec& spec, const std::optional<SpectralSplit>& split, int n,
                      int trial, double epsilon, std::uint64_t master_seed);

/// Runs every (n, trial), writes campaign.csv and summary.json into
/// config.outputs (checked writable before any work).
ExperimentReport run_montecarlo(const ExperimentConfig& config, bool write = true);

/// Clopper-Pearson interval for k successes out of m.
std::pair<double, double> clopper_pearson(int k, int m, double level = 0.95);

enum class DecayMode { log_error_vs_n, loglog_error_vs_n };
std::string to_string(DecayMode mode);
DecayMode decay_mode_from_string(const std::string& name);

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares line through the median log-error per n, against n or log n.
/// Each n needs at least min_survivors positive finite errors and at least
/// four n must qualify; otherwise NumericError naming the starved points.
DecayFit fit_decay_rate(const std::vector<int>& ns, const std::vector<std::vector<double>>& errors,
                        DecayMode mode, int min_survivors = 50);
DecayFit fit_decay_rate(const ExperimentReport& report, DecayMode mode, int min_survivors = 50);

std::string campaign_csv(const ExperimentReport& report);
Json summary_json(const ExperimentReport& report);

/// t,x_1..x_p (and w_1..w_p when with_noise; empty at t = 0).
std::string trajectory_csv(const Trajectory& traj, bool with_noise = false);
Json estimate_json(const EstimateReport& report);
Json bound_report_json(const bounds::BoundReport& report);

struct SensitivityFiles {
  std::filesystem::path csv;
  std::filesystem::path plot;
  std::optional<double> crossing;
};

/// sensitivity.csv (magnitude,index,lambda_max) and sensitivity_plot.dat
/// (per magnitude: min, median, max of lambda_max).
SensitivityFiles sensitivity_report(const SensitivityCurve& scan, const std::filesystem::path& out);

/// Creates the directory and probes that a file can be written there.
void ensure_writable(const std::filesystem::path& dir);
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace sysid
