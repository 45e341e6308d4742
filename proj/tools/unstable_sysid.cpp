#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include <spdlog/spdlog.h>

#include "sysid/bounds.hpp"
#include "sysid/harness.hpp"
#include "sysid/rng.hpp"

using namespace sysid;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 0;
};

ExperimentConfig load(const Globals& g) {
  if (g.config.empty()) throw InputError("--config is required");
  ExperimentConfig c = load_config(g.config);
  if (g.seed) {
    c.master_seed = *g.seed;
    c.raw["master_seed"] = *g.seed;
  }
  if (g.out) c.outputs = *g.out;
  if (g.threads > 0) c.threads = c.phi.threads = g.threads;
  return c;
}

int horizon(const ExperimentConfig& c, int n) { return n > 0 ? n : c.n_grid.back(); }

int cmd_simulate(const Globals& g, int n, bool with_noise) {
  const ExperimentConfig c = load(g);
  ensure_writable(c.outputs);
  const Trajectory traj = simulate(c.system, horizon(c, n), c.master_seed);
  const fs::path file = c.outputs / "trajectory.csv";
  write_text(file, trajectory_csv(traj, with_noise));
  if (traj.overflowed_at) spdlog::warn("state overflow at t = {}; trajectory truncated", *traj.overflowed_at);
  std::cout << file.string() << '\n';
  return 0;
}

int cmd_estimate(const Globals& g, int n) {
  const ExperimentConfig c = load(g);
  const int h = horizon(c, n);
  EstimateReport est;
  if (classify_regime(c.system.A0) == Regime::stable) {
    const Trajectory traj = simulate(c.system, h, c.master_seed);
    if (traj.overflowed_at) throw NumericError("state overflow before the horizon");
    est = ols(traj, h, 0.0, &c.system.A0);
  } else {
    const auto split = spectral::stable_explosive_split(c.system.A0);
    est = ols_normalized(c.system, split, draw_noise_path(c.system, h, c.master_seed), h);
  }
  std::cout << estimate_json(est).dump(2) << '\n';
  return 0;
}

int cmd_bounds(const Globals& g) {
  const ExperimentConfig c = load(g);
  const auto report = bounds::bound_report(c.system, c.epsilon, c.delta, c.phi);
  std::cout << bound_report_json(report).dump(2) << '\n';
  return 0;
}

int cmd_montecarlo(const Globals& g) {
  const ExperimentConfig c = load(g);
  const auto report = run_montecarlo(c);
  std::cout << summary_json(report).dump(2) << '\n';
  return 0;
}

int cmd_sensitivity(const Globals& g) {
  const ExperimentConfig c = load(g);
  const Json s = c.raw.value("sensitivity", Json::object());
  SensitivityCurve curve;
  Json extra;
  if (s.contains("search")) {
    const Json& q = s.at("search");
    const auto found = search_fragile_instance(q.value("p", 3), q.value("r", 2), q.value("max_magnitude", 0.05),
                                               q.value("trials", 20), c.master_seed,
                                               q.value("max_attempts", 200), c.threads);
    if (!found) throw NumericError("no fragile instance found within the attempt budget");
    curve = found->curve;
    extra = {{"Ax", matrix_to_json(found->system.Ax)},
             {"Au", matrix_to_json(found->system.Au)},
             {"attempts", found->attempts}};
  } else {
    if (!s.contains("Ax") || !s.contains("Au")) throw InputError("sensitivity needs Ax and Au, or a search block");
    ControlSystem cs;
    cs.Ax = matrix_from_json(s.at("Ax"));
    cs.Au = matrix_from_json(s.at("Au"));
    cs.L = lqr_feedback(cs.Ax, cs.Au);
    const auto mode = perturb_mode_from_string(s.value("mode", "global_awgn"));
    const auto mags = s.value("magnitudes", std::vector<double>{0.0, 0.01, 0.02, 0.03, 0.04, 0.05});
    curve = sensitivity_scan(cs, mode, mags, s.value("trials", 20), c.master_seed, c.threads);
  }
  const auto files = sensitivity_report(curve, c.outputs);
  Json j = {{"mode", to_string(curve.mode)},
            {"nominal_lambda_max", curve.nominal_lambda_max},
            {"crossing", files.crossing ? Json(*files.crossing) : Json(nullptr)},
            {"csv", files.csv.string()},
            {"plot", files.plot.string()}};
  if (!extra.is_null()) j.update(extra);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_check_tails(const Globals& g) {
  const ExperimentConfig c = load(g);
  const Json t = c.raw.value("tails", Json::object());
  const int samples = t.value("samples", 100000);
  const auto grid = t.value("grid", std::vector<double>{0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0});
  const int p = c.system.dimension();
  Matrix draws(samples, p);
  Rng rng(c.master_seed);
  Vector w(p);
  for (int k = 0; k < samples; ++k) {
    sample_noise_into(c.system.noise, rng, w);
    draws.row(k) = w.transpose();
  }
  const auto report = verify_tail(draws, c.system.noise.tail, grid);
  Json emp = Json::array();
  for (Eigen::Index r = 0; r < report.empirical.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index i = 0; i < report.empirical.cols(); ++i) row.push_back(report.empirical(r, i));
    emp.push_back(row);
  }
  const Json j = {{"samples", report.samples}, {"grid", report.grid},     {"bound", report.bound},
                  {"empirical", emp},          {"pass", report.pass}};
  std::cout << j.dump(2) << '\n';
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation, least-squares identification and finite-time bounds for VAR(1) systems",
               "unstable-sysid"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "master seed, overrides the config");
  app.add_option("--out", g.out, "output directory, overrides the config");
  app.add_option("--threads", g.threads, "worker threads (default: $UNSTABLE_SYSID_THREADS or all cores)");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  int n = 0;
  bool with_noise = false;
  auto* sim = app.add_subcommand("simulate", "simulate one trajectory and write trajectory.csv");
  sim->add_option("-n,--horizon", n, "horizon (default: last entry of n_grid)");
  sim->add_flag("--with-noise", with_noise, "also write the noise columns");
  auto* est = app.add_subcommand("estimate", "simulate and print the least-squares estimate");
  est->add_option("-n,--horizon", n, "horizon (default: last entry of n_grid)");
  auto* bnd = app.add_subcommand("bounds", "print every constant and the sample size for (epsilon, delta)");
  auto* mc = app.add_subcommand("montecarlo", "run the campaign over n_grid x trials");
  auto* sens = app.add_subcommand("sensitivity", "closed-loop sensitivity scan");
  auto* tails = app.add_subcommand("check-tails", "check the noise tail condition empirically");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*sim) return cmd_simulate(g, n, with_noise);
    if (*est) return cmd_estimate(g, n);
    if (*bnd) return cmd_bounds(g);
    if (*mc) return cmd_montecarlo(g);
    if (*sens) return cmd_sensitivity(g);
    if (*tails) return cmd_check_tails(g);
  } catch (const InputError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const RegimeError& e) {
    std::cerr << "regime error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  std::cerr << app.help();
  return 2;
}
