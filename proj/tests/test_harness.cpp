#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sysid/harness.hpp"

using namespace sysid;
namespace fs = std::filesystem;

namespace {

Json tiny_config(const fs::path& out) {
  Json j = Json::parse(R"({
    "system": {"A0": [[0.5, 0.1], [0.0, 0.3]], "noise": {"kind": "gaussian", "C": [[1, 0], [0, 1]]}, "x0": "zero"},
    "n_grid": [10, 20, 40, 80],
    "trials": 60,
    "epsilon": 0.3,
    "delta": 0.1,
    "master_seed": 7
  })");
  j["outputs"] = out.string();
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sysid_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, ParsesSystem) {
  const auto cfg = config_from_json(tiny_config("x"));
  EXPECT_EQ(cfg.system.dimension(), 2);
  EXPECT_EQ(cfg.n_grid, (std::vector<int>{10, 20, 40, 80}));
  EXPECT_EQ(cfg.trials, 60);
  EXPECT_EQ(cfg.system.A0(0, 1), 0.1);
  EXPECT_EQ(cfg.master_seed, 7u);
}

TEST(Config, Rejects) {
  auto j = tiny_config("x");
  j["n_grid"] = {20, 10};
  EXPECT_THROW(config_from_json(j), InputError);
  j = tiny_config("x");
  j["trials"] = 0;
  EXPECT_THROW(config_from_json(j), InputError);
  j = tiny_config("x");
  j["system"]["A0"] = {{1, 2, 3}};
  EXPECT_THROW(config_from_json(j), InputError);
  EXPECT_THROW(load_config("/nonexistent/path.cfg"), InputError);
}

TEST(Config, JordanSystem) {
  const auto j = Json::parse(R"({"jordan": {"blocks": [[0.5, 0, 1], [2.0, 0, 1]], "P": "random", "P_seed": 11},
                                 "noise": {"kind": "gaussian", "C": [[1, 0], [0, 1]]}, "x0": "random_unit"})");
  const auto spec = system_from_json(j);
  ASSERT_TRUE(spec.jordan.has_value());
  EXPECT_TRUE(spec.jordan->exact);
  EXPECT_NEAR(spec.x0.value.norm(), 1.0, 1e-14);
}

TEST(Config, HashStable) {
  const auto a = tiny_config("x"), b = tiny_config("x");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_EQ(config_hash(a), config_hash(tiny_config("y")));
  auto c = tiny_config("x");
  c["master_seed"] = 8;
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Matrix, JsonRoundTrip) {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6.25;
  EXPECT_EQ(matrix_from_json(matrix_to_json(m)), m);
  EXPECT_THROW(matrix_from_json(Json::parse("[[1, 2], [3]]")), InputError);
}

// Oracle: the binomial CDF at the interval endpoints equals the tail level.
TEST(ClopperPearson, EndpointsMatchBinomialTails) {
  for (auto [k, m] : std::vector<std::pair<int, int>>{{0, 20}, {3, 40}, {17, 50}, {400, 400}, {5, 400}}) {
    const auto [lo, hi] = clopper_pearson(k, m);
    EXPECT_LE(lo, static_cast<double>(k) / m);
    EXPECT_GE(hi, static_cast<double>(k) / m);
    if (k > 0) EXPECT_NEAR(boost::math::cdf(boost::math::complement(boost::math::binomial(m, lo), k - 1)), 0.025, 1e-8);
    if (k < m) EXPECT_NEAR(boost::math::cdf(boost::math::binomial(m, hi), k), 0.025, 1e-8);
  }
  EXPECT_EQ(clopper_pearson(0, 20).first, 0.0);
  EXPECT_EQ(clopper_pearson(20, 20).second, 1.0);
}

TEST(DecayFit, RecoversSyntheticSlopes) {
  std::vector<int> ns = {100, 200, 400, 800, 1600};
  std::vector<std::vector<double>> errs;
  for (int n : ns) {
    std::vector<double> e;
    for (int k = 0; k < 60; ++k) e.push_back(3.0 * std::pow(n, -0.5) * std::exp(0.01 * (k - 30)));
    errs.push_back(e);
  }
  auto fit = fit_decay_rate(ns, errs, DecayMode::loglog_error_vs_n);
  EXPECT_NEAR(fit.slope, -0.5, 1e-12);
  EXPECT_NEAR(fit.intercept, std::log(3.0) - 0.005, 1e-10);  // median offset of the spread
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);

  ns = {8, 10, 12, 14, 16};
  errs.clear();
  for (int n : ns) errs.push_back(std::vector<double>(60, std::exp(-0.7 * n)));
  fit = fit_decay_rate(ns, errs, DecayMode::log_error_vs_n);
  EXPECT_NEAR(fit.slope, -0.7, 1e-12);
}

TEST(DecayFit, StarvedPoints) {
  const std::vector<int> ns = {1, 2, 3, 4};
  std::vector<std::vector<double>> errs(4, std::vector<double>(60, 0.1));
  errs[2] = std::vector<double>(10, 0.1);
  try {
    fit_decay_rate(ns, errs, DecayMode::log_error_vs_n);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("starved n = 3"), std::string::npos);
  }
  EXPECT_THROW(decay_mode_from_string("linear"), InputError);
}

TEST(Campaign, GoldenSchema) {
  const auto out = scratch("golden");
  const auto rep = run_montecarlo(config_from_json(tiny_config(out)));
  const std::string csv = slurp(out / "campaign.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "n,trial,error,gram_min_eig,failed,reason");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5) << line;
  }
  EXPECT_EQ(rows, 4 * 60);
  const auto summary = Json::parse(slurp(out / "summary.json"));
  for (const char* key : {"config_hash", "seed", "per_n", "slope", "prescribed_n"}) EXPECT_TRUE(summary.contains(key)) << key;
  ASSERT_EQ(summary["per_n"].size(), 4u);
  for (const auto& e : summary["per_n"]) {
    for (const char* key : {"n", "fail_freq", "ci_lo", "ci_hi", "trials", "overflowed"}) EXPECT_TRUE(e.contains(key)) << key;
    EXPECT_LE(e["ci_lo"].get<double>(), e["fail_freq"].get<double>());
    EXPECT_GE(e["ci_hi"].get<double>(), e["fail_freq"].get<double>());
  }
  EXPECT_EQ(summary["seed"].get<std::uint64_t>(), 7u);
  ASSERT_TRUE(rep.slope.has_value());
  EXPECT_LT(*rep.slope, 0.0);
  EXPECT_GT(rep.per_n.front().fail_freq, rep.per_n.back().fail_freq);
}

TEST(Campaign, DeterministicAcrossThreads) {
  const auto a = scratch("det1"), b = scratch("det4");
  auto ja = tiny_config(a), jb = tiny_config(b);
  ja["threads"] = 1;
  jb["threads"] = 4;
  run_montecarlo(config_from_json(ja));
  run_montecarlo(config_from_json(jb));
  EXPECT_EQ(slurp(a / "campaign.csv"), slurp(b / "campaign.csv"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
}

TEST(Campaign, RerunIdentical) {
  const auto a = scratch("rerun");
  const auto cfg = config_from_json(tiny_config(a));
  run_montecarlo(cfg);
  const auto first = slurp(a / "campaign.csv") + slurp(a / "summary.json");
  run_montecarlo(cfg);
  EXPECT_EQ(first, slurp(a / "campaign.csv") + slurp(a / "summary.json"));
}

TEST(Campaign, UnwritableOutput) {
  auto cfg = config_from_json(tiny_config("/proc/sysid_cannot_write_here"));
  EXPECT_THROW(run_montecarlo(cfg), IoError);
}

TEST(Campaign, TrialSeedIndependentOfOrder) {
  const auto cfg = config_from_json(tiny_config("x"));
  const auto rep = run_montecarlo(cfg, false);
  const auto& r = rep.records[2 * 60 + 17];
  const auto again = run_trial(cfg.system, std::nullopt, r.n, r.trial, cfg.epsilon, cfg.master_seed);
  EXPECT_EQ(r.n, 40);
  EXPECT_EQ(again.error, r.error);
  EXPECT_EQ(again.gram_min_eig, r.gram_min_eig);
}

TEST(Output, TrajectoryCsv) {
  Trajectory t;
  t.states = Matrix(1, 3);
  t.states << 1.0, 0.1, 2.0 / 3.0;
  t.noises = Matrix(1, 2);
  t.noises << -0.5, 1e-300;
  EXPECT_EQ(trajectory_csv(t), "t,x_1\n0,1\n1,0.10000000000000001\n2,0.66666666666666663\n");
  EXPECT_EQ(trajectory_csv(t, true),
            "t,x_1,w_1\n0,1,\n1,0.10000000000000001,-0.5\n2,0.66666666666666663,1e-300\n");
}

TEST(Output, EstimateJson) {
  EstimateReport r;
  r.A_hat = Matrix::Identity(2, 2);
  r.n = 12;
  r.gram_min_eig = 3.5;
  r.error = 0.25;
  const auto j = estimate_json(r);
  EXPECT_EQ(j["n"], 12);
  EXPECT_EQ(j["error"], 0.25);
  EXPECT_EQ(j["gram_min_eig"], 3.5);
  EXPECT_EQ(j["a_hat"].dump(), "[1.0,0.0,0.0,1.0]");
}

TEST(Output, SensitivityReport) {
  SensitivityCurve c;
  c.nominal_lambda_max = 0.4;
  c.points = {{0.01, 0, 0.5}, {0.01, 1, 0.7}, {0.02, 0, 1.2}, {0.02, 1, 0.8}};
  const auto out = scratch("sens");
  const auto files = sensitivity_report(c, out);
  ASSERT_TRUE(files.crossing.has_value());
  EXPECT_EQ(*files.crossing, 0.02);
  const std::string csv = slurp(files.csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "magnitude,index,lambda_max");
  EXPECT_TRUE(fs::exists(files.plot));
}
