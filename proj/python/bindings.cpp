#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sysid/bounds.hpp"
#include "sysid/dynamics.hpp"
#include "sysid/estimator.hpp"
#include "sysid/harness.hpp"
#include "sysid/noise.hpp"
#include "sysid/spectral.hpp"

namespace py = pybind11;
using namespace sysid;

namespace {

Trajectory trajectory_from(const Matrix& states) {
  Trajectory t;
  t.states = states;
  return t;
}

py::dict jordan_dict(const JordanForm& jf) {
  py::list blocks;
  for (const auto& b : jf.blocks) blocks.append(py::make_tuple(b.eigenvalue, b.size));
  py::dict d;
  d["blocks"] = blocks;
  d["P"] = jf.P;
  d["P_inv"] = jf.P_inv;
  d["exact"] = jf.exact;
  d["condition"] = jf.condition;
  d["residual"] = jf.residual;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "VAR(1) simulation, least-squares identification and finite-time bounds";

  // InputError and IoError fall through to ValueError / RuntimeError.
  py::register_exception<RegimeError>(m, "RegimeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

  // spectral
  m.def("eig_extremes", [](const Matrix& a) { return spectral::eig_extremes(a); });
  m.def("jordan_infer", [](const Matrix& a, double tol) { return jordan_dict(spectral::jordan_infer(a, tol)); },
        py::arg("a"), py::arg("cluster_tol") = 0.0);
  m.def("regularity_check", [](const Matrix& a, double gap) { return spectral::regularity_check(a, gap); },
        py::arg("a"), py::arg("unit_gap") = spectral::kDefaultUnitGap);
  m.def("reachability_gramian", [](const Matrix& a, const Matrix& c) {
    const auto r = spectral::reachability_gramian(a, c);
    return py::make_tuple(r.K, r.lambda_min, r.reachable);
  });
  m.def("stable_explosive_split", [](const Matrix& a, double gap) {
    const auto s = spectral::stable_explosive_split(a, gap);
    py::dict d;
    d["M"] = s.M;
    d["M_inv"] = s.M_inv;
    d["A1"] = s.A1;
    d["A2"] = s.A2;
    d["p1"] = s.p1;
    d["p2"] = s.p2;
    return d;
  }, py::arg("a"), py::arg("unit_gap") = spectral::kDefaultUnitGap);
  m.def("companion_embed", &spectral::companion_embed);
  m.def("mincoor", [](const CMatrix& a, double tol) { return spectral::mincoor(a, tol); }, py::arg("m"),
        py::arg("rel_tol") = spectral::kMincoorZeroTol);

  // noise
  py::class_<NoiseModel>(m, "NoiseModel")
      .def_static("gaussian", &NoiseModel::gaussian, py::arg("C"))
      .def_static("weibull", &NoiseModel::weibull, py::arg("alpha"), py::arg("c2"), py::arg("p"))
      .def_static("uniform", &NoiseModel::uniform, py::arg("B"), py::arg("p"))
      .def_property_readonly("kind", [](const NoiseModel& n) { return to_string(n.kind); })
      .def_property_readonly("tail", [](const NoiseModel& n) {
        return py::make_tuple(n.tail.c1, n.tail.c2, n.tail.alpha, n.tail.bound);
      })
      .def_property_readonly("covariance", &NoiseModel::covariance)
      .def("sample", [](const NoiseModel& n, int count, std::uint64_t seed) {
        Rng rng(seed);
        Matrix out(count, n.dimension());
        Vector w(n.dimension());
        for (int k = 0; k < count; ++k) {
          sample_noise_into(n, rng, w);
          out.row(k) = w.transpose();
        }
        return out;
      }, py::arg("count"), py::arg("seed") = 0);
  m.def("noise_sup_bound", [](double n, double delta, int p, double c1, double c2, double alpha, double bound) {
    return noise_sup_bound(n, delta, p, TailParams{c1, c2, alpha, bound});
  }, py::arg("n"), py::arg("delta"), py::arg("p"), py::arg("c1"), py::arg("c2"), py::arg("alpha"),
        py::arg("bound") = 0.0);

  // dynamics
  py::class_<SystemSpec>(m, "SystemSpec")
      .def(py::init([](const Matrix& A0, const NoiseModel& noise, std::optional<Vector> x0) {
        SystemSpec s;
        s.A0 = A0;
        s.noise = noise;
        s.x0 = x0 ? InitialState::fixed(*x0) : InitialState::zero(static_cast<int>(A0.rows()));
        s.validate();
        return s;
      }), py::arg("A0"), py::arg("noise"), py::arg("x0") = py::none())
      .def_readonly("A0", &SystemSpec::A0)
      .def_property_readonly("jordan", [](const SystemSpec& s) -> py::object {
        return s.jordan ? py::object(jordan_dict(*s.jordan)) : py::none();
      });
  m.def("make_system_from_jordan",
        [](const std::vector<std::pair<Complex, int>>& blocks, const Matrix& P, const NoiseModel& noise,
           std::optional<Vector> x0) {
          std::vector<JordanBlock> bs;
          for (const auto& [l, k] : blocks) bs.push_back({l, k});
          const int p = static_cast<int>(P.rows());
          return make_system_from_jordan(bs, P, noise, x0 ? InitialState::fixed(*x0) : InitialState::zero(p));
        }, py::arg("blocks"), py::arg("P"), py::arg("noise"), py::arg("x0") = py::none());
  m.def("random_wellconditioned", &random_wellconditioned, py::arg("p"), py::arg("seed"));
  m.def("simulate", [](const SystemSpec& s, int n, std::uint64_t seed) {
    const auto t = simulate(s, n, seed);
    py::dict d;
    d["states"] = t.states;
    d["noises"] = t.noises;
    d["overflowed_at"] = t.overflowed_at ? py::object(py::int_(*t.overflowed_at)) : py::none();
    return d;
  }, py::arg("spec"), py::arg("n"), py::arg("seed"));
  m.def("lqr_feedback", &lqr_feedback, py::arg("Ax"), py::arg("Au"));

  // estimator
  m.def("gram", [](const Matrix& states, int n) { return gram(trajectory_from(states), n); });
  m.def("ols", [](const Matrix& states, int n, double ridge, std::optional<Matrix> A0) {
    const auto r = ols(trajectory_from(states), n, ridge, A0 ? &*A0 : nullptr);
    py::dict d;
    d["A_hat"] = r.A_hat;
    d["gram_min_eig"] = r.gram_min_eig;
    d["error"] = r.error ? py::object(py::float_(*r.error)) : py::none();
    return d;
  }, py::arg("states"), py::arg("n"), py::arg("ridge") = 0.0, py::arg("A0") = py::none());
  m.def("error_norm", [](const Matrix& a, const Matrix& b) { return error_norm(a, b); });
  m.def("normalized_gram_explosive", [](const Matrix& states, const Matrix& A0, int n) {
    return normalized_gram_explosive(trajectory_from(states), A0, n);
  });

  // bounds
  m.def("eta_t", &bounds::eta_t, py::arg("r"), py::arg("m"), py::arg("t"));
  m.def("lyap_solve", [](const Matrix& a, const Matrix& c) { return bounds::lyap_solve(a, c); });
  m.def("bernstein_bound", &bounds::bernstein_bound, py::arg("p"), py::arg("sigma_sq"),
        py::arg("max_eig_bound"), py::arg("y"));
  m.def("azuma_bound", &bounds::azuma_bound, py::arg("p"), py::arg("sigma_sq"), py::arg("y"));
  m.def("_bound_report", [](const std::string& config) {
    const auto c = config_from_json(Json::parse(config));
    return bound_report_json(bounds::bound_report(c.system, c.epsilon, c.delta, c.phi)).dump();
  });

  // harness
  m.def("_run_montecarlo", [](const std::string& config, bool write) {
    const auto c = config_from_json(Json::parse(config));
    py::gil_scoped_release release;
    return summary_json(run_montecarlo(c, write)).dump();
  });
  m.def("fit_decay_rate", [](const std::vector<int>& ns, const std::vector<std::vector<double>>& errors,
                             const std::string& mode, int min_survivors) {
    const auto f = fit_decay_rate(ns, errors, decay_mode_from_string(mode), min_survivors);
    return py::make_tuple(f.slope, f.r_squared);
  }, py::arg("ns"), py::arg("errors"), py::arg("mode"), py::arg("min_survivors") = 50);
}
