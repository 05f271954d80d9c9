#include <optional>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "meshfix/calibrate.hpp"
#include "meshfix/correct.hpp"
#include "meshfix/decompose.hpp"
#include "meshfix/json_io.hpp"
#include "meshfix/ringfilter.hpp"
#include "meshfix/stats.hpp"

namespace py = pybind11;
using namespace meshfix;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) { return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>()); }

py::dict calibrate_chip(int n, const std::string& layout, std::uint64_t seed, double sigma_bs) {
  ChipConfig cfg;
  cfg.n = n;
  cfg.layout = layout_from_string(layout);
  cfg.detectors = cfg.layout == Layout::Rectangular ? DetectorKind::Coherent : DetectorKind::Intensity;
  cfg.sigma_bs = sigma_bs;
  cfg.seed = seed;
  ChipModel chip = ChipModel::random(cfg);
  const CalibrationRecord rec = cfg.layout == Layout::Rectangular ? calibrate_mesh(chip) : calibrate_reck(chip);
  py::dict out;
  out["record"] = to_py(record_to_json(rec));
  out["estimated_errors"] = rec.error_map();
  out["true_errors"] = chip.truth().errors;
  return out;
}

}  // namespace

PYBIND11_MODULE(_meshfix, m) {
  m.doc() = "Error correction for programmable photonic meshes";

  py::class_<MziSettings>(m, "MziSettings")
      .def(py::init<double, double>(), py::arg("theta") = 0.0, py::arg("phi") = 0.0)
      .def_readwrite("theta", &MziSettings::theta)
      .def_readwrite("phi", &MziSettings::phi);

  py::class_<SplitterErrors>(m, "SplitterErrors")
      .def(py::init<double, double>(), py::arg("alpha") = 0.0, py::arg("beta") = 0.0)
      .def_readwrite("alpha", &SplitterErrors::alpha)
      .def_readwrite("beta", &SplitterErrors::beta)
      .def("__repr__", [](const SplitterErrors& e) {
        return "SplitterErrors(alpha=" + std::to_string(e.alpha) + ", beta=" + std::to_string(e.beta) + ")";
      });

  py::class_<MeshProgram>(m, "MeshProgram")
      .def_property_readonly("n", [](const MeshProgram& p) { return p.topology.n; })
      .def_property_readonly("layout", [](const MeshProgram& p) { return to_string(p.topology.layout); })
      .def_readwrite("settings", &MeshProgram::settings)
      .def_readwrite("output_phases", &MeshProgram::output_phases)
      .def("to_json", [](const MeshProgram& p) { return to_py(program_to_json(p)); })
      .def_static("from_json", [](const py::object& o) { return program_from_json(from_py(o)); });

  py::class_<CorrectionReport>(m, "CorrectionReport")
      .def_readonly("corrected_program", &CorrectionReport::corrected_program)
      .def_readonly("n_clipped", &CorrectionReport::n_clipped)
      .def_readonly("predicted_residual", &CorrectionReport::predicted_residual);

  m.def("haar_random_unitary", &haar_random_unitary, py::arg("n"), py::arg("seed"));
  m.def(
      "decompose", [](const CMatrix& U, const std::string& layout) { return decompose(U, layout_from_string(layout)).program; },
      py::arg("unitary"), py::arg("layout") = "rectangular");
  m.def(
      "mesh_unitary",
      [](const MeshProgram& p, const std::optional<ErrorMap>& e) { return e ? mesh_unitary(p, *e) : mesh_unitary(p); },
      py::arg("program"), py::arg("errors") = py::none());
  m.def("random_error_map", &random_error_map, py::arg("count"), py::arg("sigma"), py::arg("correlation") = 0.0,
        py::arg("seed") = 1);
  m.def("correct_mesh", &correct_mesh, py::arg("program"), py::arg("errors"));
  m.def(
      "correct_theta",
      [](double theta, const SplitterErrors& e) {
        const ThetaCorrection t = correct_theta(theta, e);
        return py::make_tuple(t.theta_prime, t.clipped != Clip::None);
      },
      py::arg("theta"), py::arg("errors"));
  m.def("matrix_error", &matrix_error, py::arg("hardware"), py::arg("target"));
  m.def("expected_error", &expected_error, py::arg("n"), py::arg("sigma"));
  m.def("expected_corrected_error", &expected_corrected_error, py::arg("n"), py::arg("sigma"));
  m.def("theta_cdf", &theta_cdf, py::arg("n"), py::arg("xi"));
  m.def("calibrate_chip", &calibrate_chip, py::arg("n"), py::arg("layout") = "rectangular", py::arg("seed") = 1,
        py::arg("sigma_bs") = 0.02);

  m.def(
      "train_tdc",
      [](double target, int rings, int budget, int restarts, std::uint64_t seed) {
        TrainOptions o;
        o.budget = budget;
        o.restarts = restarts;
        o.seed = seed;
        const TrainResult r = train_ideal(target, default_array(rings), o);
        json j = ring_array_to_json(r.spec);
        j["gdd"] = r.gdd;
        j["converged"] = r.converged;
        return to_py(j);
      },
      py::arg("target_gdd") = -85.0, py::arg("n_rings") = 15, py::arg("budget") = 40000, py::arg("restarts") = 5,
      py::arg("seed") = 1);
  m.def(
      "tdc_gdd",
      [](const py::object& spec, double sigma, std::uint64_t seed, bool correct, int points) {
        RingArraySpec s = ring_array_from_json(from_py(spec));
        if (sigma > 0) s = apply_errors_and_correct(s, random_ring_errors(s, sigma, seed), correct);
        const GddProfile p = evaluate_gdd(s, points);
        py::dict out;
        out["lambda_nm"] = p.lambda_nm;
        out["tau_ps"] = [&] {
          std::vector<double> t(p.tau);
          for (double& x : t) x *= 1e12;
          return t;
        }();
        out["gdd"] = p.fit.gdd;
        return out;
      },
      py::arg("spec"), py::arg("sigma") = 0.0, py::arg("seed") = 1, py::arg("correct") = true,
      py::arg("points") = 201);

  py::register_exception<UnitarityError>(m, "UnitarityError", PyExc_ValueError);
  py::register_exception<CalibrationError>(m, "CalibrationError", PyExc_RuntimeError);
}
