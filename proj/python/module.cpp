#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fe2ml/dataset.hpp"
#include "fe2ml/errors.hpp"
#include "fe2ml/fe2.hpp"
#include "fe2ml/mlp.hpp"
#include "fe2ml/run_config.hpp"
#include "fe2ml/rve.hpp"

namespace py = pybind11;
using namespace fe2ml;

namespace {

py::array_t<double> to_numpy(const Tensor4& t) {
  py::array_t<double> out({2, 2, 2, 2});
  auto view = out.mutable_unchecked<4>();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) view(a, b, c, d) = t(a, b, c, d);
  return out;
}

}  // namespace

PYBIND11_MODULE(_fe2ml, m) {
  m.doc() = "Two-scale neo-Hookean homogenization with a neural-network RVE surrogate";
  m.attr("__version__") = FE2ML_VERSION;

  py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidDeformation>(m, "InvalidDeformation", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<MaterialParams>(m, "MaterialParams")
      .def(py::init([](double lambda, double mu) {
             MaterialParams p{lambda, mu};
             p.validate();
             return p;
           }),
           py::arg("lam"), py::arg("mu"))
      .def_readwrite("lam", &MaterialParams::lambda)
      .def_readwrite("mu", &MaterialParams::mu);

  m.def("activation", &activation);
  m.def("cauchy_neo_hookean",
        [](const Tensor2& F, const MaterialParams& mat) { return cauchy_neo_hookean(kinematics_from_F(F), mat); });
  m.def("first_pk_from_cauchy", &first_pk_from_cauchy, py::arg("sigma"), py::arg("F"));
  m.def("first_pk", &first_pk, py::arg("F"), py::arg("mat"));
  m.def("material_tangent", [](const Tensor2& F, const MaterialParams& mat) { return to_numpy(material_tangent(F, mat)); });
  m.def(
      "material_tangent_fd",
      [](const MaterialParams& mat, const Tensor2& F, double h) { return to_numpy(material_tangent_fd(mat, F, h)); },
      py::arg("mat"), py::arg("F"), py::arg("h") = 1e-6);

  py::class_<Mesh>(m, "Mesh")
      .def_property_readonly("num_nodes", &Mesh::num_nodes)
      .def_property_readonly("num_elements", &Mesh::num_elements)
      .def_readonly("boundary_nodes", &Mesh::boundary_nodes)
      .def_property_readonly("nodes", [](const Mesh& mesh) {
        Eigen::MatrixX2d X(static_cast<Eigen::Index>(mesh.num_nodes()), 2);
        for (std::size_t i = 0; i < mesh.num_nodes(); ++i) X.row(static_cast<Eigen::Index>(i)) = mesh.nodes[i];
        return X;
      });
  m.def(
      "write_mesh",
      [](const std::filesystem::path& p, const Mesh& mesh) { write_mesh_file(p, mesh); }, py::arg("path"),
      py::arg("mesh"));
  m.def("structured_mesh", &structured_mesh, py::arg("nx"), py::arg("ny"), py::arg("width") = 1.0,
        py::arg("height") = 1.0);

  py::enum_<BoundaryMode>(m, "BoundaryMode")
      .value("Affine", BoundaryMode::Affine)
      .value("Periodic", BoundaryMode::Periodic);

  py::class_<RveProblem, std::shared_ptr<RveProblem>>(m, "RveProblem")
      .def(py::init<Mesh, const MaterialParams&, BoundaryMode>(), py::arg("mesh"), py::arg("material"),
           py::arg("mode") = BoundaryMode::Periodic)
      .def_property_readonly("volume", &RveProblem::volume)
      .def_property_readonly("mode", &RveProblem::mode);
  m.def(
      "inclusion_rve",
      [](std::size_t n, std::size_t cells, const MaterialParams& matrix, const MaterialParams& inclusion,
         BoundaryMode mode) { return std::make_shared<RveProblem>(inclusion_rve(n, cells, matrix, inclusion, mode)); },
      py::arg("n"), py::arg("inclusion_cells"), py::arg("matrix"), py::arg("inclusion"),
      py::arg("mode") = BoundaryMode::Periodic);

  m.def(
      "homogenize",
      [](const RveProblem& rve, const Tensor2& F, bool with_tangent, double tol) {
        auto r = homogenize(rve, F, with_tangent, {tol, 25});
        py::dict out;
        out["P"] = r.P;
        out["C"] = r.C ? py::object(to_numpy(*r.C)) : py::none();
        out["iterations"] = r.solution.report.iterations;
        return out;
      },
      py::arg("rve"), py::arg("F"), py::arg("with_tangent") = false, py::arg("tol") = 1e-10);

  m.def(
      "sample_deformation_gradients",
      [](std::size_t n, double amplitude, double min_det, std::uint64_t seed) {
        return sample_deformation_gradients({n, amplitude, min_det, seed});
      },
      py::arg("n_samples"), py::arg("amplitude") = 0.15, py::arg("min_det") = 0.5, py::arg("seed") = 0);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("F", &Dataset::F)
      .def_readonly("P", &Dataset::P)
      .def("__len__", &Dataset::size)
      .def("to_csv", &dataset_to_csv);
  m.def(
      "generate_dataset",
      [](const RveProblem& rve, const std::vector<Tensor2>& samples, double tol, unsigned threads) {
        return generate_dataset(rve, samples, {tol, 25}, threads);
      },
      py::arg("rve"), py::arg("samples"), py::arg("tol") = 1e-10, py::arg("threads") = 0);

  py::class_<MlpNetwork, std::shared_ptr<MlpNetwork>>(m, "MlpNetwork")
      .def_readonly("layer_sizes", &MlpNetwork::layer_sizes)
      .def_property_readonly("num_parameters", &MlpNetwork::num_parameters)
      .def("forward", &forward)
      .def("input_jacobian", &input_jacobian)
      .def("surrogate_pk", &surrogate_pk)
      .def(
          "surrogate_tangent",
          [](const MlpNetwork& net, const Tensor2& F) { return to_numpy(surrogate_tangent(net, F)); })
      .def("save", [](const MlpNetwork& net, const std::filesystem::path& p) { save_network(p, net); });
  m.def("load_network", [](const std::filesystem::path& p) { return std::make_shared<MlpNetwork>(load_network(p)); });
  m.def(
      "init_nguyen_widrow",
      [](std::vector<std::size_t> sizes, std::uint64_t seed) {
        return std::make_shared<MlpNetwork>(init_nguyen_widrow(std::move(sizes), seed));
      },
      py::arg("layer_sizes"), py::arg("seed") = 0);
  m.def(
      "train",
      [](const MlpNetwork& initial, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
         int max_iterations, double target_mse) {
        MlpNetwork net = initial;
        TrainingData data{inputs, targets};
        fit_normalization(net, data);
        TrainingConfig cfg;
        cfg.max_iterations = max_iterations;
        cfg.target_mse = target_mse;
        auto [trained, report] = train_lm(std::move(net), data, cfg);
        py::dict rep;
        rep["final_mse"] = report.final_mse;
        rep["iterations_used"] = report.iterations_used;
        rep["mse_history"] = report.mse_history;
        rep["stop_reason"] = report.stop_reason;
        return py::make_tuple(std::make_shared<MlpNetwork>(std::move(trained)), rep);
      },
      py::arg("network"), py::arg("inputs"), py::arg("targets"), py::arg("max_iterations") = 500,
      py::arg("target_mse") = 1e-7);

  m.def(
      "run_config",
      [](const std::filesystem::path& config, bool write_outputs) {
        const auto cfg = load_run_config(config);
        const auto result = execute_run(cfg);
        if (write_outputs) write_run_outputs(cfg, result);
        return result_to_json(result).dump();
      },
      py::arg("config"), py::arg("write_outputs") = true,
      "Run a simulation config; returns the results document as a JSON string.");
  m.def(
      "compare_results",
      [](const std::string& a, const std::string& b) {
        const auto report = compare_runs(result_from_json(nlohmann::json::parse(a)),
                                         result_from_json(nlohmann::json::parse(b)));
        return comparison_to_json(report).dump();
      },
      "Compare two results documents (JSON strings); returns the report as a JSON string.");
}
