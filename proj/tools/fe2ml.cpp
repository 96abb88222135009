// Command-line front end: gen-mesh, gen-data, train, run, compare.
// Exit codes: 0 success, 1 user/config error, 2 solver or training failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fe2ml/dataset.hpp"
#include "fe2ml/errors.hpp"
#include "fe2ml/fe2.hpp"
#include "fe2ml/mlp.hpp"
#include "fe2ml/run_config.hpp"

#ifndef FE2ML_VERSION
#define FE2ML_VERSION "unknown"
#endif

namespace {

using namespace fe2ml;

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kSolverError = 2;

BoundaryMode parse_bc(const std::string& s) {
  if (s == "periodic") return BoundaryMode::Periodic;
  if (s == "affine") return BoundaryMode::Affine;
  throw ConfigError("--bc must be periodic or affine");
}

std::vector<std::size_t> parse_hidden(const std::string& spec) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      sizes.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--hidden expects a comma-separated list of positive integers, got '" + spec + "'");
    }
  }
  if (sizes.empty()) throw ConfigError("--hidden must name at least one hidden layer");
  return sizes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale FE homogenization with a neural-network RVE surrogate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("fe2ml ") + FE2ML_VERSION);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  // gen-mesh
  auto* gen_mesh = app.add_subcommand("gen-mesh", "Write a structured quad mesh");
  std::size_t nx = 1, ny = 1, inclusion_cells = 0;
  double width = 1.0, height = 1.0, stiff_ratio = 10.0;
  std::string mesh_out, mesh_material;
  gen_mesh->add_option("--nx", nx)->required()->check(CLI::PositiveNumber);
  gen_mesh->add_option("--ny", ny)->required()->check(CLI::PositiveNumber);
  gen_mesh->add_option("--width", width)->check(CLI::PositiveNumber);
  gen_mesh->add_option("--height", height)->check(CLI::PositiveNumber);
  gen_mesh->add_option("--out", mesh_out)->required();
  gen_mesh->add_option("--inclusion-cells", inclusion_cells, "Centred stiff inclusion size in elements");
  gen_mesh->add_option("--material", mesh_material, "Matrix material (needed with --inclusion-cells)");
  gen_mesh->add_option("--stiff-ratio", stiff_ratio, "Inclusion / matrix stiffness ratio")->check(CLI::PositiveNumber);

  // gen-data
  auto* gen_data = app.add_subcommand("gen-data", "Sample deformation gradients and solve the RVE for each");
  std::string rve_path, material_path, data_out, bc = "periodic";
  SamplingSpec sampling;
  double data_tol = 1e-10;
  gen_data->add_option("--rve", rve_path)->required();
  gen_data->add_option("--material", material_path);
  gen_data->add_option("--samples", sampling.n_samples);
  gen_data->add_option("--amplitude", sampling.amplitude);
  gen_data->add_option("--min-det", sampling.min_det);
  gen_data->add_option("--seed", sampling.seed);
  gen_data->add_option("--bc", bc, "periodic or affine");
  gen_data->add_option("--tol", data_tol, "RVE Newton tolerance");
  gen_data->add_option("--out", data_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Fit the surrogate with Levenberg-Marquardt");
  std::string train_data, hidden = "16,16", model_out;
  TrainingConfig tcfg;
  train->add_option("--data", train_data)->required();
  train->add_option("--hidden", hidden);
  train->add_option("--max-iter", tcfg.max_iterations);
  train->add_option("--target-mse", tcfg.target_mse);
  train->add_option("--seed", tcfg.seed);
  train->add_option("--lambda0", tcfg.lm_lambda0);
  train->add_option("--lambda-factor", tcfg.lm_lambda_factor);
  train->add_option("--out", model_out)->required();

  // run
  auto* run = app.add_subcommand("run", "Run the two-scale simulation described by a config file");
  std::string config_path;
  run->add_option("--config", config_path)->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Compare two result files");
  std::string result_a, result_b, compare_out;
  compare->add_option("--a", result_a)->required();
  compare->add_option("--b", result_b)->required();
  compare->add_option("--out", compare_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUserError;
  }

  try {
    if (*gen_mesh) {
      Mesh mesh = structured_mesh(nx, ny, width, height);
      std::vector<MaterialParams> materials;
      if (inclusion_cells > 0) {
        if (mesh_material.empty()) throw ConfigError("--inclusion-cells requires --material");
        const auto mat = read_material_file(mesh_material);
        mark_centered_inclusion(mesh, nx, ny, inclusion_cells);
        materials = {mat, {stiff_ratio * mat.lambda, stiff_ratio * mat.mu}};
      }
      write_mesh_file(mesh_out, mesh, materials);
      std::printf("wrote %zu nodes, %zu elements, %zu boundary nodes to %s\n", mesh.num_nodes(), mesh.num_elements(),
                  mesh.boundary_nodes.size(), mesh_out.c_str());
    } else if (*gen_data) {
      const auto rve = load_rve(rve_path, material_path, parse_bc(bc));
      const auto samples = sample_deformation_gradients(sampling);
      GenerationReport report;
      const auto data = generate_dataset(rve, samples, {data_tol, 25}, threads, &report);
      write_dataset(data_out, data);
      std::printf("converged %zu failed %zu duplicates %zu rows %zu\n", report.converged, report.failed,
                  report.duplicates, data.size());
      for (const auto& d : report.diagnostics) std::fprintf(stderr, "warning: %s\n", d.c_str());
    } else if (*train) {
      const auto start = std::chrono::steady_clock::now();
      const auto data = read_dataset(train_data);
      const auto td = to_training_data(data);
      auto sizes = parse_hidden(hidden);
      sizes.insert(sizes.begin(), 4);
      sizes.push_back(4);
      tcfg.threads = threads;
      auto net = init_nguyen_widrow(sizes, tcfg.seed);
      fit_normalization(net, td);
      std::ifstream raw(train_data, std::ios::binary);
      std::ostringstream bytes;
      bytes << raw.rdbuf();
      net.meta.dataset_hash = fnv1a_hex(bytes.str());
      auto [trained, report] = train_lm(std::move(net), td, tcfg);
      save_network(model_out, trained);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("final_mse %.9e\niterations %d\nstop %s\nseconds %.3f\n", report.final_mse, report.iterations_used,
                  report.stop_reason.c_str(), seconds);
    } else if (*run) {
      const auto cfg = load_run_config(config_path);
      const auto result = execute_run(cfg, threads);
      write_run_outputs(cfg, result);
      std::printf("increments %zu/%d online_seconds %.3f extrapolation_warnings %zu\n", result.increments.size(),
                  cfg.load.n_increments, result.online_seconds, result.extrapolation_warnings());
      if (!result.completed()) {
        std::fprintf(stderr, "error: increment %d failed: %s\n", result.failure->step, result.failure->message.c_str());
        return kSolverError;
      }
    } else if (*compare) {
      const auto a = result_from_json(read_json_file(result_a));
      const auto b = result_from_json(read_json_file(result_b));
      const auto report = compare_runs(a, b);
      write_text_file(compare_out, comparison_to_json(report).dump(1) + "\n");
      std::fputs(comparison_table(report).c_str(), stdout);
    }
  } catch (const NonConvergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverError;
  } catch (const DatasetGenerationFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    for (const auto& d : e.diagnostics()) std::fprintf(stderr, "  %s\n", d.c_str());
    return kSolverError;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverError;
  } catch (const SingularSystem& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverError;
  } catch (const GaussPointFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverError;
  } catch (const ElementInversion& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  }
  return kOk;
}
