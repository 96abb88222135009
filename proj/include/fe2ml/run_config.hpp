#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "fe2ml/fe2.hpp"

namespace fe2ml {

/// Parsed `run` configuration. Relative paths are resolved against the
/// directory of the configuration file.
struct RunConfig {
  std::filesystem::path macro_mesh;
  std::filesystem::path rve_mesh;
  std::filesystem::path material;
  std::filesystem::path model;
  std::filesystem::path out;
  ProviderMode mode = ProviderMode::Direct;
  TangentPolicy tangent_policy = TangentPolicy::PerIteration;
  BoundaryMode rve_bc = BoundaryMode::Periodic;
  LoadSchedule load;
  ConstraintSet fixed;
  double tol = 1e-8;
  int max_iter = 25;
  double rve_tol = 1e-10;
  int rve_max_iter = 25;
  std::optional<double> training_amplitude;
  double offline_seconds = 0.0;
  std::string hash;  // FNV-1a of the canonical document
};

/// Throws ConfigError naming the offending field path.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Loads meshes/material/model, runs the simulation and fills provenance.
SimulationResult execute_run(const RunConfig& cfg, unsigned threads = 0);

/// Writes the results JSON to cfg.out and the displacement CSV next to it
/// (same stem, .csv extension).
void write_run_outputs(const RunConfig& cfg, const SimulationResult& result);

/// RVE from a mesh file, using its material table or, if absent, `material`.
RveProblem load_rve(const std::filesystem::path& mesh_path, const std::filesystem::path& material_path,
                    BoundaryMode mode);

}  // namespace fe2ml
