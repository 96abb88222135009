#include "fe2ml/run_config.hpp"

#include <set>

#include "fe2ml/dataset.hpp"
#include "fe2ml/errors.hpp"

namespace fe2ml {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const json& require(const json& doc, const char* key, const std::string& where) {
  if (!doc.contains(key)) throw ConfigError(where + "." + key + ": required field missing");
  return doc[key];
}

std::string string_field(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

double number_field(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

std::int64_t integer_field(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<std::int64_t>();
}

fs::path path_field(const json& v, const std::string& where, const fs::path& base) {
  fs::path p = string_field(v, where);
  return p.is_relative() && !base.empty() ? base / p : p;
}

int component_field(const json& v, const std::string& where) {
  const auto c = integer_field(v, where);
  if (c != 0 && c != 1) throw ConfigError(where + ": component must be 0 or 1");
  return static_cast<int>(c);
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  const std::string root = "config";
  if (!doc.is_object()) throw ConfigError(root + ": expected a JSON object");
  static const std::set<std::string> known = {"macro_mesh", "rve_mesh", "material", "mode", "model",
                                              "tangent_policy", "load", "increments", "tol", "out",
                                              "max_iter", "rve_bc", "rve_tol", "rve_max_iter",
                                              "training_amplitude", "offline_seconds"};
  for (const auto& [key, value] : doc.items())
    if (!known.count(key)) throw ConfigError(root + "." + key + ": unknown field");

  RunConfig cfg;
  cfg.macro_mesh = path_field(require(doc, "macro_mesh", root), root + ".macro_mesh", base_dir);
  cfg.out = path_field(require(doc, "out", root), root + ".out", base_dir);

  const auto mode = string_field(require(doc, "mode", root), root + ".mode");
  if (mode == "direct") {
    cfg.mode = ProviderMode::Direct;
    cfg.rve_mesh = path_field(require(doc, "rve_mesh", root), root + ".rve_mesh", base_dir);
    if (doc.contains("material")) cfg.material = path_field(doc["material"], root + ".material", base_dir);
  } else if (mode == "surrogate") {
    cfg.mode = ProviderMode::Surrogate;
    cfg.model = path_field(require(doc, "model", root), root + ".model", base_dir);
  } else {
    throw ConfigError(root + ".mode: expected \"direct\" or \"surrogate\"");
  }

  if (doc.contains("tangent_policy")) {
    const auto p = string_field(doc["tangent_policy"], root + ".tangent_policy");
    if (p == "initial")
      cfg.tangent_policy = TangentPolicy::Initial;
    else if (p == "per_iteration")
      cfg.tangent_policy = TangentPolicy::PerIteration;
    else
      throw ConfigError(root + ".tangent_policy: expected \"initial\" or \"per_iteration\"");
  }
  if (doc.contains("rve_bc")) {
    const auto b = string_field(doc["rve_bc"], root + ".rve_bc");
    if (b == "periodic")
      cfg.rve_bc = BoundaryMode::Periodic;
    else if (b == "affine")
      cfg.rve_bc = BoundaryMode::Affine;
    else
      throw ConfigError(root + ".rve_bc: expected \"periodic\" or \"affine\"");
  }

  const auto& load = require(doc, "load", root);
  const std::string lw = root + ".load";
  if (!load.is_object()) throw ConfigError(lw + ": expected an object");
  const auto kind = load.contains("kind") ? string_field(load["kind"], lw + ".kind") : "prescribed_displacement";
  if (kind == "prescribed_displacement")
    cfg.load.kind = LoadKind::PrescribedDisplacement;
  else if (kind == "nodal_force")
    cfg.load.kind = LoadKind::NodalForce;
  else
    throw ConfigError(lw + ".kind: expected \"prescribed_displacement\" or \"nodal_force\"");
  const auto& targets = require(load, "targets", lw);
  if (!targets.is_array()) throw ConfigError(lw + ".targets: expected an array");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::string w = lw + ".targets[" + std::to_string(i) + "]";
    const auto& t = targets[i];
    if (!t.is_array() || t.size() != 3) throw ConfigError(w + ": expected [node, component, value]");
    const auto node = integer_field(t[0], w + "[0]");
    if (node < 0) throw ConfigError(w + "[0]: node must be non-negative");
    cfg.load.targets.push_back(
        {static_cast<std::size_t>(node), component_field(t[1], w + "[1]"), number_field(t[2], w + "[2]")});
  }
  if (load.contains("fixed")) {
    const auto& fixed = load["fixed"];
    if (!fixed.is_array()) throw ConfigError(lw + ".fixed: expected an array");
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      const std::string w = lw + ".fixed[" + std::to_string(i) + "]";
      const auto& f = fixed[i];
      if (!f.is_array() || f.size() != 2) throw ConfigError(w + ": expected [node, component]");
      const auto node = integer_field(f[0], w + "[0]");
      if (node < 0) throw ConfigError(w + "[0]: node must be non-negative");
      cfg.fixed.dirichlet.push_back({static_cast<std::size_t>(node), component_field(f[1], w + "[1]"), 0.0});
    }
  }
  const auto increments = integer_field(require(doc, "increments", root), root + ".increments");
  if (increments < 1) throw ConfigError(root + ".increments: must be >= 1");
  cfg.load.n_increments = static_cast<int>(increments);

  if (doc.contains("tol")) {
    cfg.tol = number_field(doc["tol"], root + ".tol");
    if (!(cfg.tol > 0.0)) throw ConfigError(root + ".tol: must be positive");
  }
  if (doc.contains("max_iter")) {
    cfg.max_iter = static_cast<int>(integer_field(doc["max_iter"], root + ".max_iter"));
    if (cfg.max_iter < 1) throw ConfigError(root + ".max_iter: must be >= 1");
  }
  if (doc.contains("rve_tol")) {
    cfg.rve_tol = number_field(doc["rve_tol"], root + ".rve_tol");
    if (!(cfg.rve_tol > 0.0)) throw ConfigError(root + ".rve_tol: must be positive");
  }
  if (doc.contains("rve_max_iter")) {
    cfg.rve_max_iter = static_cast<int>(integer_field(doc["rve_max_iter"], root + ".rve_max_iter"));
    if (cfg.rve_max_iter < 1) throw ConfigError(root + ".rve_max_iter: must be >= 1");
  }
  if (doc.contains("training_amplitude"))
    cfg.training_amplitude = number_field(doc["training_amplitude"], root + ".training_amplitude");
  if (doc.contains("offline_seconds")) cfg.offline_seconds = number_field(doc["offline_seconds"], root + ".offline_seconds");
  cfg.hash = fnv1a_hex(doc.dump());
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_json_file(path), path.parent_path());
}

RveProblem load_rve(const fs::path& mesh_path, const fs::path& material_path, BoundaryMode mode) {
  auto doc = read_mesh_file(mesh_path);
  if (doc.materials.empty()) {
    if (material_path.empty()) throw ConfigError("RVE mesh has no material table and no material file was given");
    doc.materials.push_back(read_material_file(material_path));
  }
  return RveProblem(std::move(doc.mesh), std::move(doc.materials), mode);
}

SimulationResult execute_run(const RunConfig& cfg, unsigned threads) {
  auto mesh_doc = read_mesh_file(cfg.macro_mesh);
  MacroProblem macro{Discretization(std::move(mesh_doc.mesh)), cfg.load, cfg.fixed};
  for (const auto& t : macro.load.targets)
    if (t.node >= macro.disc.mesh().num_nodes()) throw ConfigError("config.load.targets: node out of range");
  for (const auto& f : macro.fixed_bcs.dirichlet)
    if (f.node >= macro.disc.mesh().num_nodes()) throw ConfigError("config.load.fixed: node out of range");

  ConstitutiveProvider provider;
  std::string model_hash;
  if (cfg.mode == ProviderMode::Direct) {
    provider = ConstitutiveProvider::direct(std::make_shared<const RveProblem>(load_rve(cfg.rve_mesh, cfg.material, cfg.rve_bc)),
                                            cfg.tangent_policy);
    provider.rve_newton = {cfg.rve_tol, cfg.rve_max_iter};
  } else {
    const auto net = load_network(cfg.model);
    model_hash = fnv1a_hex(network_to_json(net).dump());
    provider = ConstitutiveProvider::surrogate(std::make_shared<const MlpNetwork>(net), cfg.tangent_policy);
    provider.training_amplitude = cfg.training_amplitude;
  }
  Fe2Options options;
  options.newton = {cfg.tol, cfg.max_iter};
  options.threads = threads;
  auto result = run_fe2(macro, provider, options);
  result.config_hash = cfg.hash;
  result.model_hash = model_hash;
  result.offline_seconds = cfg.offline_seconds;
  return result;
}

void write_run_outputs(const RunConfig& cfg, const SimulationResult& result) {
  write_text_file(cfg.out, result_to_json(result).dump(1) + "\n");
  fs::path csv = cfg.out;
  csv.replace_extension(".csv");
  write_text_file(csv, displacements_csv(result));
}

}  // namespace fe2ml
