#include "fe2ml/fe2.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "fe2ml/errors.hpp"
#include "fe2ml/parallel.hpp"

namespace fe2ml {

using nlohmann::json;

void LoadSchedule::validate() const {
  if (n_increments < 1) throw ConfigError("load: increments must be >= 1");
  for (const auto& t : targets)
    if (t.component < 0 || t.component > 1) throw ConfigError("load: target component must be 0 or 1");
}

MacroProblem default_macro_problem(int increments, double stretch, std::size_t nx, std::size_t ny) {
  Mesh mesh = structured_mesh(nx, ny);
  MacroProblem macro{Discretization(mesh), {}, {}};
  macro.load.kind = LoadKind::PrescribedDisplacement;
  macro.load.n_increments = increments;
  for (std::size_t j = 0; j <= ny; ++j) {
    const std::size_t left = j * (nx + 1), right = left + nx;
    macro.fixed_bcs.dirichlet.push_back({left, 0, 0.0});
    macro.load.targets.push_back({right, 0, stretch});
  }
  macro.fixed_bcs.dirichlet.push_back({0, 1, 0.0});
  return macro;
}

ConstitutiveProvider ConstitutiveProvider::direct(std::shared_ptr<const RveProblem> rve, TangentPolicy policy) {
  ConstitutiveProvider p;
  p.rve = std::move(rve);
  p.tangent_policy = policy;
  return p;
}

ConstitutiveProvider ConstitutiveProvider::surrogate(std::shared_ptr<const MlpNetwork> net, TangentPolicy policy) {
  ConstitutiveProvider p;
  p.network = std::move(net);
  p.tangent_policy = policy;
  return p;
}

void ConstitutiveProvider::validate() const {
  if (static_cast<bool>(rve) == static_cast<bool>(network))
    throw ConfigError("constitutive provider needs exactly one of an RVE or a network");
  if (network) {
    network->validate();
    if (network->num_inputs() != 4 || network->num_outputs() != 4)
      throw ConfigError("surrogate network must map 4 inputs to 4 outputs");
  }
}

GaussPointResponse gauss_point_response(const ConstitutiveProvider& provider, const Tensor2& F_M, bool with_tangent) {
  const double det = F_M.determinant();
  if (!(det > 0.0)) throw InvalidDeformation(det);
  GaussPointResponse out;
  if (provider.mode() == ProviderMode::Direct) {
    auto r = homogenize(*provider.rve, F_M, with_tangent, provider.rve_newton, provider.formula);
    out.P = r.P;
    out.C = r.C;
    return out;
  }
  const auto& net = *provider.network;
  out.P = surrogate_pk(net, F_M);
  if (with_tangent) out.C = surrogate_tangent(net, F_M);
  if (provider.training_amplitude) {
    out.extrapolated = ((F_M - Tensor2::Identity()).cwiseAbs().maxCoeff() > *provider.training_amplitude + 1e-12);
  } else {
    out.extrapolated = net.input_norm.normalize(flatten(F_M)).cwiseAbs().maxCoeff() > 1.0 + 1e-12;
  }
  return out;
}

GaussPointFailure::GaussPointFailure(std::size_t element, std::size_t point, const Eigen::Vector2d& X,
                                     const std::string& cause)
    : Error("Gauss point " + std::to_string(point) + " of element " + std::to_string(element) + " at (" +
            std::to_string(X.x()) + ", " + std::to_string(X.y()) + "): " + cause),
      element_(element),
      point_(point) {}

std::size_t SimulationResult::extrapolation_warnings() const {
  std::size_t n = 0;
  for (const auto& inc : increments) n += inc.extrapolation_warnings;
  return n;
}

namespace {

const char* policy_name(TangentPolicy p) { return p == TangentPolicy::Initial ? "initial" : "per_iteration"; }

struct Snapshot {
  std::vector<Tensor2> F;
  std::vector<GaussPointResponse> responses;
};

Snapshot evaluate_points(const Discretization& disc, const ConstitutiveProvider& provider, const Vector& u,
                         bool with_tangent, unsigned threads) {
  Snapshot s;
  s.F = deformation_gradients(disc, u);
  s.responses.resize(s.F.size());
  const std::size_t nq = disc.points_per_element();
  parallel_for(s.F.size(), threads, [&](std::size_t i) {
    try {
      s.responses[i] = gauss_point_response(provider, s.F[i], with_tangent);
    } catch (const Error& e) {
      throw GaussPointFailure(i / nq, i % nq, disc.point(i / nq, i % nq).X, e.what());
    }
  });
  return s;
}

}  // namespace

SimulationResult run_fe2(const MacroProblem& macro, const ConstitutiveProvider& provider, const Fe2Options& options) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  provider.validate();
  macro.load.validate();
  const auto& disc = macro.disc;
  const auto ndof = static_cast<Eigen::Index>(disc.num_dofs());

  SimulationResult result;
  result.mode = provider.mode() == ProviderMode::Direct ? "direct" : "surrogate";
  result.tangent_policy = policy_name(provider.tangent_policy);

  auto constraints_at = [&](double fraction) {
    ConstraintSet cs = macro.fixed_bcs;
    if (macro.load.kind == LoadKind::PrescribedDisplacement)
      for (const auto& t : macro.load.targets) cs.dirichlet.push_back({t.node, t.component, fraction * t.value});
    return cs;
  };
  auto external_at = [&](double fraction) {
    Vector f = Vector::Zero(ndof);
    if (macro.load.kind == LoadKind::NodalForce)
      for (const auto& t : macro.load.targets) {
        const auto dof = 2 * t.node + static_cast<std::size_t>(t.component);
        if (dof >= disc.num_dofs()) throw ConfigError("load target node " + std::to_string(t.node) + " out of range");
        f[static_cast<Eigen::Index>(dof)] += fraction * t.value;
      }
    return f;
  };

  // Initialization: tangent in the undeformed state at every Gauss point.
  const auto initial = gauss_point_response(provider, Tensor2::Identity(), true);
  const std::vector<Tensor4> initial_moduli(disc.num_points(), *initial.C);
  const Matrix K0 = assemble_from_moduli(disc, initial_moduli);
  {
    ConstraintMap map(constraints_at(1.0), disc.num_dofs());
    try {
      solve_linear(map.reduce(K0), Vector(Vector::Zero(static_cast<Eigen::Index>(map.num_free()))));
    } catch (const SingularSystem&) {
      throw ConfigError("macro supports do not remove the rigid-body modes (initial tangent is singular)");
    }
  }

  Vector u = Vector::Zero(ndof);
  const bool per_iteration = provider.tangent_policy == TangentPolicy::PerIteration;
  for (int step = 1; step <= macro.load.n_increments; ++step) {
    const double fraction = static_cast<double>(step) / macro.load.n_increments;
    const ConstraintMap map(constraints_at(fraction), disc.num_dofs());
    const Vector f_ext = external_at(fraction);
    Snapshot last;
    auto evaluate = [&](const Vector& state, Vector& residual, Matrix* tangent) {
      last = evaluate_points(disc, provider, state, tangent != nullptr, options.threads);
      std::vector<Tensor2> P(last.responses.size());
      for (std::size_t i = 0; i < P.size(); ++i) P[i] = last.responses[i].P;
      residual = assemble_from_stresses(disc, P) - f_ext;
      if (tangent) {
        std::vector<Tensor4> C(last.responses.size());
        for (std::size_t i = 0; i < C.size(); ++i) C[i] = *last.responses[i].C;
        *tangent = assemble_from_moduli(disc, C);
      }
    };
    try {
      auto solved = newton_iterate(map, u, evaluate, options.newton, per_iteration ? nullptr : &K0);
      u = solved.u;
      IncrementRecord rec;
      rec.step = step;
      rec.fraction = fraction;
      rec.u = u;
      rec.newton = std::move(solved.report);
      const std::size_t nq = disc.points_per_element();
      for (std::size_t i = 0; i < last.F.size(); ++i) {
        rec.gauss_points.push_back({i / nq, i % nq, last.F[i], last.responses[i].P});
        if (last.responses[i].extrapolated) ++rec.extrapolation_warnings;
      }
      result.increments.push_back(std::move(rec));
    } catch (const NonConvergence& e) {
      result.failure = FailureRecord{step, e.what(), e.residual_history()};
      break;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      result.failure = FailureRecord{step, e.what(), {}};
      break;
    }
  }
  result.online_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------

double ComparisonReport::max_relative_displacement_error() const {
  double worst = 0.0;
  for (const auto& inc : increments)
    if (inc.max_u > 0.0) worst = std::max(worst, inc.max_du / inc.max_u);
  return worst;
}

double ComparisonReport::max_relative_stress_error() const {
  double worst = 0.0;
  for (const auto& inc : increments)
    if (inc.max_P > 0.0) worst = std::max(worst, inc.max_dP / inc.max_P);
  return worst;
}

ComparisonReport compare_runs(const SimulationResult& a, const SimulationResult& b) {
  if (a.increments.size() != b.increments.size())
    throw IncompatibleResults("runs have " + std::to_string(a.increments.size()) + " and " +
                              std::to_string(b.increments.size()) + " increments");
  ComparisonReport report;
  for (std::size_t k = 0; k < a.increments.size(); ++k) {
    const auto& ia = a.increments[k];
    const auto& ib = b.increments[k];
    if (ia.step != ib.step || ia.fraction != ib.fraction || ia.u.size() != ib.u.size() ||
        ia.gauss_points.size() != ib.gauss_points.size())
      throw IncompatibleResults("increment " + std::to_string(k + 1) + " differs in schedule or mesh");
    IncrementComparison c{ia.step, 0.0, 0.0, 0.0, 0.0, 0.0};
    const auto nodes = ia.u.size() / 2;
    double sum = 0.0;
    for (Eigen::Index n = 0; n < nodes; ++n) {
      const double d = (ia.u.segment<2>(2 * n) - ib.u.segment<2>(2 * n)).norm();
      c.max_du = std::max(c.max_du, d);
      c.max_u = std::max(c.max_u, ia.u.segment<2>(2 * n).norm());
      sum += d * d;
    }
    c.rms_du = nodes > 0 ? std::sqrt(sum / static_cast<double>(nodes)) : 0.0;
    for (std::size_t g = 0; g < ia.gauss_points.size(); ++g) {
      c.max_dP = std::max(c.max_dP, (ia.gauss_points[g].P - ib.gauss_points[g].P).cwiseAbs().maxCoeff());
      c.max_P = std::max(c.max_P, ia.gauss_points[g].P.cwiseAbs().maxCoeff());
    }
    report.increments.push_back(c);
  }
  if (b.online_seconds > 0.0)
    report.time_ratio = a.online_seconds / b.online_seconds;
  else
    report.time_ratio = a.online_seconds > 0.0 ? INFINITY : 1.0;
  return report;
}

namespace {

std::vector<double> flat4(const Tensor2& t) { return {t(0, 0), t(0, 1), t(1, 0), t(1, 1)}; }

Tensor2 tensor_field(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw ConfigError(where + ": expected 4 numbers");
  Eigen::Vector4d x;
  for (int i = 0; i < 4; ++i) {
    if (!v[i].is_number()) throw ConfigError(where + ": expected 4 numbers");
    x[i] = v[i].get<double>();
  }
  return unflatten(x);
}

const json& field(const json& doc, const char* key, const std::string& where) {
  if (!doc.is_object() || !doc.contains(key)) throw ConfigError(where + "." + key + ": missing");
  return doc[key];
}

}  // namespace

json result_to_json(const SimulationResult& r) {
  json doc;
  doc["mode"] = r.mode;
  doc["tangent_policy"] = r.tangent_policy;
  doc["increments"] = json::array();
  for (const auto& inc : r.increments) {
    json j;
    j["step"] = inc.step;
    j["fraction"] = inc.fraction;
    j["u"] = std::vector<double>(inc.u.data(), inc.u.data() + inc.u.size());
    j["gauss_points"] = json::array();
    for (const auto& g : inc.gauss_points)
      j["gauss_points"].push_back({{"element", g.element}, {"point", g.point}, {"F", flat4(g.F)}, {"P", flat4(g.P)}});
    j["newton"] = {{"converged", inc.newton.converged},
                   {"iterations", inc.newton.iterations},
                   {"residual_history", inc.newton.residual_history}};
    j["extrapolation_warnings"] = inc.extrapolation_warnings;
    doc["increments"].push_back(std::move(j));
  }
  doc["failure"] = r.failure ? json{{"step", r.failure->step},
                                    {"message", r.failure->message},
                                    {"residual_history", r.failure->residual_history}}
                             : json(nullptr);
  doc["extrapolation_warnings"] = r.extrapolation_warnings();
  doc["timing"] = {{"offline_seconds", r.offline_seconds}, {"online_seconds", r.online_seconds}};
  doc["provenance"] = {{"config_hash", r.config_hash}, {"model_hash", r.model_hash}};
  return doc;
}

namespace {

SimulationResult parse_result(const json& doc) {
  const std::string root = "result";
  SimulationResult r;
  r.mode = field(doc, "mode", root).get<std::string>();
  r.tangent_policy = field(doc, "tangent_policy", root).get<std::string>();
  const auto& incs = field(doc, "increments", root);
  if (!incs.is_array()) throw ConfigError("result.increments: expected an array");
  for (std::size_t k = 0; k < incs.size(); ++k) {
    const std::string where = root + ".increments[" + std::to_string(k) + "]";
    const auto& j = incs[k];
    IncrementRecord inc;
    inc.step = field(j, "step", where).get<int>();
    inc.fraction = field(j, "fraction", where).get<double>();
    const auto u = field(j, "u", where).get<std::vector<double>>();
    inc.u = Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(u.size()));
    for (const auto& g : field(j, "gauss_points", where))
      inc.gauss_points.push_back({g.at("element").get<std::size_t>(), g.at("point").get<std::size_t>(),
                                  tensor_field(g.at("F"), where + ".gauss_points.F"),
                                  tensor_field(g.at("P"), where + ".gauss_points.P")});
    const auto& nw = field(j, "newton", where);
    inc.newton.converged = nw.at("converged").get<bool>();
    inc.newton.iterations = nw.at("iterations").get<int>();
    inc.newton.residual_history = nw.at("residual_history").get<std::vector<double>>();
    if (j.contains("extrapolation_warnings")) inc.extrapolation_warnings = j["extrapolation_warnings"].get<std::size_t>();
    r.increments.push_back(std::move(inc));
  }
  if (doc.contains("failure") && !doc["failure"].is_null()) {
    const auto& f = doc["failure"];
    r.failure = FailureRecord{f.at("step").get<int>(), f.at("message").get<std::string>(),
                              f.value("residual_history", std::vector<double>{})};
  }
  if (doc.contains("timing")) {
    r.offline_seconds = doc["timing"].value("offline_seconds", 0.0);
    r.online_seconds = doc["timing"].value("online_seconds", 0.0);
  }
  if (doc.contains("provenance")) {
    r.config_hash = doc["provenance"].value("config_hash", "");
    r.model_hash = doc["provenance"].value("model_hash", "");
  }
  return r;
}

}  // namespace

SimulationResult result_from_json(const json& doc) {
  try {
    return parse_result(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("result: malformed document (") + e.what() + ")");
  }
}

std::string displacements_csv(const SimulationResult& r) {
  std::string out = "increment,node,u1,u2\n";
  char buf[128];
  for (const auto& inc : r.increments)
    for (Eigen::Index n = 0; n < inc.u.size() / 2; ++n) {
      std::snprintf(buf, sizeof buf, "%d,%ld,%.17g,%.17g\n", inc.step, static_cast<long>(n), inc.u[2 * n],
                    inc.u[2 * n + 1]);
      out += buf;
    }
  return out;
}

json comparison_to_json(const ComparisonReport& report) {
  json doc;
  doc["increments"] = json::array();
  for (const auto& c : report.increments)
    doc["increments"].push_back({{"step", c.step},
                                 {"max_du", c.max_du},
                                 {"rms_du", c.rms_du},
                                 {"max_u", c.max_u},
                                 {"max_dP", c.max_dP},
                                 {"max_P", c.max_P}});
  doc["time_ratio"] = std::isfinite(report.time_ratio) ? json(report.time_ratio) : json(nullptr);
  doc["max_relative_displacement_error"] = report.max_relative_displacement_error();
  doc["max_relative_stress_error"] = report.max_relative_stress_error();
  return doc;
}

std::string comparison_table(const ComparisonReport& report) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%9s  %16s  %16s  %16s\n", "increment", "max |du|", "RMS |du|", "max |dP|");
  out += buf;
  for (const auto& c : report.increments) {
    std::snprintf(buf, sizeof buf, "%9d  %16.9e  %16.9e  %16.9e\n", c.step, c.max_du, c.rms_du, c.max_dP);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "online time ratio (a/b): %.6g\n", report.time_ratio);
  out += buf;
  return out;
}

}  // namespace fe2ml
