#pragma once

// Macroscale Newton loop whose Gauss-point stress comes either from nested RVE
// solves (direct) or from a trained network (surrogate).

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fe2ml/errors.hpp"
#include "fe2ml/fe.hpp"
#include "fe2ml/mlp.hpp"
#include "fe2ml/rve.hpp"

namespace fe2ml {

enum class LoadKind { PrescribedDisplacement, NodalForce };

struct LoadTarget {
  std::size_t node;
  int component;
  double value;  // final value, reached at the last increment
};

struct LoadSchedule {
  LoadKind kind = LoadKind::PrescribedDisplacement;
  std::vector<LoadTarget> targets;
  int n_increments = 1;

  void validate() const;
};

struct MacroProblem {
  Discretization disc;
  LoadSchedule load;
  ConstraintSet fixed_bcs;  // homogeneous supports
};

/// 2x2-element unit square: left edge fixed in x, origin pinned in y, right
/// edge pulled to u_x = stretch in `increments` uniform steps.
MacroProblem default_macro_problem(int increments = 5, double stretch = 0.1, std::size_t nx = 2, std::size_t ny = 2);

enum class ProviderMode { Direct, Surrogate };
enum class TangentPolicy { Initial, PerIteration };

struct ConstitutiveProvider {
  std::shared_ptr<const RveProblem> rve;      // Direct mode
  std::shared_ptr<const MlpNetwork> network;  // Surrogate mode
  TangentPolicy tangent_policy = TangentPolicy::PerIteration;
  NewtonOptions rve_newton{1e-10, 25};
  TangentFormula formula = TangentFormula::Derived;
  /// Surrogate training box half-width; when absent the network input
  /// normalization range is used instead.
  std::optional<double> training_amplitude;

  static ConstitutiveProvider direct(std::shared_ptr<const RveProblem> rve,
                                     TangentPolicy policy = TangentPolicy::PerIteration);
  static ConstitutiveProvider surrogate(std::shared_ptr<const MlpNetwork> net,
                                        TangentPolicy policy = TangentPolicy::PerIteration);

  ProviderMode mode() const { return network ? ProviderMode::Surrogate : ProviderMode::Direct; }
  /// Throws ConfigError unless exactly one backend is set.
  void validate() const;
};

struct GaussPointResponse {
  Tensor2 P;
  std::optional<Tensor4> C;
  bool extrapolated = false;
};

GaussPointResponse gauss_point_response(const ConstitutiveProvider& provider, const Tensor2& F_M, bool with_tangent);

/// A Gauss-point evaluation failed; carries the macro location.
class GaussPointFailure : public Error {
 public:
  GaussPointFailure(std::size_t element, std::size_t point, const Eigen::Vector2d& X, const std::string& cause);
  std::size_t element() const noexcept { return element_; }
  std::size_t point() const noexcept { return point_; }

 private:
  std::size_t element_;
  std::size_t point_;
};

struct GaussPointRecord {
  std::size_t element;
  std::size_t point;
  Tensor2 F;
  Tensor2 P;
};

struct IncrementRecord {
  int step = 0;
  double fraction = 0.0;
  Vector u;
  std::vector<GaussPointRecord> gauss_points;
  NewtonReport newton;
  std::size_t extrapolation_warnings = 0;
};

struct FailureRecord {
  int step;
  std::string message;
  std::vector<double> residual_history;
};

struct SimulationResult {
  std::string mode;
  std::string tangent_policy;
  std::vector<IncrementRecord> increments;  // converged increments in order
  std::optional<FailureRecord> failure;
  double offline_seconds = 0.0;
  double online_seconds = 0.0;
  std::string config_hash;
  std::string model_hash;

  bool completed() const { return !failure; }
  std::size_t extrapolation_warnings() const;
};

struct Fe2Options {
  NewtonOptions newton{1e-8, 25};
  unsigned threads = 0;
};

/// Load-stepped macroscale Newton solve. Solver failures end the run with a
/// failure record instead of throwing; setup errors throw.
SimulationResult run_fe2(const MacroProblem& macro, const ConstitutiveProvider& provider, const Fe2Options& options = {});

struct IncrementComparison {
  int step;
  double max_du;  // max nodal |u_a - u_b|
  double rms_du;
  double max_u;   // max nodal |u_a|
  double max_dP;  // max component |P_a - P_b| over Gauss points
  double max_P;   // max component |P_a|
};

struct ComparisonReport {
  std::vector<IncrementComparison> increments;
  double time_ratio = 1.0;  // a.online_seconds / b.online_seconds

  double max_relative_displacement_error() const;
  double max_relative_stress_error() const;
};

/// Throws IncompatibleResults when the runs do not share a schedule and mesh.
ComparisonReport compare_runs(const SimulationResult& a, const SimulationResult& b);

nlohmann::json result_to_json(const SimulationResult& result);
SimulationResult result_from_json(const nlohmann::json& doc);
/// "increment,node,u1,u2" rows for every converged increment.
std::string displacements_csv(const SimulationResult& result);
nlohmann::json comparison_to_json(const ComparisonReport& report);
std::string comparison_table(const ComparisonReport& report);

}  // namespace fe2ml
