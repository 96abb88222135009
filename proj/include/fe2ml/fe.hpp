#pragma once

// Total-Lagrangian quad4 machinery shared by the RVE and the macro scale.
// Dof numbering: 2 * node + component.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fe2ml/element.hpp"
#include "fe2ml/mesh.hpp"
#include "fe2ml/tensor.hpp"

namespace fe2ml {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Reference-configuration data of one Gauss point.
struct PointGeometry {
  Eigen::Matrix<double, 4, 2> dNdX;
  double dV;  // det(dX/dxi) * weight
  Eigen::Vector2d X;
};

/// A validated mesh plus quadrature with precomputed reference gradients.
/// Immutable after construction and safe to share between threads.
class Discretization {
 public:
  explicit Discretization(Mesh mesh, QuadratureRule quad = QuadratureRule::gauss2x2());

  const Mesh& mesh() const { return mesh_; }
  const QuadratureRule& quadrature() const { return quad_; }
  std::size_t num_dofs() const { return 2 * mesh_.num_nodes(); }
  std::size_t points_per_element() const { return quad_.size(); }
  std::size_t num_points() const { return points_.size(); }
  const PointGeometry& point(std::size_t element, std::size_t q) const {
    return points_[element * quad_.size() + q];
  }
  double reference_volume() const { return volume_; }

 private:
  Mesh mesh_;
  QuadratureRule quad_;
  std::vector<PointGeometry> points_;
  double volume_ = 0.0;
};

/// F = I + u (x) grad_X at every Gauss point, element-major.
/// Throws ElementInversion if det F <= 0 anywhere.
std::vector<Tensor2> deformation_gradients(const Discretization& disc, const Vector& u);

/// f[a,i] = sum_gp P_iJ dN_a/dX_J dV for per-point stresses P (element-major).
Vector assemble_from_stresses(const Discretization& disc, std::span<const Tensor2> stresses);

/// K[(a,i),(b,k)] = sum_gp dN_a/dX_J C_iJkL dN_b/dX_L dV for per-point moduli.
Matrix assemble_from_moduli(const Discretization& disc, std::span<const Tensor4> moduli);

/// Neo-Hookean internal forces; `materials` is indexed by the mesh material ids.
Vector assemble_internal_forces(const Discretization& disc, const Vector& u, std::span<const MaterialParams> materials);
Vector assemble_internal_forces(const Discretization& disc, const Vector& u, const MaterialParams& mat);

/// Consistent tangent dF_int/du from the analytic dP/dF.
Matrix assemble_tangent(const Discretization& disc, const Vector& u, std::span<const MaterialParams> materials);
Matrix assemble_tangent(const Discretization& disc, const Vector& u, const MaterialParams& mat);

// ---------------------------------------------------------------------------
// Constraints

struct DirichletBc {
  std::size_t node;
  int component;  // 0 or 1
  double value;
};

/// u[follower] = u[leader] + offset for one component.
struct TieConstraint {
  std::size_t follower;
  std::size_t leader;
  int component;
  double offset;
};

struct ConstraintSet {
  std::vector<DirichletBc> dirichlet;
  std::vector<TieConstraint> ties;
};

/// Elimination map u = T u_r + g. Each constrained dof is either fixed or
/// follows one leader, so every row of T holds at most a single 1.
class ConstraintMap {
 public:
  /// Throws ConstraintError on duplicates, fixed followers, chained ties or
  /// out-of-range dofs.
  ConstraintMap(const ConstraintSet& set, std::size_t num_dofs, int dofs_per_node = 2);

  std::size_t num_dofs() const { return column_.size(); }
  std::size_t num_free() const { return free_dofs_.size(); }
  const std::vector<std::size_t>& free_dofs() const { return free_dofs_; }
  /// Reduced column of each full dof, or -1 when fully prescribed.
  const std::vector<std::ptrdiff_t>& columns() const { return column_; }
  bool is_constrained(std::size_t dof) const { return constrained_[dof]; }

  Vector expand(const Vector& reduced) const;
  /// Overwrites constrained entries of u so that the constraints hold.
  Vector impose(Vector u) const;
  Vector reduce(const Vector& full) const;
  Matrix reduce(const Matrix& full) const;
  Vector restrict(const Vector& full) const;

 private:
  std::vector<std::ptrdiff_t> column_;
  std::vector<double> shift_;  // g
  std::vector<std::size_t> free_dofs_;
  std::vector<bool> constrained_;
};

struct ReducedSystem {
  Matrix K;
  Vector f;
  ConstraintMap map;

  struct Recovery {
    Vector u;
    Vector reactions;  // K u - f, nonzero only on constrained dofs
  };
  /// Full solution and reactions from a solution of the reduced system.
  Recovery recover(const Vector& reduced_solution) const;

  Matrix K_full;
  Vector f_full;
};

ReducedSystem apply_constraints(const Matrix& K, const Vector& f, const ConstraintSet& constraints,
                                int dofs_per_node = 2);

/// Dense LU with partial pivoting. Throws SingularSystem with the pivot index.
Vector solve_linear(const Matrix& K, const Vector& rhs);
/// Same, for several right-hand sides sharing one factorization.
Matrix solve_linear(const Matrix& K, const Matrix& rhs);

// ---------------------------------------------------------------------------
// Newton

struct NewtonReport {
  bool converged = false;
  int iterations = 0;  // residual evaluations
  std::vector<double> residual_history;
};

struct NewtonOptions {
  double tol = 1e-8;  // absolute 2-norm of the reduced residual
  int max_iter = 25;
};

struct NewtonResult {
  Vector u;
  NewtonReport report;
};

/// Fills residual = f_int(u) - f_ext and, when tangent is non-null, dR/du.
using NewtonEvaluator = std::function<void(const Vector& u, Vector& residual, Matrix* tangent)>;

/// Newton iteration on the constrained system starting from u0 (constraints are
/// imposed first). With `fixed_tangent` the full-size matrix is reused for
/// every iteration. A step that inverts an element is halved until it does
/// not. Throws NonConvergence after max_iter evaluations.
NewtonResult newton_iterate(const ConstraintMap& map, Vector u0, const NewtonEvaluator& evaluate,
                            const NewtonOptions& options, const Matrix* fixed_tangent = nullptr);

/// Quasi-static neo-Hookean solve with optional external nodal forces and
/// initial guess (both default to zero).
NewtonResult newton_solve(const Discretization& disc, std::span<const MaterialParams> materials,
                          const ConstraintSet& constraints, const NewtonOptions& options, const Vector& f_ext = {},
                          const Vector& u0 = {});

}  // namespace fe2ml
