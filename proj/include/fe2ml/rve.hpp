#pragma once

// Micro-scale half of the two-scale scheme: drive an RVE with a macroscale
// deformation gradient, solve it, and homogenize stress and tangent from the
// boundary nodal forces.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fe2ml/fe.hpp"

namespace fe2ml {

enum class BoundaryMode {
  Affine,    // u = (F_M - I) X on every boundary node
  Periodic,  // corners affine, opposite edges tied
};

/// Which coordinate pairs the condensed-stiffness blocks in the tangent sum.
enum class TangentFormula {
  Derived,    // X^(i)_b X^(j)_d, consistent with dP_M = C_M : dF_M
  AsPrinted,  // X^(i)_b X^(i)_d
};

struct PeriodicPair {
  std::size_t plus;   // node on the right or top edge
  std::size_t minus;  // mirror node on the left or bottom edge
};

/// Axis-aligned unit cell with its materials. Immutable; share freely.
class RveProblem {
 public:
  RveProblem(Mesh mesh, std::vector<MaterialParams> materials, BoundaryMode mode = BoundaryMode::Periodic);
  RveProblem(Mesh mesh, const MaterialParams& material, BoundaryMode mode = BoundaryMode::Periodic)
      : RveProblem(std::move(mesh), std::vector<MaterialParams>{material}, mode) {}

  const Discretization& discretization() const { return disc_; }
  const Mesh& mesh() const { return disc_.mesh(); }
  std::span<const MaterialParams> materials() const { return materials_; }
  BoundaryMode mode() const { return mode_; }
  double volume() const { return volume_; }

  bool is_periodic() const { return periodic_error_.empty(); }
  /// Corner nodes (xmin,ymin), (xmax,ymin), (xmax,ymax), (xmin,ymax). Throws MeshNotPeriodic.
  const std::array<std::size_t, 4>& corners() const;
  /// Mirror pairs of non-corner edge nodes. Throws MeshNotPeriodic.
  const std::vector<PeriodicPair>& periodic_pairs() const;

  RveProblem with_mode(BoundaryMode mode) const { return RveProblem(mesh(), materials_, mode); }

 private:
  void find_periodic_pairs();

  Discretization disc_;
  std::vector<MaterialParams> materials_;
  BoundaryMode mode_;
  double volume_ = 0.0;
  std::array<std::size_t, 4> corners_{};
  std::vector<PeriodicPair> pairs_;
  std::string periodic_error_;
};

/// Boundary conditions realizing x = F_M X on the RVE for its mode.
ConstraintSet apply_macro_bc(const RveProblem& rve, const Tensor2& F_M);

struct RveSolution {
  Vector u;
  std::vector<Eigen::Vector2d> f_p;  // one per mesh.boundary_nodes entry
  Tensor2 F_M_applied;
  NewtonReport report;
};

/// Equilibrium under apply_macro_bc, starting from the affine field. The
/// boundary forces are the internal nodal forces at the converged state.
RveSolution solve_rve(const RveProblem& rve, const Tensor2& F_M, const NewtonOptions& options = {});

/// P_M = (1/V0) sum_i f_p^(i) (x) (X^(i) + shift).
Tensor2 homogenized_pk(const RveSolution& sol, const RveProblem& rve,
                       const Eigen::Vector2d& shift = Eigen::Vector2d::Zero());

struct BoundaryPartition {
  std::vector<std::size_t> p;  // boundary dofs, node-major in boundary order
  std::vector<std::size_t> f;  // interior dofs, ascending

  static BoundaryPartition of(const Mesh& mesh);
};

struct CondensedStiffness {
  Matrix K;
  std::vector<Eigen::Vector2d> X;  // reference coordinates of the boundary nodes
};

/// K = K_pp - K_pf K_ff^{-1} K_fp with a single factorization of K_ff.
CondensedStiffness condense_stiffness(const Matrix& K_full, const BoundaryPartition& part);
/// Condensation onto the RVE boundary nodes, coordinates attached.
CondensedStiffness condense_stiffness(const RveProblem& rve, const Matrix& K_full);

/// C_abcd = (1/V0) sum_ij K^(ij)_ac X^(i)_b X^(j)_d.
Tensor4 homogenized_tangent(const CondensedStiffness& cs, double V0,
                            TangentFormula formula = TangentFormula::Derived);

struct RveResponse {
  Tensor2 P;
  std::optional<Tensor4> C;
  RveSolution solution;
};

/// solve_rve + homogenized_pk, and the condensed tangent at the converged
/// state when requested.
RveResponse homogenize(const RveProblem& rve, const Tensor2& F_M, bool with_tangent,
                       const NewtonOptions& options = {}, TangentFormula formula = TangentFormula::Derived);

/// Two-phase n-by-n unit-cell RVE with a centred stiff square inclusion
/// covering inclusion_cells^2 elements.
RveProblem inclusion_rve(std::size_t n, std::size_t inclusion_cells, const MaterialParams& matrix,
                         const MaterialParams& inclusion, BoundaryMode mode = BoundaryMode::Periodic);

}  // namespace fe2ml
