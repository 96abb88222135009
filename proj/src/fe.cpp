#include "fe2ml/fe.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "fe2ml/errors.hpp"

namespace fe2ml {

Discretization::Discretization(Mesh mesh, QuadratureRule quad) : mesh_(std::move(mesh)), quad_(std::move(quad)) {
  mesh_.validate();
  points_.reserve(mesh_.num_elements() * quad_.size());
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    Eigen::Matrix<double, 4, 2> X;
    for (int a = 0; a < 4; ++a) X.row(a) = mesh_.nodes[mesh_.elements[e][a]].transpose();
    for (std::size_t q = 0; q < quad_.size(); ++q) {
      const auto& qp = quad_.points[q];
      const auto shape = shape_eval(qp.xi, qp.eta);
      const Eigen::Matrix2d jac = X.transpose() * shape.gradients;  // dX/dxi
      const double det = jac.determinant();
      if (!(det > 0.0)) throw MeshError("element " + std::to_string(e) + " has non-positive reference Jacobian");
      PointGeometry g;
      g.dNdX = shape.gradients * jac.inverse();
      g.dV = det * qp.weight;
      g.X = X.transpose() * shape.values;
      volume_ += g.dV;
      points_.push_back(g);
    }
  }
}

std::vector<Tensor2> deformation_gradients(const Discretization& disc, const Vector& u) {
  const auto& mesh = disc.mesh();
  if (static_cast<std::size_t>(u.size()) != disc.num_dofs())
    throw ShapeError("displacement vector has " + std::to_string(u.size()) + " entries, expected " +
                     std::to_string(disc.num_dofs()));
  std::vector<Tensor2> out;
  out.reserve(disc.num_points());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    Eigen::Matrix<double, 4, 2> ue;
    for (int a = 0; a < 4; ++a) ue.row(a) = u.segment<2>(2 * mesh.elements[e][a]).transpose();
    for (std::size_t q = 0; q < disc.points_per_element(); ++q) {
      const Tensor2 F = Tensor2::Identity() + ue.transpose() * disc.point(e, q).dNdX;
      const double det = F.determinant();
      if (!(det > 0.0)) throw ElementInversion(e, q, det);
      out.push_back(F);
    }
  }
  return out;
}

Vector assemble_from_stresses(const Discretization& disc, std::span<const Tensor2> stresses) {
  const auto& mesh = disc.mesh();
  if (stresses.size() != disc.num_points()) throw ShapeError("one stress per Gauss point required");
  Vector f = Vector::Zero(static_cast<Eigen::Index>(disc.num_dofs()));
  const std::size_t nq = disc.points_per_element();
  for (std::size_t e = 0; e < mesh.num_elements(); ++e)
    for (std::size_t q = 0; q < nq; ++q) {
      const auto& g = disc.point(e, q);
      // rows: nodes, cols: components
      const Eigen::Matrix<double, 4, 2> fe = g.dNdX * stresses[e * nq + q].transpose() * g.dV;
      for (int a = 0; a < 4; ++a) f.segment<2>(2 * mesh.elements[e][a]) += fe.row(a).transpose();
    }
  return f;
}

Matrix assemble_from_moduli(const Discretization& disc, std::span<const Tensor4> moduli) {
  const auto& mesh = disc.mesh();
  if (moduli.size() != disc.num_points()) throw ShapeError("one tangent per Gauss point required");
  const auto n = static_cast<Eigen::Index>(disc.num_dofs());
  Matrix K = Matrix::Zero(n, n);
  const std::size_t nq = disc.points_per_element();
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    Eigen::Matrix<double, 8, 8> ke = Eigen::Matrix<double, 8, 8>::Zero();
    for (std::size_t q = 0; q < nq; ++q) {
      const auto& g = disc.point(e, q);
      const Tensor4& C = moduli[e * nq + q];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k) {
              double s = 0.0;
              for (int J = 0; J < 2; ++J)
                for (int L = 0; L < 2; ++L) s += g.dNdX(a, J) * C(i, J, k, L) * g.dNdX(b, L);
              ke(2 * a + i, 2 * b + k) += s * g.dV;
            }
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        K.block<2, 2>(2 * mesh.elements[e][a], 2 * mesh.elements[e][b]) += ke.block<2, 2>(2 * a, 2 * b);
  }
  return K;
}

namespace {

const MaterialParams& material_of(const Discretization& disc, std::span<const MaterialParams> materials, std::size_t e) {
  const auto id = disc.mesh().material_id(e);
  if (id >= materials.size())
    throw ConfigError("element " + std::to_string(e) + " uses material " + std::to_string(id) + " but only " +
                      std::to_string(materials.size()) + " are defined");
  return materials[id];
}

}  // namespace

Vector assemble_internal_forces(const Discretization& disc, const Vector& u, std::span<const MaterialParams> materials) {
  const auto F = deformation_gradients(disc, u);
  std::vector<Tensor2> P(F.size());
  const std::size_t nq = disc.points_per_element();
  for (std::size_t i = 0; i < F.size(); ++i) P[i] = first_pk(F[i], material_of(disc, materials, i / nq));
  return assemble_from_stresses(disc, P);
}

Vector assemble_internal_forces(const Discretization& disc, const Vector& u, const MaterialParams& mat) {
  return assemble_internal_forces(disc, u, std::span<const MaterialParams>(&mat, 1));
}

Matrix assemble_tangent(const Discretization& disc, const Vector& u, std::span<const MaterialParams> materials) {
  const auto F = deformation_gradients(disc, u);
  std::vector<Tensor4> C(F.size());
  const std::size_t nq = disc.points_per_element();
  for (std::size_t i = 0; i < F.size(); ++i) C[i] = material_tangent(F[i], material_of(disc, materials, i / nq));
  return assemble_from_moduli(disc, C);
}

Matrix assemble_tangent(const Discretization& disc, const Vector& u, const MaterialParams& mat) {
  return assemble_tangent(disc, u, std::span<const MaterialParams>(&mat, 1));
}

// ---------------------------------------------------------------------------

ConstraintMap::ConstraintMap(const ConstraintSet& set, std::size_t num_dofs, int dofs_per_node)
    : column_(num_dofs, 0), shift_(num_dofs, 0.0), constrained_(num_dofs, false) {
  constexpr std::ptrdiff_t kFree = -2;
  std::vector<std::ptrdiff_t> leader(num_dofs, kFree);  // -1: fixed, >=0: leader dof
  auto dof_of = [&](std::size_t node, int comp, const char* what) {
    if (comp < 0 || comp >= dofs_per_node)
      throw ConstraintError(std::string(what) + ": component " + std::to_string(comp) + " out of range");
    const std::size_t d = node * static_cast<std::size_t>(dofs_per_node) + static_cast<std::size_t>(comp);
    if (d >= num_dofs) throw ConstraintError(std::string(what) + ": node " + std::to_string(node) + " out of range");
    return d;
  };
  for (const auto& bc : set.dirichlet) {
    const auto d = dof_of(bc.node, bc.component, "dirichlet");
    if (constrained_[d]) throw ConstraintError("dof " + std::to_string(d) + " is constrained twice");
    constrained_[d] = true;
    leader[d] = -1;
    shift_[d] = bc.value;
  }
  for (const auto& tie : set.ties) {
    const auto f = dof_of(tie.follower, tie.component, "tie follower");
    const auto l = dof_of(tie.leader, tie.component, "tie leader");
    if (f == l) throw ConstraintError("tie on dof " + std::to_string(f) + " references itself");
    if (constrained_[f]) throw ConstraintError("dof " + std::to_string(f) + " is constrained twice");
    constrained_[f] = true;
    leader[f] = static_cast<std::ptrdiff_t>(l);
    shift_[f] = tie.offset;
  }
  for (std::size_t d = 0; d < num_dofs; ++d)
    if (leader[d] >= 0 && leader[static_cast<std::size_t>(leader[d])] >= 0)
      throw ConstraintError("tie follower " + std::to_string(leader[d]) + " is also a leader (chained or cyclic ties)");

  for (std::size_t d = 0; d < num_dofs; ++d)
    if (!constrained_[d]) {
      column_[d] = static_cast<std::ptrdiff_t>(free_dofs_.size());
      free_dofs_.push_back(d);
    }
  for (std::size_t d = 0; d < num_dofs; ++d) {
    if (!constrained_[d]) continue;
    if (leader[d] == -1) {
      column_[d] = -1;
    } else {
      const auto l = static_cast<std::size_t>(leader[d]);
      if (constrained_[l]) {  // leader is fixed
        column_[d] = -1;
        shift_[d] += shift_[l];
      } else {
        column_[d] = column_[l];
      }
    }
  }
}

Vector ConstraintMap::expand(const Vector& reduced) const {
  if (static_cast<std::size_t>(reduced.size()) != num_free()) throw ShapeError("reduced vector has wrong size");
  Vector u(static_cast<Eigen::Index>(num_dofs()));
  for (std::size_t d = 0; d < num_dofs(); ++d) u[d] = (column_[d] >= 0 ? reduced[column_[d]] : 0.0) + shift_[d];
  return u;
}

Vector ConstraintMap::impose(Vector u) const {
  if (static_cast<std::size_t>(u.size()) != num_dofs()) throw ShapeError("full vector has wrong size");
  for (std::size_t d = 0; d < num_dofs(); ++d)
    if (constrained_[d]) u[d] = (column_[d] >= 0 ? u[free_dofs_[column_[d]]] : 0.0) + shift_[d];
  return u;
}

Vector ConstraintMap::reduce(const Vector& full) const {
  Vector r = Vector::Zero(static_cast<Eigen::Index>(num_free()));
  for (std::size_t d = 0; d < num_dofs(); ++d)
    if (column_[d] >= 0) r[column_[d]] += full[d];
  return r;
}

Matrix ConstraintMap::reduce(const Matrix& full) const {
  const auto m = static_cast<Eigen::Index>(num_free());
  Matrix r = Matrix::Zero(m, m);
  for (std::size_t j = 0; j < num_dofs(); ++j) {
    if (column_[j] < 0) continue;
    for (std::size_t i = 0; i < num_dofs(); ++i)
      if (column_[i] >= 0) r(column_[i], column_[j]) += full(i, j);
  }
  return r;
}

Vector ConstraintMap::restrict(const Vector& full) const {
  Vector r(static_cast<Eigen::Index>(num_free()));
  for (std::size_t k = 0; k < num_free(); ++k) r[k] = full[free_dofs_[k]];
  return r;
}

ReducedSystem::Recovery ReducedSystem::recover(const Vector& reduced_solution) const {
  Recovery out;
  out.u = map.expand(reduced_solution);
  out.reactions = K_full * out.u - f_full;
  return out;
}

ReducedSystem apply_constraints(const Matrix& K, const Vector& f, const ConstraintSet& constraints, int dofs_per_node) {
  if (K.rows() != K.cols() || K.rows() != f.size()) throw ShapeError("apply_constraints: nonconforming K and f");
  ConstraintMap map(constraints, static_cast<std::size_t>(f.size()), dofs_per_node);
  const Vector g = map.expand(Vector::Zero(static_cast<Eigen::Index>(map.num_free())));
  return {map.reduce(K), map.reduce(Vector(f - K * g)), map, K, f};
}

namespace {

Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& K) {
  const auto n = K.rows();
  const double scale = K.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw SingularSystem(0);
  Eigen::PartialPivLU<Matrix> lu(K);
  const auto& LU = lu.matrixLU();
  const double threshold = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
  for (Eigen::Index k = 0; k < n; ++k)
    if (!(std::abs(LU(k, k)) > threshold)) throw SingularSystem(static_cast<std::size_t>(k));
  return lu;
}

}  // namespace

Vector solve_linear(const Matrix& K, const Vector& rhs) {
  if (K.rows() != K.cols() || K.rows() != rhs.size()) throw ShapeError("solve_linear: nonconforming system");
  if (K.rows() == 0) return Vector(0);
  return checked_lu(K).solve(rhs);
}

Matrix solve_linear(const Matrix& K, const Matrix& rhs) {
  if (K.rows() != K.cols() || K.rows() != rhs.rows()) throw ShapeError("solve_linear: nonconforming system");
  if (K.rows() == 0) return Matrix(0, rhs.cols());
  return checked_lu(K).solve(rhs);
}

// ---------------------------------------------------------------------------

NewtonResult newton_iterate(const ConstraintMap& map, Vector u0, const NewtonEvaluator& evaluate,
                            const NewtonOptions& options, const Matrix* fixed_tangent) {
  if (!(options.tol > 0.0) || options.max_iter < 1) throw ConfigError("Newton needs tol > 0 and max_iter >= 1");
  constexpr int kMaxStepCuts = 20;
  NewtonResult result;
  result.u = map.impose(std::move(u0));
  auto& report = result.report;
  std::optional<Eigen::PartialPivLU<Matrix>> fixed_lu;
  if (fixed_tangent) fixed_lu = checked_lu(map.reduce(*fixed_tangent));

  Vector residual;
  Matrix tangent;
  Matrix* tangent_out = fixed_tangent ? nullptr : &tangent;
  evaluate(result.u, residual, tangent_out);
  for (int it = 1;; ++it) {
    const Vector r = map.reduce(residual);
    const double norm = r.norm();
    report.residual_history.push_back(norm);
    report.iterations = it;
    if (!std::isfinite(norm)) break;
    if (norm <= options.tol) {
      report.converged = true;
      return result;
    }
    if (it == options.max_iter) break;
    const Vector delta = fixed_lu ? Vector(fixed_lu->solve(-r)) : solve_linear(map.reduce(tangent), Vector(-r));

    // Halve the step while the trial state inverts an element.
    double alpha = 1.0;
    for (int cut = 0;; ++cut) {
      Vector trial = result.u;
      for (std::size_t k = 0; k < map.num_free(); ++k) trial[map.free_dofs()[k]] += alpha * delta[k];
      trial = map.impose(std::move(trial));
      try {
        evaluate(trial, residual, tangent_out);
        result.u = std::move(trial);
        break;
      } catch (const ElementInversion&) {
        if (cut == kMaxStepCuts) throw;
      }
      alpha *= 0.5;
    }
  }
  throw NonConvergence("Newton did not converge in " + std::to_string(report.iterations) +
                           " iterations (last residual " + std::to_string(report.residual_history.back()) + ")",
                       report.residual_history);
}

NewtonResult newton_solve(const Discretization& disc, std::span<const MaterialParams> materials,
                          const ConstraintSet& constraints, const NewtonOptions& options, const Vector& f_ext,
                          const Vector& u0) {
  const auto n = static_cast<Eigen::Index>(disc.num_dofs());
  if (f_ext.size() != 0 && f_ext.size() != n) throw ShapeError("external force vector has wrong size");
  if (u0.size() != 0 && u0.size() != n) throw ShapeError("initial guess has wrong size");
  ConstraintMap map(constraints, disc.num_dofs());
  auto evaluate = [&](const Vector& u, Vector& residual, Matrix* tangent) {
    residual = assemble_internal_forces(disc, u, materials);
    if (f_ext.size() != 0) residual -= f_ext;
    if (tangent) *tangent = assemble_tangent(disc, u, materials);
  };
  return newton_iterate(map, u0.size() != 0 ? u0 : Vector::Zero(n), evaluate, options);
}

}  // namespace fe2ml
