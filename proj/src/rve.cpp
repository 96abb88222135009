#include "fe2ml/rve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fe2ml/errors.hpp"

namespace fe2ml {

namespace {
constexpr double kGeomTol = 1e-10;
}

RveProblem::RveProblem(Mesh mesh, std::vector<MaterialParams> materials, BoundaryMode mode)
    : disc_(std::move(mesh)), materials_(std::move(materials)), mode_(mode) {
  if (materials_.empty()) throw ConfigError("RVE needs at least one material");
  for (const auto& m : materials_) m.validate();
  for (std::size_t e = 0; e < this->mesh().num_elements(); ++e) {
    if (this->mesh().material_id(e) >= materials_.size())
      throw ConfigError("RVE element " + std::to_string(e) + " references an undefined material");
    volume_ += element_area(this->mesh(), e);
  }
  if (std::abs(volume_ - disc_.reference_volume()) > 1e-12 * volume_)
    throw MeshError("RVE reference volume disagrees with quadrature (non-straight element edges?)");
  // Non-periodic meshes are reported by apply_macro_bc in Periodic mode.
  find_periodic_pairs();
}

void RveProblem::find_periodic_pairs() {
  const auto& m = mesh();
  double xmin = std::numeric_limits<double>::max(), ymin = xmin;
  double xmax = std::numeric_limits<double>::lowest(), ymax = xmax;
  for (auto n : m.boundary_nodes) {
    xmin = std::min(xmin, m.nodes[n].x());
    xmax = std::max(xmax, m.nodes[n].x());
    ymin = std::min(ymin, m.nodes[n].y());
    ymax = std::max(ymax, m.nodes[n].y());
  }
  auto near = [](double a, double b) { return std::abs(a - b) <= kGeomTol; };
  std::vector<std::size_t> left, right, bottom, top;
  std::array<int, 4> corner_count{};
  for (auto n : m.boundary_nodes) {
    const auto& X = m.nodes[n];
    const bool l = near(X.x(), xmin), r = near(X.x(), xmax), b = near(X.y(), ymin), t = near(X.y(), ymax);
    const int corner = (l && b) ? 0 : (r && b) ? 1 : (r && t) ? 2 : (l && t) ? 3 : -1;
    if (corner >= 0) {
      corners_[static_cast<std::size_t>(corner)] = n;
      ++corner_count[static_cast<std::size_t>(corner)];
    } else if (l) {
      left.push_back(n);
    } else if (r) {
      right.push_back(n);
    } else if (b) {
      bottom.push_back(n);
    } else if (t) {
      top.push_back(n);
    } else {
      periodic_error_ = "boundary node " + std::to_string(n) + " is not on the bounding box of the cell";
      return;
    }
  }
  if (corner_count != std::array<int, 4>{1, 1, 1, 1}) {
    periodic_error_ = "cell does not have exactly one node at each corner";
    return;
  }
  auto match = [&](const std::vector<std::size_t>& minus, const std::vector<std::size_t>& plus, int coord,
                   const char* edges) {
    if (minus.size() != plus.size()) {
      periodic_error_ = std::string(edges) + ": edges carry different node counts";
      return false;
    }
    std::vector<bool> used(plus.size(), false);
    for (auto n : minus) {
      bool found = false;
      for (std::size_t k = 0; k < plus.size() && !found; ++k)
        if (!used[k] && near(m.nodes[n][coord], m.nodes[plus[k]][coord])) {
          used[k] = true;
          pairs_.push_back({plus[k], n});
          found = true;
        }
      if (!found) {
        periodic_error_ = std::string(edges) + ": node " + std::to_string(n) + " has no mirror image";
        return false;
      }
    }
    return true;
  };
  if (!match(left, right, 1, "left/right") || !match(bottom, top, 0, "bottom/top")) pairs_.clear();
}

const std::array<std::size_t, 4>& RveProblem::corners() const {
  if (!is_periodic()) throw MeshNotPeriodic("RVE mesh is not periodic: " + periodic_error_);
  return corners_;
}

const std::vector<PeriodicPair>& RveProblem::periodic_pairs() const {
  if (!is_periodic()) throw MeshNotPeriodic("RVE mesh is not periodic: " + periodic_error_);
  return pairs_;
}

ConstraintSet apply_macro_bc(const RveProblem& rve, const Tensor2& F_M) {
  const double det = F_M.determinant();
  if (!(det > 0.0)) throw InvalidDeformation(det);
  const Tensor2 H = F_M - Tensor2::Identity();
  const auto& nodes = rve.mesh().nodes;
  ConstraintSet cs;
  auto pin = [&](std::size_t n) {
    const Eigen::Vector2d u = H * nodes[n];
    for (int i = 0; i < 2; ++i) cs.dirichlet.push_back({n, i, u[i]});
  };
  if (rve.mode() == BoundaryMode::Affine) {
    for (auto n : rve.mesh().boundary_nodes) pin(n);
    return cs;
  }
  for (auto n : rve.corners()) pin(n);
  for (const auto& pair : rve.periodic_pairs()) {
    const Eigen::Vector2d offset = H * (nodes[pair.plus] - nodes[pair.minus]);
    for (int i = 0; i < 2; ++i) cs.ties.push_back({pair.plus, pair.minus, i, offset[i]});
  }
  return cs;
}

RveSolution solve_rve(const RveProblem& rve, const Tensor2& F_M, const NewtonOptions& options) {
  const auto constraints = apply_macro_bc(rve, F_M);
  const auto& disc = rve.discretization();
  const auto& mesh = rve.mesh();
  const Tensor2 H = F_M - Tensor2::Identity();
  Vector u0(static_cast<Eigen::Index>(disc.num_dofs()));
  for (std::size_t n = 0; n < mesh.num_nodes(); ++n) u0.segment<2>(2 * n) = H * mesh.nodes[n];

  ConstraintMap map(constraints, disc.num_dofs());
  Vector f_int;
  auto evaluate = [&](const Vector& u, Vector& residual, Matrix* tangent) {
    residual = assemble_internal_forces(disc, u, rve.materials());
    f_int = residual;
    if (tangent) *tangent = assemble_tangent(disc, u, rve.materials());
  };
  auto result = newton_iterate(map, std::move(u0), evaluate, options);

  RveSolution sol;
  sol.u = std::move(result.u);
  sol.report = std::move(result.report);
  sol.F_M_applied = F_M;
  sol.f_p.reserve(mesh.boundary_nodes.size());
  for (auto n : mesh.boundary_nodes) sol.f_p.emplace_back(f_int.segment<2>(2 * n));
  return sol;
}

Tensor2 homogenized_pk(const RveSolution& sol, const RveProblem& rve, const Eigen::Vector2d& shift) {
  const auto& mesh = rve.mesh();
  if (sol.f_p.size() != mesh.boundary_nodes.size()) throw ShapeError("solution does not match RVE boundary");
  Tensor2 P = Tensor2::Zero();
  for (std::size_t i = 0; i < sol.f_p.size(); ++i)
    P += sol.f_p[i] * (mesh.nodes[mesh.boundary_nodes[i]] + shift).transpose();
  return P / rve.volume();
}

BoundaryPartition BoundaryPartition::of(const Mesh& mesh) {
  BoundaryPartition part;
  std::vector<bool> on_boundary(mesh.num_nodes(), false);
  for (auto n : mesh.boundary_nodes) {
    on_boundary[n] = true;
    part.p.push_back(2 * n);
    part.p.push_back(2 * n + 1);
  }
  for (std::size_t n = 0; n < mesh.num_nodes(); ++n)
    if (!on_boundary[n]) {
      part.f.push_back(2 * n);
      part.f.push_back(2 * n + 1);
    }
  return part;
}

CondensedStiffness condense_stiffness(const Matrix& K_full, const BoundaryPartition& part) {
  const auto n = static_cast<std::size_t>(K_full.rows());
  if (K_full.rows() != K_full.cols()) throw ShapeError("condense_stiffness: K must be square");
  std::vector<int> hits(n, 0);
  for (auto d : part.p) hits.at(d)++;
  for (auto d : part.f) hits.at(d)++;
  if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; }))
    throw ShapeError("boundary partition must cover every dof exactly once");

  const auto np = static_cast<Eigen::Index>(part.p.size()), nf = static_cast<Eigen::Index>(part.f.size());
  Matrix Kpp(np, np), Kpf(np, nf), Kfp(nf, np), Kff(nf, nf);
  for (Eigen::Index i = 0; i < np; ++i) {
    for (Eigen::Index j = 0; j < np; ++j) Kpp(i, j) = K_full(part.p[i], part.p[j]);
    for (Eigen::Index j = 0; j < nf; ++j) Kpf(i, j) = K_full(part.p[i], part.f[j]);
  }
  for (Eigen::Index i = 0; i < nf; ++i) {
    for (Eigen::Index j = 0; j < np; ++j) Kfp(i, j) = K_full(part.f[i], part.p[j]);
    for (Eigen::Index j = 0; j < nf; ++j) Kff(i, j) = K_full(part.f[i], part.f[j]);
  }
  CondensedStiffness cs;
  cs.K = nf == 0 ? Kpp : Matrix(Kpp - Kpf * solve_linear(Kff, Kfp));
  return cs;
}

CondensedStiffness condense_stiffness(const RveProblem& rve, const Matrix& K_full) {
  auto cs = condense_stiffness(K_full, BoundaryPartition::of(rve.mesh()));
  for (auto n : rve.mesh().boundary_nodes) cs.X.push_back(rve.mesh().nodes[n]);
  return cs;
}

Tensor4 homogenized_tangent(const CondensedStiffness& cs, double V0, TangentFormula formula) {
  const std::size_t np = cs.X.size();
  if (static_cast<std::size_t>(cs.K.rows()) != 2 * np || cs.K.rows() != cs.K.cols())
    throw ShapeError("condensed stiffness does not match its boundary coordinates");
  if (!(V0 > 0.0)) throw ConfigError("reference volume must be positive");
  Tensor4 C;
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < np; ++j) {
      const auto& Xd = formula == TangentFormula::Derived ? cs.X[j] : cs.X[i];
      for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 2; ++c) {
          const double k = cs.K(2 * i + a, 2 * j + c);
          for (int b = 0; b < 2; ++b)
            for (int d = 0; d < 2; ++d) C(a, b, c, d) += k * cs.X[i][b] * Xd[d];
        }
    }
  C *= 1.0 / V0;
  return C;
}

RveResponse homogenize(const RveProblem& rve, const Tensor2& F_M, bool with_tangent, const NewtonOptions& options,
                       TangentFormula formula) {
  RveResponse out{Tensor2::Zero(), std::nullopt, solve_rve(rve, F_M, options)};
  out.P = homogenized_pk(out.solution, rve);
  if (with_tangent) {
    const Matrix K = assemble_tangent(rve.discretization(), out.solution.u, rve.materials());
    out.C = homogenized_tangent(condense_stiffness(rve, K), rve.volume(), formula);
  }
  return out;
}

RveProblem inclusion_rve(std::size_t n, std::size_t inclusion_cells, const MaterialParams& matrix,
                         const MaterialParams& inclusion, BoundaryMode mode) {
  Mesh mesh = structured_mesh(n, n);
  mark_centered_inclusion(mesh, n, n, inclusion_cells);
  return RveProblem(std::move(mesh), {matrix, inclusion}, mode);
}

}  // namespace fe2ml
