#include <doctest.h>

#include <cmath>
#include <random>

#include "fe2ml/errors.hpp"
#include "fe2ml/fe.hpp"

using namespace fe2ml;

namespace {

Vector affine_field(const Mesh& mesh, const Tensor2& H) {
  Vector u(2 * static_cast<Eigen::Index>(mesh.num_nodes()));
  for (std::size_t n = 0; n < mesh.num_nodes(); ++n) u.segment<2>(2 * n) = H * mesh.nodes[n];
  return u;
}

Vector random_vector(Eigen::Index n, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  Vector v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

ConstraintSet affine_boundary(const Mesh& mesh, const Tensor2& H) {
  ConstraintSet cs;
  for (auto n : mesh.boundary_nodes) {
    const Eigen::Vector2d u = H * mesh.nodes[n];
    cs.dirichlet.push_back({n, 0, u[0]});
    cs.dirichlet.push_back({n, 1, u[1]});
  }
  return cs;
}

}  // namespace

TEST_CASE("shape functions: nodal values and partition of unity") {
  auto s = shape_eval(0.0, 0.0);
  for (int a = 0; a < 4; ++a) CHECK(s.values[a] == doctest::Approx(0.25));
  s = shape_eval(-1.0, -1.0);
  CHECK(s.values == Eigen::Vector4d(1, 0, 0, 0));
  CHECK(shape_eval(1, -1).values == Eigen::Vector4d(0, 1, 0, 0));
  CHECK(shape_eval(1, 1).values == Eigen::Vector4d(0, 0, 1, 0));
  CHECK(shape_eval(-1, 1).values == Eigen::Vector4d(0, 0, 0, 1));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double xi = d(rng), eta = d(rng);
    s = shape_eval(xi, eta);
    CHECK(s.values.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.gradients.colwise().sum().norm() < 1e-15);
    const double h = 1e-6;
    const Eigen::Vector4d dxi = (shape_eval(xi + h, eta).values - shape_eval(xi - h, eta).values) / (2 * h);
    CHECK((dxi - s.gradients.col(0)).norm() < 1e-9);
  }
}

TEST_CASE("2x2 Gauss rule integrates bicubics on the parent square") {
  const auto rule = QuadratureRule::gauss2x2();
  REQUIRE(rule.size() == 4);
  double w = 0, x2y2 = 0, x3y = 0;
  for (const auto& p : rule.points) {
    w += p.weight;
    x2y2 += p.weight * p.xi * p.xi * p.eta * p.eta;
    x3y += p.weight * p.xi * p.xi * p.xi * p.eta;
  }
  CHECK(w == doctest::Approx(4.0));
  CHECK(x2y2 == doctest::Approx(4.0 / 9.0));
  CHECK(std::abs(x3y) < 1e-15);
}

TEST_CASE("discretization geometry") {
  const Discretization disc(structured_mesh(3, 2, 1.5, 1.0));
  CHECK(disc.num_dofs() == 24);
  CHECK(disc.num_points() == 24);
  CHECK(disc.reference_volume() == doctest::Approx(1.5));
  double v = 0;
  for (std::size_t e = 0; e < 6; ++e)
    for (std::size_t q = 0; q < 4; ++q) v += disc.point(e, q).dV;
  CHECK(v == doctest::Approx(1.5));
}

TEST_CASE("deformation gradients reproduce an affine field; inversion detected") {
  const Discretization disc(structured_mesh(2, 2));
  Tensor2 H;
  H << 0.1, 0.05, -0.02, 0.03;
  for (const auto& F : deformation_gradients(disc, affine_field(disc.mesh(), H)))
    CHECK((F - Tensor2::Identity() - H).norm() < 1e-14);

  Tensor2 flip;
  flip << -2.0, 0, 0, 0;  // F = diag(-1, 1)
  CHECK_THROWS_AS(deformation_gradients(disc, affine_field(disc.mesh(), flip)), ElementInversion);
}

TEST_CASE("internal forces: zero at rest and under rigid translation") {
  const Discretization disc(structured_mesh(2, 3));
  const MaterialParams mat{};
  const auto n = static_cast<Eigen::Index>(disc.num_dofs());
  CHECK(assemble_internal_forces(disc, Vector::Zero(n), mat).norm() == 0.0);
  Vector t(n);
  for (Eigen::Index i = 0; i < n; i += 2) t.segment<2>(i) = Eigen::Vector2d(0.3, -0.7);
  CHECK(assemble_internal_forces(disc, t, mat).norm() < 1e-14);

  const Vector u = random_vector(n, 0.05, 5);
  CHECK((assemble_internal_forces(disc, u + t, mat) - assemble_internal_forces(disc, u, mat)).norm() < 1e-13);
}

TEST_CASE("internal forces of one element under homogeneous stretch equal lumped edge tractions") {
  const Discretization disc(structured_mesh(1, 1));
  Tensor2 H;
  H << 0.1, 0, 0, 0;
  const Vector f = assemble_internal_forces(disc, affine_field(disc.mesh(), H), MaterialParams{});
  // Each corner carries half of its two adjacent unit edges: f_a = P (n_1 + n_2) / 2.
  const double P11 = 0.21 / 2.2 + 0.21 / 1.1, P22 = 0.105;
  const std::array<Eigen::Vector2d, 4> normals_sum = {Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, -1),
                                                      Eigen::Vector2d(1, 1), Eigen::Vector2d(-1, 1)};
  const std::array<std::size_t, 4> node = {0, 1, 3, 2};  // structured ids for (0,0),(1,0),(1,1),(0,1)
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(f[2 * node[k]] == doctest::Approx(0.5 * P11 * normals_sum[k][0]).epsilon(1e-13));
    CHECK(f[2 * node[k] + 1] == doctest::Approx(0.5 * P22 * normals_sum[k][1]).epsilon(1e-13));
  }
}

TEST_CASE("tangent matches finite differences of the internal forces") {
  Mesh mesh = structured_mesh(2, 2, 1.0, 0.8);
  mesh.element_materials = {0, 1, 1, 0};
  const Discretization disc(mesh);
  const std::vector<MaterialParams> mats = {{1.0, 1.0}, {4.0, 3.0}};
  const auto n = static_cast<Eigen::Index>(disc.num_dofs());
  const Vector u = random_vector(n, 0.06, 17);
  const Matrix K = assemble_tangent(disc, u, mats);
  const double h = 1e-6;
  Matrix Kfd(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector up = u, um = u;
    up[j] += h;
    um[j] -= h;
    Kfd.col(j) = (assemble_internal_forces(disc, up, mats) - assemble_internal_forces(disc, um, mats)) / (2 * h);
  }
  CHECK((K - Kfd).cwiseAbs().maxCoeff() / K.cwiseAbs().maxCoeff() < 1e-5);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reference tangent equals the small-strain stiffness") {
  const MaterialParams mat{1.5, 0.6};
  const Discretization disc(structured_mesh(1, 1, 2.0, 1.0));
  const Matrix K = assemble_tangent(disc, Vector::Zero(8), mat);
  // Strain energy of linear fields: u^T K u = A (lambda tr(e)^2 + 2 mu e:e).
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    Tensor2 G;
    G << d(rng), d(rng), d(rng), d(rng);
    const Tensor2 e = 0.5 * (G + G.transpose());
    const Vector u = affine_field(disc.mesh(), G);
    const double energy = 2.0 * (mat.lambda * e.trace() * e.trace() + 2.0 * mat.mu * ddot(e, e));
    CHECK(u.dot(K * u) == doctest::Approx(energy).epsilon(1e-12));
  }
  // Infinitesimal rigid rotation is a zero-energy mode.
  Tensor2 W;
  W << 0, -1, 1, 0;
  CHECK((K * affine_field(disc.mesh(), W)).norm() < 1e-13);
  // Rank 8 - 3 rigid modes = 5.
  Eigen::SelfAdjointEigenSolver<Matrix> es(K);
  int zero = 0;
  for (auto ev : es.eigenvalues()) zero += std::abs(ev) < 1e-12;
  CHECK(zero == 3);
}

TEST_CASE("constraints: empty set leaves the system unchanged") {
  Matrix K(2, 2);
  K << 2, -1, -1, 3;
  const Vector f = Vector::Ones(2);
  const auto sys = apply_constraints(K, f, {}, 1);
  CHECK(sys.K == K);
  CHECK(sys.f == f);
}

TEST_CASE("constraints: two-spring chain") {
  Matrix K(3, 3);
  K << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  ConstraintSet cs;
  cs.dirichlet = {{0, 0, 0.0}, {2, 0, 0.1}};
  const auto sys = apply_constraints(K, Vector::Zero(3), cs, 1);
  REQUIRE(sys.K.rows() == 1);
  const auto rec = sys.recover(solve_linear(sys.K, sys.f));
  CHECK(rec.u[1] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(rec.reactions[0] == doctest::Approx(-0.05).epsilon(1e-14));
  CHECK(rec.reactions[2] == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(std::abs(rec.reactions[1]) < 1e-15);
}

TEST_CASE("constraints: every dof fixed to zero") {
  Matrix K(2, 2);
  K << 2, -1, -1, 2;
  Vector f(2);
  f << 0.3, -0.4;
  ConstraintSet cs;
  cs.dirichlet = {{0, 0, 0.0}, {0, 1, 0.0}};
  const auto sys = apply_constraints(K, f, cs);
  CHECK(sys.K.rows() == 0);
  const auto rec = sys.recover(Vector(0));
  CHECK(rec.u.norm() == 0.0);
  CHECK(rec.reactions == -f);
}

TEST_CASE("constraints: tie with offset") {
  // Three unit springs in a ring-free chain; dof 2 follows dof 1 with offset 0.2.
  Matrix K(3, 3);
  K << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  Vector f(3);
  f << 0, 1, 0;
  ConstraintSet cs;
  cs.dirichlet = {{0, 0, 0.0}};
  cs.ties = {{2, 1, 0, 0.2}};
  const auto sys = apply_constraints(K, f, cs, 1);
  REQUIRE(sys.K.rows() == 1);
  const auto rec = sys.recover(solve_linear(sys.K, sys.f));
  CHECK(rec.u[2] - rec.u[1] == doctest::Approx(0.2));
  // Equilibrium of the free combination: reactions on dofs 1 and 2 sum to zero.
  CHECK(std::abs(rec.reactions[1] + rec.reactions[2]) < 1e-14);
  // Hand solution: energy 1/2 u1^2 + 1/2 (0.2)^2 - u1 minimised at u1 = 1.
  CHECK(rec.u[1] == doctest::Approx(1.0));
}

TEST_CASE("constraints: malformed sets are rejected") {
  ConstraintSet dup;
  dup.dirichlet = {{0, 0, 0.0}, {0, 0, 1.0}};
  CHECK_THROWS_AS(ConstraintMap(dup, 4), ConstraintError);
  ConstraintSet chain;
  chain.ties = {{1, 0, 0, 0.0}, {2, 1, 0, 0.0}};
  CHECK_THROWS_AS(ConstraintMap(chain, 6), ConstraintError);
  ConstraintSet range;
  range.dirichlet = {{5, 0, 0.0}};
  CHECK_THROWS_AS(ConstraintMap(range, 4), ConstraintError);
  ConstraintSet fixed_follower;
  fixed_follower.dirichlet = {{1, 0, 0.0}};
  fixed_follower.ties = {{1, 0, 0, 0.0}};
  CHECK_THROWS_AS(ConstraintMap(fixed_follower, 4), ConstraintError);
}

TEST_CASE("linear solve") {
  CHECK(solve_linear(Matrix::Identity(3, 3), Vector(Vector::LinSpaced(3, 1, 3))) == Vector::LinSpaced(3, 1, 3));
  Matrix D(2, 2);
  D << 2, 0, 0, 4;
  CHECK((solve_linear(D, Vector(Eigen::Vector2d(2, 8))) - Eigen::Vector2d(1, 2)).norm() < 1e-15);

  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  Matrix A(20, 20);
  for (auto& a : A.reshaped()) a = g(rng);
  const Matrix K = A * A.transpose() + 20.0 * Matrix::Identity(20, 20);
  const Vector x = random_vector(20, 1.0, 4);
  CHECK((solve_linear(K, Vector(K * x)) - x).norm() / x.norm() < 1e-10);
  const Matrix X = Matrix::Random(20, 3);
  CHECK((solve_linear(K, Matrix(K * X)) - X).norm() / X.norm() < 1e-10);
}

TEST_CASE("linear solve: singular matrices raise with a pivot index") {
  Matrix S(2, 2);
  S << 1, 1, 1, 1;
  CHECK_THROWS_AS(solve_linear(S, Vector(Vector::Ones(2))), SingularSystem);
  CHECK_THROWS_AS(solve_linear(Matrix(Matrix::Zero(3, 3)), Vector(Vector::Ones(3))), SingularSystem);
  try {
    solve_linear(S, Vector(Vector::Ones(2)));
  } catch (const SingularSystem& e) {
    CHECK(e.pivot() == 1);
  }
  // Unsupported structure: a free-floating mesh has rigid modes.
  const Discretization disc(structured_mesh(1, 1));
  CHECK_THROWS_AS(solve_linear(assemble_tangent(disc, Vector::Zero(8), MaterialParams{}), Vector(Vector::Ones(8))),
                  SingularSystem);
}

TEST_CASE("Newton: zero load converges immediately") {
  const Discretization disc(structured_mesh(2, 2));
  ConstraintSet cs;
  cs.dirichlet = {{0, 0, 0.0}, {0, 1, 0.0}, {2, 1, 0.0}};
  const std::vector<MaterialParams> mats = {{}};
  const auto res = newton_solve(disc, mats, cs, {});
  CHECK(res.report.converged);
  CHECK(res.report.iterations == 1);
  CHECK(res.u.norm() == 0.0);
}

TEST_CASE("Newton: affine boundary data gives the homogeneous field") {
  const Mesh mesh = structured_mesh(3, 3);
  const Discretization disc(mesh);
  Tensor2 H;
  H << 0.1, 0, 0, 0;
  const std::vector<MaterialParams> mats = {{}};
  const auto res = newton_solve(disc, mats, affine_boundary(mesh, H), {});
  CHECK(res.report.converged);
  // iterations counts residual evaluations; corrections are one fewer.
  const int corrections = res.report.iterations - 1;
  CHECK(corrections >= 2);
  CHECK(corrections <= 3);
  CHECK((res.u - affine_field(mesh, H)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Newton: quadratic convergence on a heterogeneous shear problem") {
  Mesh mesh = structured_mesh(4, 4);
  mark_centered_inclusion(mesh, 4, 4, 2);
  const Discretization disc(mesh);
  Tensor2 H;
  H << 0.05, 0.2, 0.0, -0.05;
  const std::vector<MaterialParams> mats = {{1.0, 1.0}, {10.0, 10.0}};
  const auto res = newton_solve(disc, mats, affine_boundary(mesh, H), {1e-13, 25});
  REQUIRE(res.report.converged);
  const auto& r = res.report.residual_history;
  REQUIRE(r.size() >= 3);
  int quadratic_steps = 0;
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    CHECK(r[k + 1] < r[k]);
    if (r[k] < 1e-2 && r[k + 1] > 1e-14) {
      CHECK(r[k + 1] < 50.0 * r[k] * r[k]);
      ++quadratic_steps;
    }
  }
  CHECK(quadratic_steps >= 1);
}

TEST_CASE("Newton: external nodal forces balance the reactions") {
  const Mesh mesh = structured_mesh(2, 1, 2.0, 1.0);
  const Discretization disc(mesh);
  ConstraintSet cs;
  cs.dirichlet = {{0, 0, 0.0}, {0, 1, 0.0}, {3, 0, 0.0}};
  Vector f_ext = Vector::Zero(12);
  f_ext[2 * 2] = 0.05;
  f_ext[2 * 5] = 0.05;
  const std::vector<MaterialParams> mats = {{}};
  const auto res = newton_solve(disc, mats, cs, {1e-12, 25}, f_ext);
  REQUIRE(res.report.converged);
  const Vector R = assemble_internal_forces(disc, res.u, mats) - f_ext;
  CHECK(std::abs(R[0] + R[6]) == doctest::Approx(0.1).epsilon(1e-10));
  CHECK(res.u[4] > 0.0);
}

TEST_CASE("Newton: exhausting the budget raises NonConvergence with the history") {
  const Mesh mesh = structured_mesh(3, 3);
  const Discretization disc(mesh);
  Tensor2 H;
  H << 0.3, 0.1, 0, 0;
  const std::vector<MaterialParams> mats = {{}};
  try {
    newton_solve(disc, mats, affine_boundary(mesh, H), {1e-14, 1});
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.residual_history().size() == 1);
  }
}

TEST_CASE("Newton: fixed tangent still converges, linearly") {
  Mesh mesh = structured_mesh(3, 3);
  const Discretization disc(mesh);
  Tensor2 H;
  H << 0.08, 0.0, 0.0, 0.0;
  const auto cs = affine_boundary(mesh, H);
  const MaterialParams mat{};
  const ConstraintMap map(cs, disc.num_dofs());
  auto eval = [&](const Vector& u, Vector& r, Matrix* K) {
    r = assemble_internal_forces(disc, u, mat);
    if (K) *K = assemble_tangent(disc, u, mat);
  };
  const Matrix K0 = assemble_tangent(disc, Vector::Zero(static_cast<Eigen::Index>(disc.num_dofs())), mat);
  const auto fixed = newton_iterate(map, Vector::Zero(32), eval, {1e-11, 100}, &K0);
  const auto full = newton_iterate(map, Vector::Zero(32), eval, {1e-11, 100});
  CHECK(fixed.report.converged);
  CHECK(fixed.report.iterations > full.report.iterations);
  CHECK((fixed.u - full.u).cwiseAbs().maxCoeff() < 1e-10);
}
