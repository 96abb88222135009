#include <doctest.h>

#include <random>

#include "fe2ml/errors.hpp"
#include "fe2ml/fe2.hpp"

using namespace fe2ml;

namespace {

std::shared_ptr<const RveProblem> homogeneous_rve(const MaterialParams& mat = {}) {
  return std::make_shared<const RveProblem>(structured_mesh(2, 2), mat, BoundaryMode::Periodic);
}

// Single-scale reference: the same macro problem solved with the neo-Hookean
// law at every Gauss point, incrementally.
std::vector<Vector> single_scale(const MacroProblem& macro, const MaterialParams& mat) {
  std::vector<Vector> out;
  const auto n = static_cast<Eigen::Index>(macro.disc.num_dofs());
  Vector u = Vector::Zero(n);
  const std::vector<MaterialParams> mats = {mat};
  for (int step = 1; step <= macro.load.n_increments; ++step) {
    const double s = static_cast<double>(step) / macro.load.n_increments;
    ConstraintSet cs = macro.fixed_bcs;
    Vector f = Vector::Zero(n);
    for (const auto& t : macro.load.targets) {
      if (macro.load.kind == LoadKind::PrescribedDisplacement)
        cs.dirichlet.push_back({t.node, t.component, s * t.value});
      else
        f[static_cast<Eigen::Index>(2 * t.node + t.component)] += s * t.value;
    }
    u = newton_solve(macro.disc, mats, cs, {1e-12, 30}, f, u).u;
    out.push_back(u);
  }
  return out;
}

MacroProblem shear_problem() {
  MacroProblem m = default_macro_problem(4, 0.0, 2, 2);
  m.fixed_bcs = {};
  m.load.targets.clear();
  for (std::size_t i = 0; i <= 2; ++i) {
    m.fixed_bcs.dirichlet.push_back({i, 0, 0.0});
    m.fixed_bcs.dirichlet.push_back({i, 1, 0.0});
    m.load.targets.push_back({6 + i, 0, 0.08});
    m.load.targets.push_back({6 + i, 1, 0.0});
  }
  return m;
}

MacroProblem force_problem() {
  MacroProblem m = default_macro_problem(3, 0.0, 2, 2);
  m.load.kind = LoadKind::NodalForce;
  m.load.targets = {{2, 0, 0.025}, {5, 0, 0.05}, {8, 0, 0.025}};
  return m;
}

// Trained on the closed-form law; cheap stand-in for an RVE-trained network.
std::shared_ptr<const MlpNetwork> closed_form_surrogate(double amplitude) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-amplitude, amplitude);
  const int n = 300;
  TrainingData data{Eigen::MatrixXd(n, 4), Eigen::MatrixXd(n, 4)};
  for (int i = 0; i < n; ++i) {
    Tensor2 F = Tensor2::Identity();
    if (i > 0)
      for (int k = 0; k < 4; ++k) F(k / 2, k % 2) += d(rng);
    data.inputs.row(i) = flatten(F).transpose();
    data.targets.row(i) = flatten(first_pk(F, MaterialParams{})).transpose();
  }
  MlpNetwork net = init_nguyen_widrow({4, 12, 4}, 3);
  fit_normalization(net, data);
  TrainingConfig cfg;
  cfg.max_iterations = 300;
  cfg.target_mse = 1e-9;
  return std::make_shared<const MlpNetwork>(train_lm(std::move(net), data, cfg).first);
}

}  // namespace

TEST_CASE("default macro problem layout") {
  const auto m = default_macro_problem();
  CHECK(m.disc.mesh().num_nodes() == 9);
  CHECK(m.disc.mesh().num_elements() == 4);
  CHECK(m.load.n_increments == 5);
  CHECK(m.load.targets.size() == 3);
  for (const auto& t : m.load.targets) {
    CHECK(m.disc.mesh().nodes[t.node].x() == 1.0);
    CHECK(t.value == 0.1);
  }
  CHECK(m.fixed_bcs.dirichlet.size() == 4);
}

TEST_CASE("provider must have exactly one backend") {
  ConstitutiveProvider none;
  CHECK_THROWS_AS(none.validate(), ConfigError);
  auto both = ConstitutiveProvider::direct(homogeneous_rve());
  both.network = std::make_shared<const MlpNetwork>(zero_network({4, 2, 4}));
  CHECK_THROWS_AS(both.validate(), ConfigError);
  auto wrong = ConstitutiveProvider::surrogate(std::make_shared<const MlpNetwork>(zero_network({3, 2, 4})));
  CHECK_THROWS_AS(wrong.validate(), ConfigError);
}

TEST_CASE("direct Gauss-point response on a homogeneous cell is the constitutive law") {
  const MaterialParams mat{1.4, 0.9};
  const auto provider = ConstitutiveProvider::direct(homogeneous_rve(mat));
  CHECK(gauss_point_response(provider, Tensor2::Identity(), false).P.norm() == 0.0);
  Tensor2 F;
  F << 1.07, 0.05, -0.04, 0.96;
  const auto r = gauss_point_response(provider, F, true);
  CHECK((r.P - first_pk(F, mat)).cwiseAbs().maxCoeff() < 1e-6);
  const Tensor4 fd = material_tangent_fd(mat, F);
  CHECK((*r.C - fd).max_abs() / fd.max_abs() < 1e-3);
  CHECK_FALSE(r.extrapolated);
}

TEST_CASE("zero load: zero displacement after one evaluation") {
  auto macro = default_macro_problem(1, 0.0);
  const auto res = run_fe2(macro, ConstitutiveProvider::direct(homogeneous_rve()));
  REQUIRE(res.completed());
  REQUIRE(res.increments.size() == 1);
  CHECK(res.increments[0].u.norm() == 0.0);
  CHECK(res.increments[0].newton.iterations == 1);
}

TEST_CASE("direct mode on homogeneous media equals the single-scale solve") {
  const MaterialParams mat{1.0, 1.0};
  for (const auto& macro : {default_macro_problem(5, 0.1), shear_problem(), force_problem()}) {
    const auto res = run_fe2(macro, ConstitutiveProvider::direct(homogeneous_rve(mat)), {{1e-10, 25}, 1});
    REQUIRE(res.completed());
    const auto ref = single_scale(macro, mat);
    REQUIRE(res.increments.size() == ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(res.increments[k].newton.converged);
      CHECK((res.increments[k].u - ref[k]).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(res.increments.back().u.cwiseAbs().maxCoeff() > 0.01);
  }
}

TEST_CASE("uniaxial stretch of a homogeneous block gives a uniform Gauss-point state") {
  const auto res = run_fe2(default_macro_problem(5, 0.1), ConstitutiveProvider::direct(homogeneous_rve()));
  REQUIRE(res.completed());
  const auto& last = res.increments.back();
  CHECK(last.fraction == 1.0);
  for (const auto& g : last.gauss_points) {
    CHECK(g.F(0, 0) == doctest::Approx(1.1).epsilon(1e-9));
    CHECK(std::abs(g.P(1, 1)) < 1e-8);  // traction-free lateral faces
  }
}

TEST_CASE("initial tangent policy: same solution, more iterations") {
  const auto macro = default_macro_problem(5, 0.1);
  const auto rve = std::make_shared<const RveProblem>(inclusion_rve(4, 2, {1, 1}, {10, 10}));
  const Fe2Options opts{{1e-9, 200}, 1};
  const auto per = run_fe2(macro, ConstitutiveProvider::direct(rve, TangentPolicy::PerIteration), opts);
  const auto ini = run_fe2(macro, ConstitutiveProvider::direct(rve, TangentPolicy::Initial), opts);
  REQUIRE(per.completed());
  REQUIRE(ini.completed());
  int it_per = 0, it_ini = 0;
  for (std::size_t k = 0; k < per.increments.size(); ++k) {
    CHECK((per.increments[k].u - ini.increments[k].u).cwiseAbs().maxCoeff() < 1e-8);
    it_per += per.increments[k].newton.iterations;
    it_ini += ini.increments[k].newton.iterations;
  }
  CHECK(it_ini > it_per);
  CHECK(ini.tangent_policy == "initial");
}

TEST_CASE("runs are reproducible and independent of the worker count") {
  const auto macro = default_macro_problem(2, 0.05);
  const auto rve = std::make_shared<const RveProblem>(inclusion_rve(4, 2, {1, 1}, {5, 5}));
  const auto a = run_fe2(macro, ConstitutiveProvider::direct(rve), {{1e-9, 25}, 1});
  const auto b = run_fe2(macro, ConstitutiveProvider::direct(rve), {{1e-9, 25}, 4});
  REQUIRE(a.increments.size() == b.increments.size());
  for (std::size_t k = 0; k < a.increments.size(); ++k) {
    CHECK(a.increments[k].u == b.increments[k].u);
    CHECK(a.increments[k].newton.residual_history == b.increments[k].newton.residual_history);
  }
}

TEST_CASE("solver failures end the run with a failure record") {
  const auto macro = default_macro_problem(1, 0.1);
  const auto rve = std::make_shared<const RveProblem>(inclusion_rve(4, 2, {1, 1}, {10, 10}));
  const auto res = run_fe2(macro, ConstitutiveProvider::direct(rve), {{1e-14, 1}, 1});
  CHECK_FALSE(res.completed());
  REQUIRE(res.failure);
  CHECK(res.failure->step == 1);
  CHECK(res.failure->residual_history.size() == 1);
  CHECK(res.increments.empty());

  auto crushing = ConstitutiveProvider::direct(rve);
  crushing.rve_newton = {1e-10, 2};
  const auto res2 = run_fe2(default_macro_problem(1, -0.4), crushing);
  CHECK_FALSE(res2.completed());
}

TEST_CASE("insufficient supports are rejected before the first increment") {
  auto macro = default_macro_problem(1, 0.1);
  macro.fixed_bcs.dirichlet.pop_back();  // free vertical rigid translation
  CHECK_THROWS_AS(run_fe2(macro, ConstitutiveProvider::direct(homogeneous_rve())), ConfigError);
  // A zero network has a zero tangent everywhere.
  CHECK_THROWS_AS(run_fe2(default_macro_problem(),
                          ConstitutiveProvider::surrogate(std::make_shared<const MlpNetwork>(zero_network({4, 3, 4})))),
                  ConfigError);
}

TEST_CASE("surrogate mode tracks direct mode and flags extrapolation") {
  const auto macro = default_macro_problem(5, 0.1);
  const auto net = closed_form_surrogate(0.15);
  auto provider = ConstitutiveProvider::surrogate(net);
  provider.training_amplitude = 0.15;
  const auto sur = run_fe2(macro, provider);
  const auto dir = run_fe2(macro, ConstitutiveProvider::direct(homogeneous_rve()));
  REQUIRE(sur.completed());
  REQUIRE(dir.completed());
  CHECK(sur.extrapolation_warnings() == 0);
  const auto cmp = compare_runs(dir, sur);
  CHECK(cmp.max_relative_displacement_error() < 0.02);
  CHECK(cmp.max_relative_stress_error() < 0.05);

  provider.training_amplitude = 0.02;
  CHECK(run_fe2(macro, provider).extrapolation_warnings() > 0);
  provider.training_amplitude.reset();
  CHECK(run_fe2(default_macro_problem(2, 0.4), provider).extrapolation_warnings() > 0);
}

TEST_CASE("comparison of identical runs is all zeros") {
  const auto res = run_fe2(default_macro_problem(2, 0.05), ConstitutiveProvider::direct(homogeneous_rve()));
  const auto cmp = compare_runs(res, res);
  CHECK(cmp.time_ratio == 1.0);
  for (const auto& c : cmp.increments) {
    CHECK(c.max_du == 0.0);
    CHECK(c.rms_du == 0.0);
    CHECK(c.max_dP == 0.0);
  }
  CHECK(cmp.max_relative_displacement_error() == 0.0);

  auto shorter = res;
  shorter.increments.pop_back();
  CHECK_THROWS_AS(compare_runs(res, shorter), IncompatibleResults);
}

TEST_CASE("comparison metrics match a recomputation from the records") {
  const auto macro = default_macro_problem(3, 0.1);
  const auto a = run_fe2(macro, ConstitutiveProvider::direct(homogeneous_rve({1.0, 1.0})));
  const auto b = run_fe2(macro, ConstitutiveProvider::direct(homogeneous_rve({1.1, 0.9})));
  const auto cmp = compare_runs(a, b);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& ua = a.increments[k].u;
    const auto& ub = b.increments[k].u;
    double max_du = 0, max_u = 0, sum = 0;
    for (Eigen::Index n = 0; n < 9; ++n) {
      const double dx = ua[2 * n] - ub[2 * n], dy = ua[2 * n + 1] - ub[2 * n + 1];
      max_du = std::max(max_du, std::hypot(dx, dy));
      max_u = std::max(max_u, std::hypot(ua[2 * n], ua[2 * n + 1]));
      sum += dx * dx + dy * dy;
    }
    CHECK(cmp.increments[k].max_du == doctest::Approx(max_du).epsilon(1e-14));
    CHECK(cmp.increments[k].max_u == doctest::Approx(max_u).epsilon(1e-14));
    CHECK(cmp.increments[k].rms_du == doctest::Approx(std::sqrt(sum / 9)).epsilon(1e-14));
  }
}

TEST_CASE("results document round trip") {
  auto res = run_fe2(default_macro_problem(2, 0.05), ConstitutiveProvider::direct(homogeneous_rve()));
  res.config_hash = "abc";
  const auto back = result_from_json(nlohmann::json::parse(result_to_json(res).dump()));
  CHECK(back.mode == "direct");
  CHECK(back.config_hash == "abc");
  CHECK(back.online_seconds == res.online_seconds);
  REQUIRE(back.increments.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back.increments[k].u == res.increments[k].u);
    CHECK(back.increments[k].newton.residual_history == res.increments[k].newton.residual_history);
    for (std::size_t g = 0; g < res.increments[k].gauss_points.size(); ++g)
      CHECK(back.increments[k].gauss_points[g].P == res.increments[k].gauss_points[g].P);
  }
  const std::string csv = displacements_csv(res);
  CHECK(csv.rfind("increment,node,u1,u2\n1,0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 9);

  const std::string table = comparison_table(compare_runs(res, back));
  CHECK(table.find("max |du|") != std::string::npos);
  CHECK(table.find("0.000000000e+00") != std::string::npos);
}
