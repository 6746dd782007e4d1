#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "magal/driver.hpp"
#include "magal/dual.hpp"
#include "magal/problems.hpp"
#include "magal/solver.hpp"

using namespace magal;

namespace {

// Primal trajectory for u' = lambda u solved accurately enough that the
// dual sees the right linearization.
Solution primal_decay(double lambda, double T, double k = 0.01) {
  ProblemSpec prob = scalar_linear(lambda, T);
  PrimalOptions opt;
  opt.method.family = Family::cG;
  opt.method.orders = {2};
  opt.fixed_steps = {k};
  opt.iteration.scheme = Scheme::newton;
  opt.iteration.tol_discrete = 1e-13;
  PrimalResult res = primal_solve(prob.system, opt);
  REQUIRE(res.success);
  return std::move(res.solution);
}

OdeSystem zero_system(int dim, double T) {
  OdeSystem sys;
  sys.dim = dim;
  sys.u0.assign(dim, 1.0);
  sys.final_time = T;
  sys.rhs_component = [](int, std::span<const double>, double) { return 0.0; };
  sys.jacobian_full = [dim](std::span<const double>, double, Eigen::MatrixXd& out) {
    out = Eigen::MatrixXd::Zero(dim, dim);
  };
  return sys;
}

Solution constant_primal(int dim, double T) {
  Solution sol(dim, std::vector<double>(dim, 1.0), T);
  for (int i = 0; i < dim; ++i) {
    ElementRecord e;
    e.t_begin = 0.0;
    e.t_end = T;
    e.family = Family::cG;
    e.q = 1;
    e.dofs = {1.0, 1.0};
    e.left_value = 1.0;
    sol.append(i, e);
  }
  return sol;
}

}  // namespace

TEST_CASE("dual of the zero field is constant") {
  const double T = 2.0;
  OdeSystem sys = zero_system(2, T);
  Solution primal = constant_primal(2, T);
  DualData data = dual_data_preset(DualPreset::endpoint_component, 2, 1);
  Solution dual = solve_dual(primal, sys, data);
  for (double t : {0.0, 0.3, 1.0, 1.7, 2.0}) {
    CHECK(dual.evaluate(0, t) == Catch::Approx(0.0).margin(1e-13));
    CHECK(dual.evaluate(1, t) == Catch::Approx(1.0).margin(1e-13));
  }
}

TEST_CASE("scalar dual reproduces the exponential in reversed time") {
  const double lambda = -1.0, T = 1.0;
  Solution primal = primal_decay(lambda, T);
  ProblemSpec prob = scalar_linear(lambda, T);
  DualData data = dual_data_preset(DualPreset::endpoint_component, 1, 0);
  DualOptions opt;
  opt.k = 0.002;
  Solution dual = solve_dual(primal, prob.system, data, opt);
  // phi(t) = e^{lambda (T - t)}
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
    CHECK(dual.evaluate(0, t) == Catch::Approx(std::exp(lambda * (T - t))).margin(1e-6));
}

TEST_CASE("constant forcing integrates to the remaining time") {
  // phi' = -g with J = 0 and g = 1 gives phi(t) = T - t.
  const double T = 1.5;
  OdeSystem sys = zero_system(1, T);
  Solution primal = constant_primal(1, T);
  DualData data = dual_data_preset(DualPreset::average_component, 1, 0);
  Solution dual = solve_dual(primal, sys, data);
  for (double t : {0.0, 0.5, 1.0, 1.5})
    CHECK(dual.evaluate(0, t) == Catch::Approx(T - t).margin(1e-10));
}

TEST_CASE("dual data presets fill the terminal vector") {
  DualData a = dual_data_preset(DualPreset::endpoint_component, 3, 2);
  CHECK(a.phi_T == std::vector<double>{0.0, 0.0, 1.0});
  CHECK_FALSE(a.has_forcing());

  DualData b = dual_data_preset(DualPreset::endpoint_l2, 3, 0, {0.6, 0.8, 0.0});
  CHECK(b.phi_T[0] == Catch::Approx(0.6).margin(1e-15));
  CHECK(b.phi_T[1] == Catch::Approx(0.8).margin(1e-15));
  CHECK(b.phi_T[2] == 0.0);
  CHECK_THROWS_AS(dual_data_preset(DualPreset::endpoint_l2, 3, 0, {0.0, 0.0, 0.0}),
                  std::invalid_argument);

  DualData c = dual_data_preset(DualPreset::average_component, 3, 1);
  REQUIRE(c.has_forcing());
  std::vector<double> g(3, -1.0);
  c.forcing(0.5, g);
  CHECK(g == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("dual solve rejects inconsistent inputs") {
  const double T = 1.0;
  OdeSystem sys = zero_system(1, T);
  Solution incomplete(1, {1.0}, T);  // frontier still at 0
  DualData data = dual_data_preset(DualPreset::endpoint_component, 1, 0);
  CHECK_THROWS_AS(solve_dual(incomplete, sys, data), std::invalid_argument);

  Solution primal = constant_primal(1, T);
  DualData wrong;
  wrong.phi_T = {1.0, 2.0};
  CHECK_THROWS_AS(solve_dual(primal, sys, wrong), std::invalid_argument);
}

TEST_CASE("dual solves are linear in the terminal data") {
  const double T = 1.0;
  Solution primal = primal_decay(-1.0, T);
  ProblemSpec prob = scalar_linear(-1.0, T);
  DualData one = dual_data_preset(DualPreset::endpoint_component, 1, 0);
  DualData three;
  three.phi_T = {3.0};
  Solution d1 = solve_dual(primal, prob.system, one);
  Solution d3 = solve_dual(primal, prob.system, three);
  for (double t : {0.0, 0.4, 1.0})
    CHECK(d3.evaluate(0, t) == Catch::Approx(3.0 * d1.evaluate(0, t)).margin(1e-8));
}

TEST_CASE("fundamental matrix of the zero field is the identity") {
  const double T = 1.0;
  OdeSystem sys = zero_system(2, T);
  Solution primal = constant_primal(2, T);
  DualOptions opt;
  opt.norm_samples = 50;
  PhiSamples phi = fundamental_matrix(primal, sys, opt);
  REQUIRE(phi.times.size() == 50);
  for (const Eigen::MatrixXd& m : phi.phi)
    CHECK((m - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  // S_bar^[0] = int ||I|| = T; S_bar^[1] = 0
  CHECK(stability_factor_bound(phi, 0) == Catch::Approx(T).margin(1e-10));
  CHECK(stability_factor_bound(phi, 1) == Catch::Approx(0.0).margin(1e-10));
  CHECK_THROWS_AS(stability_factor_bound(phi, 3), std::invalid_argument);
}

TEST_CASE("scalar stability bound matches the closed form") {
  // Phi(t) = e^{lambda (T-t)}: S_bar^[0] = (1 - e^{lambda T}) / (-lambda).
  const double lambda = -1.0, T = 1.0;
  Solution primal = primal_decay(lambda, T);
  ProblemSpec prob = scalar_linear(lambda, T);
  DualOptions opt;
  opt.k = 0.002;
  opt.norm_samples = 2000;
  PhiSamples phi = fundamental_matrix(primal, prob.system, opt);
  double expect = (1.0 - std::exp(lambda * T)) / (-lambda);
  CHECK(stability_factor_bound(phi, 0) == Catch::Approx(expect).margin(1e-4));
  // |Phi'| = |lambda| |Phi|, so S_bar^[1] = |lambda| S_bar^[0]
  CHECK(stability_factor_bound(phi, 1) == Catch::Approx(std::abs(lambda) * expect).margin(1e-3));
}

TEST_CASE("stability weights integrate the dual derivative") {
  const double lambda = -1.0, T = 1.0;
  Solution primal = primal_decay(lambda, T);
  ProblemSpec prob = scalar_linear(lambda, T);
  DualData data = dual_data_preset(DualPreset::endpoint_component, 1, 0);
  DualOptions opt;
  opt.k = 0.002;
  Solution dual = solve_dual(primal, prob.system, data, opt);

  // elements tiling [0,T] uniformly
  std::vector<ElementStat> stats;
  const int n = 20;
  for (int j = 0; j < n; ++j) {
    ElementStat st;
    st.comp = 0;
    st.t_begin = T * j / n;
    st.t_end = T * (j + 1) / n;
    st.k = T / n;
    st.p = 1;
    stats.push_back(st);
  }
  std::vector<double> factors = stability_weights(dual, stats, {1});

  // S_0 = int_0^T |phi'| = 1 - e^{-T}
  CHECK(factors[0] == Catch::Approx(1.0 - std::exp(-T)).margin(1e-3));
  // sum of k * s_ij recovers S_0 within sampling error
  double acc = 0.0;
  for (const auto& st : stats) {
    CHECK(st.weight > 0.0);
    acc += st.k * st.weight;
  }
  CHECK(acc == Catch::Approx(factors[0]).epsilon(0.05));
  // weights decrease toward t = 0 where |phi'| is smallest
  CHECK(stats.front().weight < stats.back().weight);
}

TEST_CASE("computational error models") {
  CHECK(computational_error_model(2.0, 1e-3) == Catch::Approx(2e-13).epsilon(1e-12));
  CHECK_THROWS_AS(computational_error_model(0.0, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(computational_error_model(1.0, 0.0), std::invalid_argument);

  // the Lorenz preset is exactly 1 at T = 45, k_min = 0.1
  CHECK(lorenz_computational_error_model(45.0, 0.1) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(lorenz_computational_error_model(30.0, 0.1) ==
        Catch::Approx(std::pow(10.0, -6.0) * 10.0).epsilon(1e-10));
}

TEST_CASE("solution truncation preserves values on the kept range") {
  Solution primal = primal_decay(-1.0, 1.0, 0.04);
  Solution cut = truncate_solution(primal, 0.53);
  CHECK(cut.final_time() == Catch::Approx(0.53));
  CHECK(cut.min_frontier() == Catch::Approx(0.53));
  for (double t : {0.0, 0.1, 0.33, 0.52, 0.53})
    CHECK(cut.evaluate(0, t) == Catch::Approx(primal.evaluate(0, t)).margin(1e-12));
}
