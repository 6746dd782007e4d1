#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "magal/controller.hpp"

using namespace magal;

namespace {

ControllerState make(double tol, int dim, int p) {
  ControllerState st = ControllerState::make(tol, dim, {p});
  st.k_min = 1e-12;
  st.k_max = 10.0;
  return st;
}

}  // namespace

TEST_CASE("raw step law evaluates the pinned examples") {
  // TOL/N = 1e-3, S = 1, r = 1, p = 1 -> 1e-3
  ControllerState st = make(1e-3, 1, 1);
  CHECK(st.propose_step(0, 0.0, 1.0) == Catch::Approx(1e-3).margin(1e-18));

  // same with p = 2 -> sqrt(1e-3)
  ControllerState st2 = make(1e-3, 1, 2);
  CHECK(st2.propose_step(0, 0.0, 1.0) == Catch::Approx(std::sqrt(1e-3)).margin(1e-12));
}

TEST_CASE("geometric mean smoothing combines previous and raw step") {
  // k_prev = 0.01, k_raw = 0.04 -> 0.02
  ControllerState st = make(1e-3, 1, 1);
  double r = 1e-3 / 0.04;  // makes k_raw exactly 0.04
  CHECK(st.propose_step(0, 0.01, r) == Catch::Approx(0.02).margin(1e-15));
}

TEST_CASE("zero residual proposes the largest admissible step") {
  ControllerState st = make(1e-3, 1, 1);
  st.k_max = 0.5;
  CHECK(st.propose_step(0, 0.0, 0.0) == 0.5);
}

TEST_CASE("proposals are monotone in residual, factor and tolerance") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> utol(1e-8, 1e-2);
  std::uniform_real_distribution<double> ur(1e-10, 10.0);
  std::uniform_real_distribution<double> us(1e-4, 1e4);
  for (int trial = 0; trial < 200; ++trial) {
    double tol = utol(rng), r = ur(rng), s = us(rng);
    for (int p : {1, 2, 3}) {
      ControllerState st = make(tol, 1, p);
      st.stability_factors[0] = s;
      double k = st.propose_step(0, 0.0, r);
      // non-increasing in r
      CHECK(st.propose_step(0, 0.0, r * 2.0) <= k + 1e-18);
      // non-increasing in S
      st.stability_factors[0] = s * 3.0;
      CHECK(st.propose_step(0, 0.0, r) <= k + 1e-18);
      st.stability_factors[0] = s;
      // non-decreasing in TOL
      st.tol = tol * 2.0;
      CHECK(st.propose_step(0, 0.0, r) >= k - 1e-18);
    }
  }
}

TEST_CASE("geometric mean bounds the log-step change") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> uk(1e-6, 1.0);
  std::uniform_real_distribution<double> ur(1e-8, 1.0);
  ControllerState st = make(1e-4, 1, 2);
  st.k_min = 1e-12;
  st.k_max = 100.0;
  for (int trial = 0; trial < 200; ++trial) {
    double k_prev = uk(rng), r = ur(rng);
    double k_raw = st.raw_step(0, r);
    double k_new = st.propose_step(0, k_prev, r);
    if (k_new > st.k_min && k_new < st.k_max) {
      double lhs = std::abs(std::log(k_new) - std::log(k_prev));
      double rhs = 0.5 * std::abs(std::log(k_raw) - std::log(k_prev));
      CHECK(lhs <= rhs + 1e-12);
    }
  }
}

TEST_CASE("pi regulation responds to the residual history") {
  ControllerState st = make(1e-4, 1, 2);
  st.regulator = Regulator::pi;
  st.accept(0, 0.1, 0.5);
  double k_same = st.propose_step(0, 0.1, 0.5);
  double k_worse = st.propose_step(0, 0.1, 5.0);
  double k_better = st.propose_step(0, 0.1, 0.05);
  CHECK(k_worse < k_same);
  CHECK(k_better > k_same);
  // clamped to the admissible range in all cases
  for (double k : {k_same, k_worse, k_better}) {
    CHECK(k >= st.k_min);
    CHECK(k <= st.k_max);
  }
}

TEST_CASE("invalid controller states are rejected") {
  CHECK_THROWS_AS(ControllerState::make(0.0, 1, {1}), std::invalid_argument);
  CHECK_THROWS_AS(ControllerState::make(1e-4, 1, {0}), std::invalid_argument);
  ControllerState st = make(1e-4, 1, 1);
  CHECK_THROWS_AS(st.propose_step(0, 0.1, -1.0), std::invalid_argument);
}

TEST_CASE("sum estimate on pinned examples and a brute force oracle") {
  // single element k=0.1, p=1, r=2, s=3 -> 0.1^2 * 2 * 3 = 0.06
  ElementStat st;
  st.k = 0.1;
  st.p = 1;
  st.r = 2.0;
  st.weight = 3.0;
  CHECK(error_estimate_sum({st}) == Catch::Approx(0.06).margin(1e-15));

  // all residuals zero -> 0
  st.r = 0.0;
  CHECK(error_estimate_sum({st}) == 0.0);

  // two components, 2 + 3 elements, against independent summation
  std::vector<ElementStat> stats;
  double oracle = 0.0;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(0.1, 2.0);
  for (int comp = 0; comp < 2; ++comp) {
    int n = comp == 0 ? 2 : 3;
    for (int j = 0; j < n; ++j) {
      ElementStat e;
      e.comp = comp;
      e.k = uni(rng);
      e.r = uni(rng);
      e.weight = uni(rng);
      e.p = comp + 1;
      stats.push_back(e);
      oracle += std::pow(e.k, e.p + 1) * e.r * e.weight;
    }
  }
  CHECK(error_estimate_sum(stats) == Catch::Approx(oracle).margin(1e-15));
}

TEST_CASE("sum estimate refuses elements without weights") {
  ElementStat st;
  st.k = 0.1;
  st.r = 1.0;  // weight left at its NaN default
  CHECK_THROWS_AS(error_estimate_sum({st}), std::invalid_argument);
}

TEST_CASE("max estimate on pinned examples") {
  // one component, (k,r) = {(0.1,1),(0.2,1)}, p=1, S=2 -> 2 * 0.2
  ElementStat a, b;
  a.k = 0.1;
  a.r = 1.0;
  a.p = 1;
  b.k = 0.2;
  b.r = 1.0;
  b.p = 1;
  CHECK(error_estimate_max({a, b}, {2.0}) == Catch::Approx(0.4).margin(1e-15));

  a.r = b.r = 0.0;
  CHECK(error_estimate_max({a, b}, {2.0}) == 0.0);

  // max property: the estimate dominates every single-element contribution
  a.r = 0.7;
  b.r = 1.3;
  double e = error_estimate_max({a, b}, {2.0});
  CHECK(e >= 2.0 * std::pow(a.k, a.p) * a.r);
  CHECK(e >= 2.0 * std::pow(b.k, b.p) * b.r);
}

TEST_CASE("both estimates vanish together exactly when all residuals do") {
  std::vector<ElementStat> stats(3);
  for (int i = 0; i < 3; ++i) {
    stats[i].comp = 0;
    stats[i].k = 0.1 * (i + 1);
    stats[i].r = 0.0;
    stats[i].weight = 1.0;
    stats[i].p = 1;
  }
  CHECK(error_estimate_sum(stats) == 0.0);
  CHECK(error_estimate_max(stats, {1.0}) == 0.0);
  stats[1].r = 1e-8;
  CHECK(error_estimate_sum(stats) > 0.0);
  CHECK(error_estimate_max(stats, {1.0}) > 0.0);
}
