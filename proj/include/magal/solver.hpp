#pragma once

// The outer adaptive loop: primal solve with steps from the current
// stability factors, dual solve, stability weights, error estimate, repeat
// until the estimate drops below TOL.

#include <algorithm>
#include <vector>

#include "magal/driver.hpp"
#include "magal/dual.hpp"

namespace magal {

struct AdaptiveOptions {
  MethodSpec method;
  Strategy strategy = Strategy::dyadic;
  Scheme scheme = Scheme::fixpoint;
  double tol = 1e-4;
  Regulator regulator = Regulator::geomean;
  double k_min = 1e-10;
  double k_max = 0.1;
  int rounds_max = 10;
  DualOptions dual_options;
  int weight_samples = 2000;
  std::ostream* trace = nullptr;
};

struct AdaptiveResult {
  Solution solution;
  StabilityReport report;
  std::vector<ElementStat> stats;
  double error_estimate = 0.0;
  bool accepted = false;
  int rounds = 0;
  long total_elements = 0;
  int step_reductions = 0;
};

inline std::vector<int> order_exponents(const MethodSpec& method, int dim) {
  std::vector<int> p(dim);
  for (int i = 0; i < dim; ++i) p[i] = order_exponent(method.family, method.order(i));
  return p;
}

inline AdaptiveResult adaptive_solve(const OdeSystem& sys, AdaptiveOptions opt,
                                     const DualData& dual_data) {
  sys.validate();
  const int dim = sys.dim;
  const double T = sys.final_time;
  std::vector<int> exponents = order_exponents(opt.method, dim);

  std::vector<double> factors(dim, 1.0);  // preliminary stability factor guess
  AdaptiveResult res;

  for (int round = 1; round <= opt.rounds_max; ++round) {
    res.rounds = round;

    PrimalOptions popt;
    popt.method = opt.method;
    popt.strategy = opt.strategy;
    popt.iteration.scheme = opt.scheme;
    double max_s = *std::max_element(factors.begin(), factors.end());
    // Keep the computational-error contribution an order below TOL.
    popt.iteration.tol_discrete = 0.1 * opt.tol / (dim * std::max(max_s, 1e-2) * T);
    popt.controller = ControllerState::make(opt.tol, dim, exponents);
    popt.controller.regulator = opt.regulator;
    popt.controller.k_min = opt.k_min;
    popt.controller.k_max = opt.k_max;
    popt.controller.stability_factors = factors;
    popt.k_max = opt.k_max;
    popt.trace = opt.trace;

    PrimalResult primal = primal_solve(sys, popt);
    if (!primal.success) {
      res.solution = std::move(primal.solution);
      res.stats = std::move(primal.stats);
      return res;  // accepted stays false; message lost to the report
    }

    Solution dual = solve_dual(primal.solution, sys, dual_data, opt.dual_options);
    std::vector<double> new_factors =
        stability_weights(dual, primal.stats, exponents, opt.weight_samples);
    res.error_estimate = error_estimate_sum(primal.stats);

    res.solution = std::move(primal.solution);
    res.stats = std::move(primal.stats);
    res.report.dual = std::move(dual);
    res.report.factors = new_factors;
    res.report.error_estimate = res.error_estimate;
    res.total_elements += primal.total_elements;
    res.step_reductions += primal.step_reductions;

    if (res.error_estimate <= opt.tol) {
      res.accepted = true;
      return res;
    }
    factors = std::move(new_factors);
    // The step law targets the max estimate; when the reported sum estimate
    // overshoots TOL anyway, inflate the factors so the next round's steps
    // shrink instead of reproducing the same solve.
    double inflate = 1.2 * res.error_estimate / opt.tol;
    if (inflate > 1.0)
      for (double& s : factors) s *= inflate;
    for (double& s : factors) s = std::max(s, 1e-6);  // keep the step law finite
  }
  return res;
}

// Truncate a trajectory to the horizon [0, t_cut]; the element containing
// t_cut is re-expressed on the clipped interval (exact for polynomials).
inline Solution truncate_solution(const Solution& sol, double t_cut) {
  Solution out(sol.dim(), sol.initial_state(), t_cut);
  for (int i = 0; i < sol.dim(); ++i) {
    for (const auto& e : sol.elements(i)) {
      if (e.t_end <= t_cut * (1.0 + 1e-14)) {
        out.append(i, e);
        if (e.t_end >= t_cut * (1.0 - 1e-14)) break;
        continue;
      }
      if (e.t_begin >= t_cut) break;
      ElementRecord clipped = e;
      clipped.t_end = t_cut;
      const MethodTableau& tab = tableau(e.family, e.q);
      double k_new = t_cut - e.t_begin;
      for (int m = 0; m <= e.q; ++m) {
        double s = (e.t_begin + tab.nodes[m] * k_new - e.t_begin) / e.k();
        clipped.dofs[m] = evaluate_basis(tab, e.dofs, s);
      }
      out.append(i, clipped);
      break;
    }
  }
  return out;
}

}  // namespace magal
