#pragma once

// The primal solve loop: build a slab, iterate to convergence, cut covered
// elements, extend, repeat. Steps come either from a fixed per-component
// preset or from the adaptive controller; non-convergence triggers step
// reduction and a slab rebuild.

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "magal/controller.hpp"
#include "magal/iteration.hpp"
#include "magal/system.hpp"
#include "magal/timeslab.hpp"

namespace magal {

struct PrimalOptions {
  MethodSpec method;
  Strategy strategy = Strategy::dyadic;
  IterationConfig iteration;
  double k_max = std::numeric_limits<double>::infinity();
  double k_min_hard = 1e-14;

  // Fixed per-component steps (size dim, or size 1 for uniform). When
  // empty, steps come from the controller.
  std::vector<double> fixed_steps;
  ControllerState controller;

  bool allow_step_reduction = true;
  int max_reductions = 200;
  std::ostream* trace = nullptr;
  long cycle_cap = 1000000;
};

struct PrimalResult {
  Solution solution;
  std::vector<ElementStat> stats;
  bool success = false;
  std::string message;
  long slabs = 0;
  long total_sweeps = 0;
  long total_elements = 0;
  double min_step = std::numeric_limits<double>::infinity();
  int step_reductions = 0;
};

inline int order_exponent(Family family, int q) {
  return family == Family::cG ? q : q + 1;
}

namespace detail {

inline void trace_line(std::ostream* out, const char* event, const TimeSlab& slab,
                       const Solution& sol) {
  if (!out) return;
  double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
  for (int i = 0; i < sol.dim(); ++i) {
    mn = std::min(mn, sol.frontier(i));
    mx = std::max(mx, sol.frontier(i));
  }
  *out << event << " slab_end=" << slab.slab_end << " elements=" << slab.elements.size()
       << " min_frontier=" << mn << " max_frontier=" << mx << '\n';
}

}  // namespace detail

inline PrimalResult primal_solve(const OdeSystem& sys, PrimalOptions opt) {
  sys.validate();
  opt.iteration.validate();
  const int dim = sys.dim;
  const double T = sys.final_time;

  PrimalResult res;
  res.solution = Solution(dim, sys.u0, T);
  Solution& sol = res.solution;

  const bool fixed = !opt.fixed_steps.empty();
  std::vector<double> proposed(dim);
  if (fixed) {
    for (int i = 0; i < dim; ++i)
      proposed[i] = opt.fixed_steps.size() == 1 ? opt.fixed_steps[0]
                                                : opt.fixed_steps.at(static_cast<std::size_t>(i));
  } else {
    opt.controller.validate();
    // First proposals from the initial slope: the residual of a constant
    // guess scales like |f_i(u0, 0)|.
    std::vector<double> f0(dim);
    sys.f(sys.u0, 0.0, f0);
    for (int i = 0; i < dim; ++i)
      proposed[i] = opt.controller.clamp(opt.controller.raw_step(i, std::abs(f0[i])));
  }

  TimeSlab slab;
  slab.strategy = opt.strategy;
  int reductions = 0;
  std::vector<double> buf, f_nodes;

  for (long cycle = 0; sol.min_frontier() < T * (1.0 - 1e-14); ++cycle) {
    if (cycle >= opt.cycle_cap) {
      res.message = "cycle cap reached without completing the solve";
      return res;
    }
    if (slab.empty()) {
      slab = build_slab(sol, proposed, opt.strategy, opt.method, opt.k_max);
      detail::trace_line(opt.trace, "build", slab, sol);
    } else {
      extend_slab(slab, sol, proposed, opt.method, opt.k_max);
      detail::trace_line(opt.trace, "extend", slab, sol);
    }
    if (slab.empty()) break;
    ++res.slabs;

    ConvergenceReport rep = iterate_slab(slab, sol, sys, opt.iteration);
    res.total_sweeps += rep.sweeps;
    detail::trace_line(opt.trace, "sweep", slab, sol);

    if (!rep.converged) {
      if (!opt.allow_step_reduction) {
        res.message = rep.diverged ? "iteration diverged" : "iteration did not converge";
        return res;
      }
      if (++reductions > opt.max_reductions) {
        res.message = "step reduction limit reached without convergence";
        return res;
      }
      ++res.step_reductions;
      // Shrink the steps of the components holding unconverged elements,
      // then rebuild the slab from the current frontiers.
      bool any = false;
      for (const Element& e : slab.elements) {
        if (e.state != ElemState::converged) {
          proposed[e.comp] *= opt.iteration.step_reduction_factor;
          if (proposed[e.comp] < opt.k_min_hard) {
            res.message = "step underflow during stabilizing reduction";
            return res;
          }
          any = true;
        }
      }
      if (!any)
        for (double& p : proposed) p *= opt.iteration.step_reduction_factor;
      slab = TimeSlab{};
      slab.strategy = opt.strategy;
      continue;
    }

    // Residual measures for the converged elements, then cut.
    StateView view(sol, slab);
    for (Element& e : slab.elements)
      e.residual = residual_measure(e, view, sys, buf, f_nodes);

    auto finalized = cut_covered(slab, sol);
    detail::trace_line(opt.trace, "cut", slab, sol);
    for (auto& [comp, rec] : finalized) {
      ElementStat st;
      st.comp = comp;
      st.t_begin = rec.t_begin;
      st.t_end = rec.t_end;
      st.k = rec.k();
      st.r = rec.residual;
      st.p = order_exponent(rec.family, rec.q);
      res.stats.push_back(st);
      res.min_step = std::min(res.min_step, st.k);
      ++res.total_elements;
      if (!fixed) {
        double next = opt.controller.propose_step(comp, rec.k(), rec.residual);
        opt.controller.accept(comp, rec.k(), rec.residual);
        proposed[comp] = next;
      }
    }
  }

  res.success = true;
  return res;
}

}  // namespace magal
