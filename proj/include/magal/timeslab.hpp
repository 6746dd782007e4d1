#pragma once

// The moving working set of elements: slab construction under dyadic,
// rational or unconstrained (time-crawling) partitioning, sweep ordering,
// coverage detection, cutting and extension.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "magal/system.hpp"

namespace magal {

enum class Strategy : std::uint8_t { dyadic, rational, free_form };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::dyadic: return "dyadic";
    case Strategy::rational: return "rational";
    default: return "free";
  }
}

enum class ElemState : std::uint8_t { active, converged, finalized };

// One component on one local interval, with its degrees of freedom.
struct Element {
  int comp = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  Family family = Family::cG;
  int q = 1;
  std::vector<double> dofs;     // nodal values, length q+1
  double left_value = 0.0;      // incoming value from the predecessor
  ElemState state = ElemState::active;
  double residual = 0.0;        // computational residual of the last update

  double k() const { return t_end - t_begin; }
  double end_value() const { return dofs.back(); }
};

struct MethodSpec {
  Family family = Family::cG;
  std::vector<int> orders;  // per component; a single entry means uniform

  int order(int i) const {
    return orders.size() == 1 ? orders[0] : orders.at(static_cast<std::size_t>(i));
  }
};

struct TimeSlab {
  std::vector<Element> elements;
  std::vector<std::vector<int>> comp_elems;  // per component, ascending by time
  double slab_end = 0.0;
  Strategy strategy = Strategy::dyadic;
  int sweeps = 0;
  double max_residual = 0.0;

  bool empty() const { return elements.empty(); }

  void rebuild_index(int dim) {
    comp_elems.assign(dim, {});
    for (int e = 0; e < static_cast<int>(elements.size()); ++e)
      comp_elems[elements[e].comp].push_back(e);
    for (auto& list : comp_elems)
      std::sort(list.begin(), list.end(), [this](int a, int b) {
        return elements[a].t_begin < elements[b].t_begin;
      });
  }
};

namespace detail {

// Number of pieces the interval of length L is divided into under the
// given strategy, for a proposed step k.
inline int partition_count(Strategy strategy, double L, double proposed) {
  if (proposed >= L) return 1;
  switch (strategy) {
    case Strategy::dyadic: {
      int count = 1;
      while (L / count > proposed * (1.0 + 1e-12) && count < (1 << 29)) count *= 2;
      return count;
    }
    case Strategy::rational: {
      double n = std::ceil(L / proposed - 1e-12);
      return static_cast<int>(std::min(n, 1e9));
    }
    default: {  // free: constant step within the slab, last element clipped
      double n = std::ceil(L / proposed - 1e-12);
      return static_cast<int>(std::min(n, 1e9));
    }
  }
}

inline void append_component_elements(TimeSlab& slab, const Solution& sol, int i,
                                      double frontier, double value_at_frontier,
                                      double proposed, const MethodSpec& method) {
  double L = slab.slab_end - frontier;
  if (L <= 0.0) return;
  int q = method.order(i);
  int count = partition_count(slab.strategy, L, proposed);
  bool uniform_grid = slab.strategy != Strategy::free_form;
  double step = slab.strategy == Strategy::free_form ? std::min(proposed, L) : L / count;
  double prev_end = frontier;
  for (int r = 1; r <= count; ++r) {
    Element e;
    e.comp = i;
    e.t_begin = prev_end;
    if (r == count) {
      e.t_end = slab.slab_end;  // exact endpoint, never re-derived by summation
    } else {
      e.t_end = uniform_grid ? frontier + L * (static_cast<double>(r) / count)
                             : frontier + r * step;
    }
    e.family = method.family;
    e.q = q;
    e.left_value = value_at_frontier;
    e.dofs.assign(q + 1, value_at_frontier);  // constant initial guess
    slab.elements.push_back(std::move(e));
    prev_end = slab.elements.back().t_end;
  }
  (void)sol;
}

}  // namespace detail

// Construct a fresh slab from the solution frontiers and proposed steps.
// Returns an empty slab when all components have reached the final time.
inline TimeSlab build_slab(const Solution& sol, const std::vector<double>& proposed,
                           Strategy strategy, const MethodSpec& method,
                           double k_max = std::numeric_limits<double>::infinity()) {
  const int dim = sol.dim();
  const double T = sol.final_time();
  for (double p : proposed)
    if (!(p > 0.0)) throw std::invalid_argument("build_slab: proposed step must be positive");

  TimeSlab slab;
  slab.strategy = strategy;

  double min_front = std::numeric_limits<double>::infinity();
  double max_front = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    if (sol.frontier(i) < T * (1.0 - 1e-14)) {
      min_front = std::min(min_front, sol.frontier(i));
      max_front = std::max(max_front, sol.frontier(i));
    }
  }
  if (!std::isfinite(min_front)) return slab;  // solve finished

  // Slab length: the largest proposed step among components at the
  // trailing frontier, capped by k_max and the remaining time.
  double K = 0.0;
  for (int i = 0; i < dim; ++i)
    if (sol.frontier(i) <= min_front * (1.0 + 1e-14) + 1e-300)
      K = std::max(K, proposed[i]);
  K = std::min({K, k_max, T - min_front});
  slab.slab_end = std::min(T, max_front + K);

  for (int i = 0; i < dim; ++i) {
    double fr = sol.frontier(i);
    if (fr >= slab.slab_end) continue;
    detail::append_component_elements(slab, sol, i, fr, sol.evaluate(i, fr), proposed[i],
                                      method);
  }
  slab.rebuild_index(dim);
  return slab;
}

// Sweep order: ascending t_end, ties by t_begin, then component index.
// The last component steps first.
inline std::vector<int> sweep_order(const TimeSlab& slab) {
  std::vector<int> order(slab.elements.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&slab](int a, int b) {
    const Element& ea = slab.elements[a];
    const Element& eb = slab.elements[b];
    if (ea.t_end != eb.t_end) return ea.t_end < eb.t_end;
    if (ea.t_begin != eb.t_begin) return ea.t_begin < eb.t_begin;
    return ea.comp < eb.comp;
  });
  return order;
}

// Finalize and remove every element lying behind the minimum converged
// frontier over all components. Frontiers of `sol` advance accordingly.
// Returns (component, record) pairs for the newly finalized elements.
inline std::vector<std::pair<int, ElementRecord>> cut_covered(TimeSlab& slab, Solution& sol) {
  const int dim = sol.dim();
  const double T = sol.final_time();

  double cover = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    double c = sol.frontier(i);
    for (int idx : slab.comp_elems[i]) {
      const Element& e = slab.elements[idx];
      if (e.state != ElemState::converged) break;
      if (e.t_begin > c + 1e-12 * (1.0 + std::abs(c))) break;
      c = e.t_end;
    }
    if (c >= T) c = std::numeric_limits<double>::infinity();
    cover = std::min(cover, c);
  }

  std::vector<std::pair<int, ElementRecord>> finalized;
  std::vector<Element> kept;
  // Walk components in index order, elements in time order, so appends to
  // the solution stay contiguous.
  for (int i = 0; i < dim; ++i) {
    for (int idx : slab.comp_elems[i]) {
      Element& e = slab.elements[idx];
      if (e.state == ElemState::converged &&
          e.t_end <= cover * (1.0 + 1e-14) + 1e-300) {
        ElementRecord rec;
        rec.t_begin = e.t_begin;
        rec.t_end = e.t_end;
        rec.family = e.family;
        rec.q = e.q;
        rec.dofs = e.dofs;
        rec.left_value = e.left_value;
        rec.residual = e.residual;
        sol.append(e.comp, rec);
        finalized.emplace_back(e.comp, std::move(rec));
        e.state = ElemState::finalized;
      }
    }
  }
  for (Element& e : slab.elements)
    if (e.state != ElemState::finalized) kept.push_back(std::move(e));
  slab.elements = std::move(kept);
  slab.rebuild_index(dim);
  return finalized;
}

// Extend the slab: keep uncut elements and append new ones per component up
// to a new matched end-point that covers everything retained.
inline void extend_slab(TimeSlab& slab, const Solution& sol,
                        const std::vector<double>& proposed, const MethodSpec& method,
                        double k_max = std::numeric_limits<double>::infinity()) {
  const int dim = sol.dim();
  const double T = sol.final_time();
  for (double p : proposed)
    if (!(p > 0.0)) throw std::invalid_argument("extend_slab: proposed step must be positive");

  if (slab.empty()) {
    slab = build_slab(sol, proposed, slab.strategy, method, k_max);
    return;
  }

  std::vector<double> local_front(dim);
  std::vector<double> front_value(dim);
  double min_front = std::numeric_limits<double>::infinity();
  double max_front = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    if (slab.comp_elems[i].empty()) {
      local_front[i] = sol.frontier(i);
      front_value[i] = sol.evaluate(i, local_front[i]);
    } else {
      const Element& last = slab.elements[slab.comp_elems[i].back()];
      local_front[i] = last.t_end;
      front_value[i] = last.end_value();
    }
    if (local_front[i] < T * (1.0 - 1e-14)) {
      min_front = std::min(min_front, local_front[i]);
      max_front = std::max(max_front, local_front[i]);
    }
  }
  if (!std::isfinite(min_front)) return;  // nothing left to add

  double K = 0.0;
  for (int i = 0; i < dim; ++i)
    if (local_front[i] <= min_front * (1.0 + 1e-14) + 1e-300)
      K = std::max(K, proposed[i]);
  K = std::min({K, k_max, T - min_front});
  slab.slab_end = std::min(T, max_front + K);

  for (int i = 0; i < dim; ++i) {
    if (local_front[i] >= slab.slab_end) continue;
    double saved_end = slab.slab_end;
    // append_component_elements fills (local_front, slab_end]
    detail::append_component_elements(slab, sol, i, local_front[i], front_value[i],
                                      proposed[i], method);
    slab.slab_end = saved_end;
  }
  slab.sweeps = 0;
  slab.max_residual = 0.0;
  slab.rebuild_index(dim);
}

}  // namespace magal
