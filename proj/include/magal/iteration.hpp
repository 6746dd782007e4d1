#pragma once

// Solution of the discrete element equations on a slab: forward sweeps of
// fixed point iteration or diagonally damped Newton iteration, convergence
// measured by computational residuals.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "magal/system.hpp"
#include "magal/timeslab.hpp"

namespace magal {

enum class Scheme : std::uint8_t { fixpoint, newton };

inline const char* scheme_name(Scheme s) { return s == Scheme::fixpoint ? "fixpoint" : "newton"; }

struct IterationConfig {
  Scheme scheme = Scheme::fixpoint;
  double tol_discrete = 1e-10;
  int max_sweeps = 100;
  double divergence_guard = 10.0;
  double step_reduction_factor = 0.5;

  void validate() const {
    if (!(tol_discrete > 0.0)) throw std::invalid_argument("tol_discrete must be positive");
    if (max_sweeps < 1) throw std::invalid_argument("max_sweeps must be at least 1");
  }
};

struct ConvergenceReport {
  bool converged = false;
  bool diverged = false;
  int sweeps = 0;
  double max_residual = 0.0;
  int newton_fallbacks = 0;  // singular local matrix, undamped update used
};

// Combined view over the finalized trajectory and the live slab; values
// beyond both are extrapolated from the latest known element.
class StateView {
 public:
  StateView(const Solution& sol, const TimeSlab& slab) : sol_(sol), slab_(slab) {}

  double evaluate(int l, double t) const {
    if (t <= sol_.frontier(l) || slab_.comp_elems[l].empty()) return sol_.evaluate(l, t);
    const auto& list = slab_.comp_elems[l];
    auto it = std::partition_point(list.begin(), list.end(), [this, t](int idx) {
      return slab_.elements[idx].t_end < t;
    });
    const Element& e = slab_.elements[it == list.end() ? list.back() : *it];
    double s = (t - e.t_begin) / e.k();
    return evaluate_basis(tableau(e.family, e.q), e.dofs, s);
  }

  void state(double t, std::vector<double>& u) const {
    u.resize(sol_.dim());
    for (int l = 0; l < sol_.dim(); ++l) u[l] = evaluate(l, t);
  }

 private:
  const Solution& sol_;
  const TimeSlab& slab_;
};

namespace detail {

// Diagonal Jacobian entry df_i/du_i at the element midpoint, frozen over
// the element.
inline double diagonal_derivative(const Element& e, const StateView& view,
                                  const OdeSystem& sys, std::vector<double>& buf) {
  double t_mid = e.t_begin + 0.5 * e.k();
  view.state(t_mid, buf);
  if (sys.jacobian_diag) return sys.jacobian_diag(e.comp, buf, t_mid);
  double h = 1e-8 * (1.0 + std::abs(buf[e.comp]));
  double f0 = sys.f(e.comp, buf, t_mid);
  buf[e.comp] += h;
  double f1 = sys.f(e.comp, buf, t_mid);
  buf[e.comp] -= h;
  return (f1 - f0) / h;
}

inline void rhs_at_nodes(const Element& e, const StateView& view, const OdeSystem& sys,
                         const MethodTableau& tab, std::vector<double>& buf,
                         std::vector<double>& f_nodes) {
  const int nn = tab.dof_count();
  f_nodes.resize(nn);
  for (int n = 0; n < nn; ++n) {
    double tn = e.t_begin + tab.nodes[n] * e.k();
    view.state(tn, buf);
    f_nodes[n] = sys.f(e.comp, buf, tn);
  }
}

}  // namespace detail

// One application of the fixed point map: dofs replaced by the Galerkin
// element update evaluated with the current global state.
inline void element_update_fixpoint(Element& e, const StateView& view, const OdeSystem& sys,
                                    std::vector<double>& buf, std::vector<double>& f_nodes) {
  const MethodTableau& tab = tableau(e.family, e.q);
  e.left_value = view.evaluate(e.comp, e.t_begin);
  if (e.family == Family::cG) e.dofs[0] = e.left_value;
  detail::rhs_at_nodes(e, view, sys, tab, buf, f_nodes);
  const double k = e.k();
  const int rows = static_cast<int>(tab.weights.rows());
  const int offset = e.family == Family::cG ? 1 : 0;
  for (int m = 0; m < rows; ++m) {
    double acc = 0.0;
    for (int n = 0; n < tab.dof_count(); ++n) acc += tab.weights(m, n) * f_nodes[n];
    e.dofs[offset + m] = e.left_value + k * acc;
  }
}

// Damped (diagonal Newton) update. Falls back to the undamped fixed point
// step when the local matrix is singular; the fallback is reported through
// the return value.
inline bool element_update_newton(Element& e, const StateView& view, const OdeSystem& sys,
                                  std::vector<double>& buf, std::vector<double>& f_nodes) {
  const MethodTableau& tab = tableau(e.family, e.q);
  e.left_value = view.evaluate(e.comp, e.t_begin);
  if (e.family == Family::cG) e.dofs[0] = e.left_value;
  const double k = e.k();
  double dfdu = detail::diagonal_derivative(e, view, sys, buf);
  detail::rhs_at_nodes(e, view, sys, tab, buf, f_nodes);

  if (e.family == Family::dG && e.q == 0) {
    double denom = 1.0 - k * dfdu;
    double fix = e.left_value + k * tab.weights(0, 0) * f_nodes[0];
    if (std::abs(denom) < 1e-14) {
      e.dofs[0] = fix;
      return false;
    }
    double theta = 1.0 / denom;
    e.dofs[0] = (1.0 - theta) * e.dofs[0] + theta * fix;
    return true;
  }

  const int rows = static_cast<int>(tab.weights.rows());
  const int offset = e.family == Family::cG ? 1 : 0;
  Eigen::VectorXd target(rows), x_old(rows);
  for (int m = 0; m < rows; ++m) {
    double acc = 0.0;
    for (int n = 0; n < tab.dof_count(); ++n) acc += tab.weights(m, n) * f_nodes[n];
    target(m) = e.left_value + k * acc;
    x_old(m) = e.dofs[offset + m];
  }
  // Local matrix I - k * W_free * df_i/du_i, W_free the weight columns of
  // the free degrees of freedom.
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(rows, rows) -
                      k * dfdu * tab.weights.rightCols(rows);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    for (int m = 0; m < rows; ++m) e.dofs[offset + m] = target(m);
    return false;
  }
  Eigen::VectorXd x_new = x_old - lu.solve(x_old - target);
  for (int m = 0; m < rows; ++m) e.dofs[offset + m] = x_new(m);
  return true;
}

// |U_i(t_ij) - U_i(t_{i,j-1}) - int f_i dt| / k with the element's own
// quadrature; for dG the incoming value replaces the left limit.
inline double computational_residual(const Element& e, const StateView& view,
                                     const OdeSystem& sys, std::vector<double>& buf,
                                     std::vector<double>& f_nodes) {
  const MethodTableau& tab = tableau(e.family, e.q);
  detail::rhs_at_nodes(e, view, sys, tab, buf, f_nodes);
  const double k = e.k();
  double integral = 0.0;
  for (int n = 0; n < tab.dof_count(); ++n) integral += tab.quad_weights[n] * f_nodes[n];
  integral *= k;
  double incoming = e.family == Family::cG ? e.dofs[0] : e.left_value;
  return std::abs(e.end_value() - incoming - integral) / k;
}

// Local residual measure r_ij: max of |U_i' - f_i| over the element's
// quadrature nodes (the endpoint is itself a node in both families).
inline double residual_measure(const Element& e, const StateView& view, const OdeSystem& sys,
                               std::vector<double>& buf, std::vector<double>& f_nodes) {
  const MethodTableau& tab = tableau(e.family, e.q);
  detail::rhs_at_nodes(e, view, sys, tab, buf, f_nodes);
  const double k = e.k();
  double r = 0.0;
  for (int m = 0; m < tab.dof_count(); ++m) {
    double du = 0.0;
    for (int n = 0; n < tab.dof_count(); ++n) du += tab.deriv(m, n) * e.dofs[n];
    du /= k;
    r = std::max(r, std::abs(du - f_nodes[m]));
  }
  return r;
}

// Repeated forward sweeps over the slab until the computational residuals
// on all elements drop below tol_discrete, the sweep budget runs out, or
// divergence is detected.
inline ConvergenceReport iterate_slab(TimeSlab& slab, const Solution& sol,
                                      const OdeSystem& sys, const IterationConfig& cfg) {
  cfg.validate();
  ConvergenceReport rep;
  if (slab.empty()) {
    rep.converged = true;
    return rep;
  }
  StateView view(sol, slab);
  std::vector<int> order = sweep_order(slab);
  std::vector<double> buf, f_nodes;
  double prev_max = std::numeric_limits<double>::infinity();

  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    for (int idx : order) {
      Element& e = slab.elements[idx];
      if (cfg.scheme == Scheme::fixpoint) {
        element_update_fixpoint(e, view, sys, buf, f_nodes);
      } else {
        if (!element_update_newton(e, view, sys, buf, f_nodes)) ++rep.newton_fallbacks;
      }
    }
    // Residuals in a second pass: an element's residual measured against
    // neighbours updated later in the same sweep would be stale.
    double max_res = 0.0;
    for (int idx : order) {
      Element& e = slab.elements[idx];
      e.residual = computational_residual(e, view, sys, buf, f_nodes);
      e.state = e.residual <= cfg.tol_discrete ? ElemState::converged : ElemState::active;
      max_res = std::max(max_res, e.residual);
    }
    rep.sweeps = sweep;
    rep.max_residual = max_res;
    slab.sweeps = sweep;
    slab.max_residual = max_res;
    if (!std::isfinite(max_res) ||
        (sweep >= 2 && max_res > cfg.divergence_guard * prev_max)) {
      rep.diverged = true;
      return rep;
    }
    if (max_res <= cfg.tol_discrete) {
      rep.converged = true;
      return rep;
    }
    prev_max = max_res;
  }
  return rep;
}

}  // namespace magal
