#pragma once

// The backward linear dual problem along a computed primal trajectory,
// global stability factors S^[q] and the fundamental-solution bound
// S_bar^[q], per-element stability weights, and the computational-error
// model E_C.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "magal/controller.hpp"
#include "magal/system.hpp"
#include "magal/tableau.hpp"

namespace magal {

struct DualData {
  std::vector<double> phi_T;
  // Forcing g(t), written into `out`; null means g = 0.
  std::function<void(double, std::span<double>)> forcing;

  bool has_forcing() const { return static_cast<bool>(forcing); }
};

enum class DualPreset { endpoint_component, endpoint_l2, average_component };

inline DualData dual_data_preset(DualPreset kind, int dim, int n = 0,
                                 const std::vector<double>& approx_error = {}) {
  DualData data;
  data.phi_T.assign(dim, 0.0);
  switch (kind) {
    case DualPreset::endpoint_component:
      data.phi_T.at(static_cast<std::size_t>(n)) = 1.0;
      break;
    case DualPreset::endpoint_l2: {
      double norm = 0.0;
      for (double v : approx_error) norm += v * v;
      norm = std::sqrt(norm);
      if (!(norm > 0.0))
        throw std::invalid_argument("dual data: approximate error has zero norm "
                                    "(data orthogonal to the error)");
      for (int i = 0; i < dim; ++i) data.phi_T[i] = approx_error.at(i) / norm;
      break;
    }
    case DualPreset::average_component:
      data.forcing = [n, dim](double, std::span<double> out) {
        for (int i = 0; i < dim; ++i) out[i] = 0.0;
        out[n] = 1.0;
      };
      break;
  }
  return data;
}

struct DualOptions {
  int q = 1;              // dG(q) discretization of the dual
  double k = 0.0;         // 0 = default min(0.01 T, 10 min primal step)
  int norm_samples = 1500;
};

namespace detail {

inline double min_primal_step(const Solution& primal) {
  double k = primal.final_time();
  for (int i = 0; i < primal.dim(); ++i)
    for (const auto& e : primal.elements(i)) k = std::min(k, e.k());
  return k;
}

inline double dual_step(const Solution& primal, const DualOptions& opt) {
  if (opt.k > 0.0) return opt.k;
  return std::min(0.01 * primal.final_time(), 10.0 * min_primal_step(primal));
}

// One direct linear step of the reversed dual system psi' = A(s) psi + b(s)
// with a dG(q) element: factors the (q+1)N x (q+1)N block system once and
// solves for all right-hand-side columns.
//
// psi_in: N x C, returns the element dofs as (q+1) blocks of N x C.
inline std::vector<Eigen::MatrixXd> dual_element_solve(
    const MethodTableau& tab, double k, const Eigen::MatrixXd& psi_in,
    const std::vector<Eigen::MatrixXd>& a_nodes, const std::vector<Eigen::VectorXd>& b_nodes) {
  const int nn = tab.dof_count();
  const int dim = static_cast<int>(psi_in.rows());
  const int cols = static_cast<int>(psi_in.cols());
  Eigen::MatrixXd big = Eigen::MatrixXd::Identity(nn * dim, nn * dim);
  Eigen::MatrixXd rhs(nn * dim, cols);
  for (int m = 0; m < nn; ++m) {
    for (int n = 0; n < nn; ++n)
      big.block(m * dim, n * dim, dim, dim) -= k * tab.weights(m, n) * a_nodes[n];
    Eigen::MatrixXd r = psi_in;
    for (int n = 0; n < nn; ++n)
      if (b_nodes.size() > 0)
        r.colwise() += k * tab.weights(m, n) * b_nodes[n];
    rhs.middleRows(m * dim, dim) = r;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(big);
  Eigen::MatrixXd x = lu.solve(rhs);
  std::vector<Eigen::MatrixXd> out(nn);
  for (int m = 0; m < nn; ++m) out[m] = x.middleRows(m * dim, dim);
  return out;
}

}  // namespace detail

// Solve phi' = -J(U(t),t)^T phi - g(t), phi(T) = phi_T backward along the
// primal trajectory, by reversing time and stepping the linear system with
// a fixed-order dG element and a direct solve. Returns phi as a Solution
// over the same [0,T].
inline Solution solve_dual(const Solution& primal, const OdeSystem& sys, const DualData& data,
                           DualOptions opt = {}) {
  const int dim = primal.dim();
  const double T = primal.final_time();
  if (primal.min_frontier() < T * (1.0 - 1e-12))
    throw std::invalid_argument("solve_dual: primal trajectory does not cover [0,T]");
  if (static_cast<int>(data.phi_T.size()) != dim)
    throw std::invalid_argument("solve_dual: terminal vector dimension mismatch");

  const MethodTableau& tab = tableau(Family::dG, opt.q);
  const int nn = tab.dof_count();
  const double k_dual = detail::dual_step(primal, opt);
  const int steps = std::max(1, static_cast<int>(std::ceil(T / k_dual - 1e-12)));

  Eigen::MatrixXd psi(dim, 1);
  for (int i = 0; i < dim; ++i) psi(i, 0) = data.phi_T[i];

  std::vector<double> u(dim);
  std::vector<double> g(dim, 0.0);
  Eigen::MatrixXd jac(dim, dim);

  // March in reversed time s = T - t; collect elements, then append in
  // forward-time order.
  std::vector<std::vector<ElementRecord>> records(dim);
  double s_a = 0.0;
  for (int step = 1; step <= steps; ++step) {
    double s_b = step == steps ? T : T * (static_cast<double>(step) / steps);
    double k = s_b - s_a;
    std::vector<Eigen::MatrixXd> a_nodes(nn);
    std::vector<Eigen::VectorXd> b_nodes;
    for (int n = 0; n < nn; ++n) {
      double s_n = s_a + tab.nodes[n] * k;
      double t_n = T - s_n;
      for (int i = 0; i < dim; ++i) u[i] = primal.evaluate(i, t_n);
      system_jacobian(sys, u, t_n, jac);
      a_nodes[n] = jac.transpose();
    }
    if (data.has_forcing()) {
      b_nodes.resize(nn);
      for (int n = 0; n < nn; ++n) {
        double t_n = T - (s_a + tab.nodes[n] * k);
        data.forcing(t_n, g);
        b_nodes[n] = Eigen::Map<Eigen::VectorXd>(g.data(), dim);
      }
    }
    auto dofs = detail::dual_element_solve(tab, k, psi, a_nodes, b_nodes);

    // Re-express the step polynomial on the forward-time interval
    // (T - s_b, T - s_a] at that interval's own dG nodes.
    double t_begin = T - s_b, t_end = T - s_a;
    for (int i = 0; i < dim; ++i) {
      ElementRecord rec;
      rec.t_begin = t_begin;
      rec.t_end = t_end;
      rec.family = Family::dG;
      rec.q = opt.q;
      rec.dofs.resize(nn);
      std::vector<double> comp_dofs(nn);
      for (int m = 0; m < nn; ++m) comp_dofs[m] = dofs[m](i, 0);
      for (int m = 0; m < nn; ++m) {
        double t_m = t_begin + tab.nodes[m] * k;
        double sigma = (T - t_m - s_a) / k;
        rec.dofs[m] = evaluate_basis(tab, comp_dofs, sigma);
      }
      records[i].push_back(std::move(rec));
    }
    for (int i = 0; i < dim; ++i) psi(i, 0) = dofs[nn - 1](i, 0);
    s_a = s_b;
  }

  std::vector<double> phi0(dim);
  for (int i = 0; i < dim; ++i) phi0[i] = psi(i, 0);
  Solution dual(dim, phi0, T);
  for (int i = 0; i < dim; ++i) {
    double incoming = phi0[i];
    for (auto it = records[i].rbegin(); it != records[i].rend(); ++it) {
      it->left_value = incoming;
      incoming = it->dofs.back();
      dual.append(i, *it);
    }
  }
  return dual;
}

// Time-sampled fundamental solution Phi(t) of the dual problem: N backward
// solves with unit terminal vectors, assembled columnwise on a uniform grid.
struct PhiSamples {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> phi;
};

inline PhiSamples fundamental_matrix(const Solution& primal, const OdeSystem& sys,
                                     DualOptions opt = {}) {
  const int dim = primal.dim();
  const double T = primal.final_time();
  if (primal.min_frontier() < T * (1.0 - 1e-12))
    throw std::invalid_argument("fundamental_matrix: primal trajectory does not cover [0,T]");

  const MethodTableau& tab = tableau(Family::dG, opt.q);
  const int nn = tab.dof_count();
  const double k_dual = detail::dual_step(primal, opt);
  const int steps = std::max(1, static_cast<int>(std::ceil(T / k_dual - 1e-12)));
  const int samples = std::max(opt.norm_samples, 5);

  PhiSamples out;
  out.times.resize(samples);
  out.phi.assign(samples, Eigen::MatrixXd::Zero(dim, dim));
  for (int s = 0; s < samples; ++s) out.times[s] = T * (static_cast<double>(s) / (samples - 1));
  out.phi[samples - 1] = Eigen::MatrixXd::Identity(dim, dim);  // Phi(T) = I

  Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(dim, dim);
  std::vector<double> u(dim);
  Eigen::MatrixXd jac(dim, dim);
  std::vector<Eigen::VectorXd> no_forcing;

  int sample_idx = samples - 2;  // next sample to fill, moving backward in t
  double s_a = 0.0;
  for (int step = 1; step <= steps; ++step) {
    double s_b = step == steps ? T : T * (static_cast<double>(step) / steps);
    double k = s_b - s_a;
    std::vector<Eigen::MatrixXd> a_nodes(nn);
    for (int n = 0; n < nn; ++n) {
      double t_n = T - (s_a + tab.nodes[n] * k);
      for (int i = 0; i < dim; ++i) u[i] = primal.evaluate(i, t_n);
      system_jacobian(sys, u, t_n, jac);
      a_nodes[n] = jac.transpose();
    }
    auto dofs = detail::dual_element_solve(tab, k, psi, a_nodes, no_forcing);

    // Fill grid samples whose times fall in (T - s_b, T - s_a].
    while (sample_idx >= 0 && out.times[sample_idx] >= T - s_b - 1e-14) {
      double sigma = (T - out.times[sample_idx] - s_a) / k;
      std::vector<double> comp(nn);
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) {
          for (int m = 0; m < nn; ++m) comp[m] = dofs[m](a, b);
          out.phi[sample_idx](a, b) = evaluate_basis(tab, comp, sigma);
        }
      --sample_idx;
    }
    psi = dofs[nn - 1];
    s_a = s_b;
  }
  return out;
}

// Largest singular value (operator 2-norm).
inline double operator_norm(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

// S_bar^[q](T) = int_0^T ||Phi^(q)(t)|| dt, derivatives by central
// differences on the sample grid, trapezoid integration.
inline double stability_factor_bound(const PhiSamples& samples, int q) {
  const int n = static_cast<int>(samples.times.size());
  if (q < 0 || q > 2) throw std::invalid_argument("stability_factor_bound: q must be 0, 1 or 2");
  if (n < 2 * q + 3) throw std::invalid_argument("stability_factor_bound: too few samples");
  const double h = samples.times[1] - samples.times[0];

  std::vector<Eigen::MatrixXd> d = samples.phi;
  for (int pass = 0; pass < q; ++pass) {
    std::vector<Eigen::MatrixXd> next(d.size());
    for (int i = 0; i < n; ++i) {
      if (i == 0) next[i] = (d[1] - d[0]) / h;
      else if (i == n - 1) next[i] = (d[n - 1] - d[n - 2]) / h;
      else next[i] = (d[i + 1] - d[i - 1]) / (2.0 * h);
    }
    d = std::move(next);
  }
  double integral = 0.0;
  double prev = operator_norm(d[0]);
  for (int i = 1; i < n; ++i) {
    double cur = operator_norm(d[i]);
    integral += 0.5 * (prev + cur) * (samples.times[i] - samples.times[i - 1]);
    prev = cur;
  }
  return integral;
}

namespace detail {

// |phi_i^(p)| sampled on a uniform grid by repeated central differencing.
inline std::vector<double> abs_derivative_samples(const Solution& dual, int comp, int p,
                                                  const std::vector<double>& times) {
  const int n = static_cast<int>(times.size());
  const double h = times[1] - times[0];
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = dual.evaluate(comp, times[i]);
  for (int pass = 0; pass < p; ++pass) {
    std::vector<double> next(n);
    for (int i = 0; i < n; ++i) {
      if (i == 0) next[i] = (d[1] - d[0]) / h;
      else if (i == n - 1) next[i] = (d[n - 1] - d[n - 2]) / h;
      else next[i] = (d[i + 1] - d[i - 1]) / (2.0 * h);
    }
    d = std::move(next);
  }
  for (double& v : d) v = std::abs(v);
  return d;
}

inline double integrate_interval(const std::vector<double>& times, const std::vector<double>& vals,
                                 double a, double b) {
  const double h = times[1] - times[0];
  auto interp = [&](double t) {
    double x = (t - times.front()) / h;
    int i = std::max(0, std::min(static_cast<int>(times.size()) - 2, static_cast<int>(x)));
    double w = x - i;
    return (1.0 - w) * vals[i] + w * vals[i + 1];
  };
  int pieces = std::max(2, static_cast<int>(std::ceil((b - a) / h)) + 1);
  double acc = 0.0;
  double prev = interp(a);
  for (int s = 1; s <= pieces; ++s) {
    double t = a + (b - a) * static_cast<double>(s) / pieces;
    double cur = interp(t);
    acc += 0.5 * (prev + cur) * (b - a) / pieces;
    prev = cur;
  }
  return acc;
}

}  // namespace detail

// Per-element weights s_ij = (1/k) int_I |phi_i^(p)| dt and per-component
// factors S_i = int_0^T |phi_i^(p_i)| dt (interpolation constant 1).
// Fills stat.weight in place and returns the S_i vector.
inline std::vector<double> stability_weights(const Solution& dual, std::vector<ElementStat>& stats,
                                             const std::vector<int>& exponents,
                                             int n_samples = 2000) {
  const int dim = dual.dim();
  const double T = dual.final_time();
  n_samples = std::max(n_samples, 16);
  std::vector<double> times(n_samples);
  for (int i = 0; i < n_samples; ++i) times[i] = T * (static_cast<double>(i) / (n_samples - 1));

  auto exponent = [&exponents](int i) {
    return exponents.size() == 1 ? exponents[0] : exponents.at(static_cast<std::size_t>(i));
  };

  std::vector<std::vector<double>> deriv(dim);
  std::vector<double> factors(dim);
  for (int i = 0; i < dim; ++i) {
    deriv[i] = detail::abs_derivative_samples(dual, i, exponent(i), times);
    factors[i] = detail::integrate_interval(times, deriv[i], 0.0, T);
  }
  for (auto& st : stats)
    st.weight = detail::integrate_interval(times, deriv[st.comp], st.t_begin, st.t_end) / st.k;
  return factors;
}

// E_C = S0 * (1/min k) * 10^-16 (unit round-off residual per step).
inline double computational_error_model(double s0, double k_min) {
  if (!(s0 > 0.0) || !(k_min > 0.0))
    throw std::invalid_argument("computational_error_model: need S0 > 0 and k_min > 0");
  return s0 * 1e-16 / k_min;
}

// Lorenz closed form E_C = 10^(T/3 - 16) / min k.
inline double lorenz_computational_error_model(double final_time, double k_min) {
  if (!(k_min > 0.0)) throw std::invalid_argument("computational_error_model: k_min must be positive");
  return std::pow(10.0, final_time / 3.0 - 16.0) / k_min;
}

struct StabilityReport {
  Solution dual;                      // the dual trajectory phi
  std::vector<double> factors;        // per-component S_i
  std::vector<double> global_bounds;  // S_bar^[q] for q = 0,1,2 (when computed)
  double error_estimate = 0.0;        // E from the sum estimate
  double e_c = 0.0;                   // computational-error model value
};

}  // namespace magal
