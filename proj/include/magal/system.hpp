#pragma once

// The ODE initial value problem u' = f(u,t), u(0) = u0 on (0,T], and the
// piecewise-polynomial solution object with componentwise evaluation,
// interpolation and extrapolation.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "magal/tableau.hpp"

namespace magal {

struct OdeSystem {
  int dim = 0;
  std::vector<double> u0;
  double final_time = 0.0;

  // f_i(u,t). Required.
  std::function<double(int, std::span<const double>, double)> rhs_component;
  // f(u,t), written into `out`. Optional; defaults to a componentwise loop.
  std::function<void(std::span<const double>, double, std::span<double>)> rhs_full;
  // df_i/du_i. Optional.
  std::function<double(int, std::span<const double>, double)> jacobian_diag;
  // Full Jacobian, written into `out` (row-major a = row, b = col). Optional.
  std::function<void(std::span<const double>, double, Eigen::MatrixXd&)> jacobian_full;
  // Per component, the indices of components that influence it. Optional.
  std::vector<std::vector<int>> dependency_sparsity;

  // Local function evaluation counter (includes residual evaluations).
  std::shared_ptr<std::atomic<long>> eval_count = std::make_shared<std::atomic<long>>(0);

  double f(int i, std::span<const double> u, double t) const {
    eval_count->fetch_add(1, std::memory_order_relaxed);
    return rhs_component(i, u, t);
  }

  void f(std::span<const double> u, double t, std::span<double> out) const {
    if (rhs_full) {
      eval_count->fetch_add(dim, std::memory_order_relaxed);
      rhs_full(u, t, out);
    } else {
      for (int i = 0; i < dim; ++i) out[i] = f(i, u, t);
    }
  }

  long evals() const { return eval_count->load(std::memory_order_relaxed); }
  void reset_evals() const { eval_count->store(0, std::memory_order_relaxed); }

  void validate() const {
    if (dim <= 0) throw std::invalid_argument("OdeSystem: dimension must be positive");
    if (static_cast<int>(u0.size()) != dim)
      throw std::invalid_argument("OdeSystem: u0 length does not match dimension");
    if (!(final_time > 0.0)) throw std::invalid_argument("OdeSystem: final time must be positive");
    if (!rhs_component) throw std::invalid_argument("OdeSystem: rhs_component missing");
  }
};

// Forward-difference Jacobian, used when jacobian_full is absent.
inline Eigen::MatrixXd numerical_jacobian(const OdeSystem& sys, std::span<const double> u,
                                          double t, double h_scale = 1e-8) {
  const int n = sys.dim;
  Eigen::MatrixXd jac(n, n);
  std::vector<double> base(n), pert(n), up(u.begin(), u.end());
  sys.f(up, t, base);
  for (int b = 0; b < n; ++b) {
    double h = h_scale * (1.0 + std::abs(u[b]));
    double saved = up[b];
    up[b] = saved + h;
    sys.f(up, t, pert);
    up[b] = saved;
    for (int a = 0; a < n; ++a) jac(a, b) = (pert[a] - base[a]) / h;
  }
  return jac;
}

// Evaluate the system Jacobian at (u,t): analytic if provided, else by
// difference quotients.
inline void system_jacobian(const OdeSystem& sys, std::span<const double> u, double t,
                            Eigen::MatrixXd& out) {
  if (sys.jacobian_full) {
    sys.jacobian_full(u, t, out);
  } else {
    out = numerical_jacobian(sys, u, t);
  }
}

struct ElementRecord {
  double t_begin = 0.0;
  double t_end = 0.0;
  Family family = Family::cG;
  int q = 1;
  // Nodal values at the tableau nodes (length q+1). For cG the first entry
  // is the inherited left endpoint value. For dG `left_value` carries the
  // incoming value from the predecessor (the jump is accessible from it).
  std::vector<double> dofs;
  double left_value = 0.0;
  double residual = 0.0;  // local residual measure r_ij, filled by the driver

  double k() const { return t_end - t_begin; }
  double end_value() const { return dofs.back(); }
};

// Piecewise-polynomial trajectory: per component, an ordered list of
// finalized elements tiling (0, t_front].
class Solution {
 public:
  Solution() = default;
  Solution(int dim, std::vector<double> u0, double final_time)
      : dim_(dim), u0_(std::move(u0)), final_time_(final_time),
        elements_(dim), frontier_(dim, 0.0) {}

  int dim() const { return dim_; }
  double final_time() const { return final_time_; }
  const std::vector<double>& initial_state() const { return u0_; }
  double frontier(int i) const { return frontier_[i]; }
  double min_frontier() const {
    return *std::min_element(frontier_.begin(), frontier_.end());
  }
  const std::vector<ElementRecord>& elements(int i) const { return elements_[i]; }

  void append(int i, ElementRecord e) {
    if (!elements_[i].empty() &&
        std::abs(e.t_begin - elements_[i].back().t_end) > 1e-12 * (1.0 + std::abs(e.t_begin)))
      throw std::logic_error("Solution: non-contiguous element append");
    frontier_[i] = e.t_end;
    elements_[i].push_back(std::move(e));
  }

  // Value of component i at time t. Interpolates inside the covered range,
  // extrapolates the last element's polynomial beyond the frontier.
  double evaluate(int i, double t) const {
    if (t < 0.0 || t > final_time_ * (1.0 + 1e-12))
      throw std::domain_error("Solution::evaluate: t outside [0,T]");
    if (t <= 0.0) return u0_[i];
    const auto& elems = elements_[i];
    if (elems.empty()) return u0_[i];  // constant fallback before the first element
    const ElementRecord* e;
    if (t > frontier_[i]) {
      e = &elems.back();
    } else {
      // interval ownership: t in (t_begin, t_end]
      auto it = std::lower_bound(elems.begin(), elems.end(), t,
                                 [](const ElementRecord& a, double v) { return a.t_end < v; });
      if (it == elems.end()) --it;
      e = &*it;
    }
    double s = (t - e->t_begin) / e->k();
    return evaluate_basis(tableau(e->family, e->q), e->dofs, s);
  }

  void write_csv(std::ostream& out) const {
    out << "component,j,t_begin,t_end,family,q";
    int max_q = 0;
    for (const auto& comp : elements_)
      for (const auto& e : comp) max_q = std::max(max_q, e.q);
    for (int m = 0; m <= max_q; ++m) out << ",dof_" << m;
    out << '\n';
    char buf[32];
    auto num = [&buf](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    for (int i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < elements_[i].size(); ++j) {
        const auto& e = elements_[i][j];
        out << i << ',' << j << ',' << num(e.t_begin) << ',' << num(e.t_end) << ','
            << family_name(e.family) << ',' << e.q;
        for (double d : e.dofs) out << ',' << num(d);
        for (int m = static_cast<int>(e.dofs.size()); m <= max_q; ++m) out << ',';
        out << '\n';
      }
    }
  }

  static Solution read_csv(std::istream& in, int dim, std::vector<double> u0,
                           double final_time) {
    Solution sol(dim, std::move(u0), final_time);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("trajectory file: missing header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string field;
      auto next = [&]() {
        if (!std::getline(ss, field, ',')) throw std::runtime_error("trajectory file: short row");
        return field;
      };
      ElementRecord e;
      int comp = std::stoi(next());
      next();  // j
      e.t_begin = std::stod(next());
      e.t_end = std::stod(next());
      std::string fam = next();
      e.family = fam == "cG" ? Family::cG : Family::dG;
      e.q = std::stoi(next());
      for (int m = 0; m <= e.q; ++m) e.dofs.push_back(std::stod(next()));
      if (comp < 0 || comp >= dim) throw std::runtime_error("trajectory file: bad component");
      e.left_value = e.family == Family::cG ? e.dofs.front()
                                            : sol.evaluate(comp, e.t_begin);
      sol.append(comp, e);
    }
    return sol;
  }

 private:
  int dim_ = 0;
  std::vector<double> u0_;
  double final_time_ = 0.0;
  std::vector<std::vector<ElementRecord>> elements_;
  std::vector<double> frontier_;
};

}  // namespace magal
