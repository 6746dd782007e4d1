#pragma once

// Individual time-step selection from residuals and stability factors,
// step-sequence smoothing (geometric mean or PI regulation), and the error
// estimates assembled at the end of a computation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace magal {

enum class Regulator : std::uint8_t { geomean, pi };

inline const char* regulator_name(Regulator r) { return r == Regulator::geomean ? "geomean" : "pi"; }

struct ControllerState {
  double tol = 1e-4;
  int dim = 1;
  Regulator regulator = Regulator::geomean;
  double k_min = 1e-12;
  double k_max = 1.0;
  double pi_alpha = 0.3;
  double pi_beta = 0.1;
  double r_floor = 1e-15;

  std::vector<double> stability_factors;  // S_i, initial guess 1
  std::vector<int> order_exponents;       // p_i = q_i (cG) or q_i + 1 (dG)
  std::vector<double> k_prev;             // previous accepted step, 0 = none yet
  std::vector<double> r_prev;             // previous residual measure

  static ControllerState make(double tol, int dim, const std::vector<int>& exponents) {
    ControllerState st;
    st.tol = tol;
    st.dim = dim;
    st.order_exponents = exponents;
    st.stability_factors.assign(dim, 1.0);
    st.k_prev.assign(dim, 0.0);
    st.r_prev.assign(dim, 0.0);
    st.validate();
    return st;
  }

  void validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("controller: TOL must be positive");
    if (!(k_min > 0.0) || k_min > k_max)
      throw std::invalid_argument("controller: need 0 < k_min <= k_max");
    for (int p : order_exponents)
      if (p < 1) throw std::invalid_argument("controller: order exponent must be >= 1");
  }

  int exponent(int i) const {
    return order_exponents.size() == 1 ? order_exponents[0]
                                       : order_exponents.at(static_cast<std::size_t>(i));
  }

  double clamp(double k) const { return std::min(k_max, std::max(k_min, k)); }

  // Raw step law: k = (TOL/N / (S_i r))^(1/p).
  double raw_step(int i, double r_latest) const {
    double p = exponent(i);
    double s = std::max(stability_factors[i], 1e-300);
    double r = std::max(r_latest, r_floor);
    return std::pow(tol / dim / (s * r), 1.0 / p);
  }

  // Smoothed proposal for the next step of component i, given the size and
  // residual measure of the step just completed (k_latest = 0 means no step
  // has completed yet). Does not mutate state; call accept() afterwards.
  double propose_step(int i, double k_latest, double r_latest) const {
    if (r_latest < 0.0) throw std::invalid_argument("propose_step: negative residual");
    double k_raw = raw_step(i, r_latest);
    if (k_latest <= 0.0) return clamp(k_raw);
    if (regulator == Regulator::geomean) return clamp(std::sqrt(k_latest * k_raw));
    // PI: k_latest * (target/r)^(alpha/p) * (r_prev/r)^(beta/p) with
    // target = TOL / (N S_i k_latest^p) and r_prev the residual of the step
    // before the latest one.
    double p = exponent(i);
    double s = std::max(stability_factors[i], 1e-300);
    double r = std::max(r_latest, r_floor);
    double rp = std::max(r_prev[i], r_floor);
    double target = tol / (dim * s * std::pow(k_latest, p));
    double k = k_latest * std::pow(target / r, pi_alpha / p) * std::pow(rp / r, pi_beta / p);
    return clamp(k);
  }

  void accept(int i, double k, double r_latest) {
    r_prev[i] = r_latest;
    k_prev[i] = k;
  }
};

struct ElementStat {
  int comp = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  double k = 0.0;
  double r = 0.0;  // local residual measure r_ij
  // Stability weight s_ij, filled after the dual solve; NaN until then.
  double weight = std::numeric_limits<double>::quiet_NaN();
  int p = 1;  // order exponent p_ij
};

// Sum estimate: sum over elements of k^(p+1) r s.
inline double error_estimate_sum(const std::vector<ElementStat>& elements) {
  double e = 0.0;
  for (const auto& el : elements) {
    if (std::isnan(el.weight))
      throw std::invalid_argument("error_estimate_sum: element is missing its stability weight");
    e += std::pow(el.k, el.p + 1) * el.r * el.weight;
  }
  return e;
}

// Max estimate: sum over components of S_i max_j k^p r.
inline double error_estimate_max(const std::vector<ElementStat>& elements,
                                 const std::vector<double>& stability_factors) {
  std::vector<double> comp_max(stability_factors.size(), 0.0);
  for (const auto& el : elements) {
    if (el.comp < 0 || el.comp >= static_cast<int>(comp_max.size()))
      throw std::invalid_argument("error_estimate_max: component out of range");
    comp_max[el.comp] = std::max(comp_max[el.comp], std::pow(el.k, el.p) * el.r);
  }
  double e = 0.0;
  for (std::size_t i = 0; i < comp_max.size(); ++i) e += stability_factors[i] * comp_max[i];
  return e;
}

}  // namespace magal
