#pragma once

// Quadrature nodes, Galerkin weight matrices and nodal basis tables for the
// cG(q) and dG(q) element equations. Everything here is precomputed once per
// (family, order) pair and cached; tableaux are immutable after construction.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace magal {

enum class Family : std::uint8_t { cG, dG };

inline const char* family_name(Family f) { return f == Family::cG ? "cG" : "dG"; }

constexpr int max_order = 15;

struct MethodTableau {
  Family family;
  int q;
  // q+1 quadrature nodes on [0,1], strictly increasing. Lobatto for cG
  // (first node 0, last node 1), right-Radau for dG (last node 1).
  std::vector<double> nodes;
  // Quadrature weights on [0,1] matching `nodes`.
  std::vector<double> quad_weights;
  // Galerkin weight matrix w_mn: q x (q+1) for cG (rows m=1..q),
  // (q+1) x (q+1) for dG (rows m=0..q).
  Eigen::MatrixXd weights;
  // Barycentric weights of the nodal basis, for evaluation/extrapolation.
  std::vector<double> bary;
  // Differentiation matrix at the nodes: deriv(m,n) = l_n'(s_m).
  Eigen::MatrixXd deriv;
  // Nodal basis values at s=0 (used by the dG jump term; trivial for cG).
  std::vector<double> basis_at_zero;

  int dof_count() const { return q + 1; }
  int free_dof_count() const { return family == Family::cG ? q : q + 1; }
};

namespace detail {

// Legendre P_n(x) and P_n'(x) on [-1,1] by the three-term recurrence.
inline double legendre(int n, double x) {
  if (n == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

inline double legendre_deriv(int n, double x) {
  if (n == 0) return 0.0;
  // (1-x^2) P_n'(x) = n (P_{n-1}(x) - x P_n(x))
  double d = 1.0 - x * x;
  if (std::abs(d) < 1e-12) {
    // endpoint value: P_n'(+-1) = (+-1)^{n-1} n(n+1)/2
    double s = (x > 0) ? 1.0 : ((n - 1) % 2 == 0 ? 1.0 : -1.0);
    return s * 0.5 * n * (n + 1);
  }
  return n * (legendre(n - 1, x) - x * legendre(n, x)) / d;
}

// Roots of f on (a,b) by bracketing on a fine grid, bisection, then Newton
// polish to tolerance 1e-15 (at most 100 Newton iterations).
template <class F, class DF>
std::vector<double> bracketed_roots(F f, DF df, double a, double b, int expected) {
  const int grid = 200 * (expected + 2);
  std::vector<double> roots;
  double x0 = a, f0 = f(a);
  for (int i = 1; i <= grid; ++i) {
    double x1 = a + (b - a) * static_cast<double>(i) / grid;
    double f1 = f(x1);
    if (f0 == 0.0) roots.push_back(x0);
    if (f0 * f1 < 0.0) {
      double lo = x0, hi = x1, flo = f0;
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (flo * fm <= 0.0) hi = mid;
        else { lo = mid; flo = fm; }
      }
      double x = 0.5 * (lo + hi);
      for (int it = 0; it < 100; ++it) {
        double d = df(x);
        if (d == 0.0) break;
        double dx = f(x) / d;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      roots.push_back(x);
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

// Gauss-Lobatto nodes on [-1,1] for q+1 points (q >= 1): +-1 and the
// roots of P_q'.
inline std::vector<double> lobatto_nodes_ref(int q) {
  std::vector<double> x;
  x.push_back(-1.0);
  if (q >= 2) {
    auto interior = bracketed_roots([q](double t) { return legendre_deriv(q, t); },
                                    [q](double t) {
                                      // second derivative via the ODE:
                                      // (1-x^2) P'' = 2x P' - q(q+1) P
                                      double d = 1.0 - t * t;
                                      return (2 * t * legendre_deriv(q, t) -
                                              q * (q + 1) * legendre(q, t)) / d;
                                    },
                                    -0.9999999, 0.9999999, q - 1);
    x.insert(x.end(), interior.begin(), interior.end());
  }
  x.push_back(1.0);
  return x;
}

// Right-Radau nodes on [-1,1] for q+1 points: reflected roots of
// P_q + P_{q+1} (which include -1).
inline std::vector<double> radau_right_nodes_ref(int q) {
  if (q == 0) return {1.0};
  auto f = [q](double t) { return legendre(q, t) + legendre(q + 1, t); };
  auto df = [q](double t) { return legendre_deriv(q, t) + legendre_deriv(q + 1, t); };
  auto left = bracketed_roots(f, df, -0.9999999, 0.9999999, q);
  std::vector<double> x;
  for (auto it = left.rbegin(); it != left.rend(); ++it) x.push_back(-*it);
  x.push_back(1.0);
  return x;
}

inline std::vector<double> barycentric_weights(const std::vector<double>& s) {
  const int n = static_cast<int>(s.size());
  std::vector<double> b(n, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) b[i] /= (s[i] - s[j]);
  return b;
}

// Shifted Legendre P_p(2s-1), an orthogonal test basis on [0,1].
inline double test_poly(int p, double s) { return legendre(p, 2.0 * s - 1.0); }

}  // namespace detail

class unsupported_order : public std::invalid_argument {
 public:
  unsupported_order(Family f, int q)
      : std::invalid_argument(std::string("unsupported method order: ") +
                              family_name(f) + "(" + std::to_string(q) + ")") {}
};

inline MethodTableau make_tableau(Family family, int q) {
  if (q < 0 || q > max_order || (family == Family::cG && q < 1))
    throw unsupported_order(family, q);

  MethodTableau tab;
  tab.family = family;
  tab.q = q;

  // Nodes and quadrature weights, mapped from [-1,1] to [0,1].
  if (family == Family::cG) {
    auto x = detail::lobatto_nodes_ref(q);
    for (double xi : x) tab.nodes.push_back(0.5 * (xi + 1.0));
    tab.nodes.front() = 0.0;
    tab.nodes.back() = 1.0;
    for (double xi : x) {
      double pq = detail::legendre(q, xi);
      tab.quad_weights.push_back(1.0 / (q * (q + 1) * pq * pq));
    }
  } else {
    auto x = detail::radau_right_nodes_ref(q);
    for (double xi : x) tab.nodes.push_back(0.5 * (xi + 1.0));
    tab.nodes.back() = 1.0;
    const int n = q + 1;
    for (double xi : x) {
      if (xi >= 1.0 - 1e-14) {
        tab.quad_weights.push_back(1.0 / (n * n));
      } else {
        double pq = detail::legendre(n - 1, xi);
        tab.quad_weights.push_back(0.5 * (1.0 + xi) / (n * n * pq * pq));
      }
    }
  }

  tab.bary = detail::barycentric_weights(tab.nodes);

  const int nn = q + 1;
  tab.deriv.resize(nn, nn);
  for (int m = 0; m < nn; ++m) {
    double row_sum = 0.0;
    for (int n = 0; n < nn; ++n) {
      if (n == m) continue;
      double d = (tab.bary[n] / tab.bary[m]) / (tab.nodes[m] - tab.nodes[n]);
      tab.deriv(m, n) = d;
      row_sum += d;
    }
    tab.deriv(m, m) = -row_sum;
  }

  tab.basis_at_zero.assign(nn, 0.0);
  if (family == Family::cG) {
    tab.basis_at_zero[0] = 1.0;
  } else {
    // 0 is not a node for dG; evaluate each Lagrange basis there.
    double denom = 0.0;
    std::vector<double> terms(nn);
    for (int n = 0; n < nn; ++n) {
      terms[n] = tab.bary[n] / (0.0 - tab.nodes[n]);
      denom += terms[n];
    }
    for (int n = 0; n < nn; ++n) tab.basis_at_zero[n] = terms[n] / denom;
  }

  // Galerkin weight matrix from the orthogonality conditions, tested
  // against shifted Legendre polynomials and integrated with the element's
  // own quadrature (exact for the polynomial degrees involved).
  if (family == Family::cG) {
    // Rows p=0..q-1, unknowns xi_1..xi_q:
    //   sum_n xi_n int l_n' P_p = int f P_p  (quadrature on the rhs).
    Eigen::MatrixXd a_full = Eigen::MatrixXd::Zero(q, nn);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(q, nn);
    for (int p = 0; p < q; ++p) {
      for (int n = 0; n < nn; ++n) {
        double acc = 0.0;
        for (int r = 0; r < nn; ++r)
          acc += tab.quad_weights[r] * tab.deriv(r, n) * detail::test_poly(p, tab.nodes[r]);
        a_full(p, n) = acc;
        m(p, n) = tab.quad_weights[n] * detail::test_poly(p, tab.nodes[n]);
      }
    }
    Eigen::MatrixXd a_free = a_full.rightCols(q);
    tab.weights = a_free.partialPivLu().solve(m);
  } else {
    // Rows p=0..q, unknowns xi_0..xi_q, with the upwind jump at s=0:
    //   sum_n xi_n [l_n(0) P_p(0) + int l_n' P_p] = u_in P_p(0) + int f P_p.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nn, nn);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nn, nn);
    for (int p = 0; p < nn; ++p) {
      double pp0 = detail::test_poly(p, 0.0);
      for (int n = 0; n < nn; ++n) {
        double acc = tab.basis_at_zero[n] * pp0;
        for (int r = 0; r < nn; ++r)
          acc += tab.quad_weights[r] * tab.deriv(r, n) * detail::test_poly(p, tab.nodes[r]);
        a(p, n) = acc;
        m(p, n) = tab.quad_weights[n] * detail::test_poly(p, tab.nodes[n]);
      }
    }
    tab.weights = a.partialPivLu().solve(m);
  }

  return tab;
}

// Cached access; tableaux are built on first use and never mutated after.
inline const MethodTableau& tableau(Family family, int q) {
  static std::map<std::pair<int, int>, MethodTableau> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto key = std::make_pair(static_cast<int>(family), q);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, make_tableau(family, q)).first;
  return it->second;
}

// Value at parameter s of the degree-q polynomial through (node, dof) pairs.
// Valid for s outside [0,1] (extrapolation). Barycentric form.
inline double evaluate_basis(const MethodTableau& tab, std::span<const double> dofs, double s) {
  if (static_cast<int>(dofs.size()) != tab.dof_count())
    throw std::invalid_argument("evaluate_basis: dof count mismatch");
  const int nn = tab.dof_count();
  double num = 0.0, den = 0.0;
  for (int n = 0; n < nn; ++n) {
    double d = s - tab.nodes[n];
    if (std::abs(d) < 1e-300) return dofs[n];
    double t = tab.bary[n] / d;
    num += t * dofs[n];
    den += t;
  }
  return num / den;
}

// Derivative d/ds of the nodal interpolant at parameter s.
inline double evaluate_basis_derivative(const MethodTableau& tab, std::span<const double> dofs,
                                        double s) {
  if (static_cast<int>(dofs.size()) != tab.dof_count())
    throw std::invalid_argument("evaluate_basis_derivative: dof count mismatch");
  const int nn = tab.dof_count();
  // At a node, use the differentiation matrix row.
  for (int m = 0; m < nn; ++m) {
    if (std::abs(s - tab.nodes[m]) < 1e-13) {
      double acc = 0.0;
      for (int n = 0; n < nn; ++n) acc += tab.deriv(m, n) * dofs[n];
      return acc;
    }
  }
  // Elsewhere, differentiate the barycentric form.
  double num = 0.0, den = 0.0, dnum = 0.0, dden = 0.0;
  for (int n = 0; n < nn; ++n) {
    double d = s - tab.nodes[n];
    double t = tab.bary[n] / d;
    num += t * dofs[n];
    den += t;
    double dt = -tab.bary[n] / (d * d);
    dnum += dt * dofs[n];
    dden += dt;
  }
  return (dnum * den - num * dden) / (den * den);
}

// Debug dump of nodes and weight matrices. Node rows use m = -1.
inline void dump_tableaux_csv(std::ostream& out, int q_max) {
  out << "family,q,m,n,value\n";
  for (int fi = 0; fi < 2; ++fi) {
    Family f = fi == 0 ? Family::cG : Family::dG;
    for (int q = (f == Family::cG ? 1 : 0); q <= q_max; ++q) {
      const MethodTableau& tab = tableau(f, q);
      for (int n = 0; n <= q; ++n)
        out << family_name(f) << ',' << q << ",-1," << n << ',' << tab.nodes[n] << '\n';
      for (int m = 0; m < tab.weights.rows(); ++m)
        for (int n = 0; n < tab.weights.cols(); ++n)
          out << family_name(f) << ',' << q << ',' << m << ',' << n << ','
              << tab.weights(m, n) << '\n';
    }
  }
}

}  // namespace magal
