#pragma once

// Ready-made benchmark systems: the mass-spring chain, the Lorenz system,
// the gravitational n-body problem, the autocatalytic front problem, and a
// scalar linear test equation.

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "magal/system.hpp"

namespace magal {

struct ConservedQuantity {
  std::string name;
  std::function<double(std::span<const double>)> value;
};

struct ProblemSpec {
  std::string name;
  OdeSystem system;
  std::vector<ConservedQuantity> conserved;
  // Componentwise exact solution, when available.
  std::function<double(int, double)> exact;
};

// ---------------------------------------------------------------------------
// Mass-spring chain: n point masses in a line, springs of equal stiffness
// between neighbours and to walls at both ends. State layout:
// u = (x_1..x_n, v_1..v_n) with x the displacement from equilibrium.
// The oscillation frequency of a mass scales like 1/sqrt(m).
inline ProblemSpec mass_spring_chain(int n_masses, double m_small, double stiffness = 1.0,
                                     double final_time = 1.0) {
  if (n_masses < 2) throw std::invalid_argument("mass_spring_chain: need at least 2 masses");
  if (!(m_small > 0.0) || !(stiffness > 0.0))
    throw std::invalid_argument("mass_spring_chain: masses and stiffness must be positive");

  const int n = n_masses;
  std::vector<double> mass(n, 1.0);
  mass[0] = m_small;

  ProblemSpec spec;
  spec.name = "mass-spring";
  OdeSystem& sys = spec.system;
  sys.dim = 2 * n;
  sys.final_time = final_time;
  sys.u0.assign(2 * n, 0.0);
  sys.u0[0] = 0.1;  // displace the smallest mass, exciting the fast mode

  auto force = [n, stiffness](std::span<const double> u, int i) {
    double left = i == 0 ? 0.0 : u[i - 1];
    double right = i == n - 1 ? 0.0 : u[i + 1];
    return stiffness * (left - 2.0 * u[i] + right);
  };
  sys.rhs_component = [n, mass, force](int i, std::span<const double> u, double) {
    if (i < n) return u[n + i];
    return force(u, i - n) / mass[i - n];
  };
  sys.jacobian_diag = [](int, std::span<const double>, double) { return 0.0; };
  sys.jacobian_full = [n, mass, stiffness](std::span<const double>, double,
                                           Eigen::MatrixXd& jac) {
    jac.setZero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
      jac(i, n + i) = 1.0;
      jac(n + i, i) = -2.0 * stiffness / mass[i];
      if (i > 0) jac(n + i, i - 1) = stiffness / mass[i];
      if (i < n - 1) jac(n + i, i + 1) = stiffness / mass[i];
    }
  };

  spec.conserved.push_back(
      {"energy", [n, mass, stiffness](std::span<const double> u) {
         double e = 0.0;
         for (int i = 0; i < n; ++i) e += 0.5 * mass[i] * u[n + i] * u[n + i];
         e += 0.5 * stiffness * u[0] * u[0];
         for (int i = 0; i + 1 < n; ++i) {
           double d = u[i + 1] - u[i];
           e += 0.5 * stiffness * d * d;
         }
         e += 0.5 * stiffness * u[n - 1] * u[n - 1];
         return e;
       }});
  return spec;
}

// Preset multi-adaptive steps for the chain: k0 for the position and
// velocity of the small mass, 100 k0 for everything else.
inline std::vector<double> mass_spring_preset_steps(int n_masses, double k0) {
  std::vector<double> k(2 * n_masses, 100.0 * k0);
  k[0] = k0;
  k[n_masses] = k0;
  return k;
}

// ---------------------------------------------------------------------------
// The Lorenz system with sigma = 10, b = 8/3, r = 28, u0 = (1,0,0).
inline ProblemSpec lorenz(double final_time = 40.0) {
  const double sigma = 10.0, b = 8.0 / 3.0, r = 28.0;
  ProblemSpec spec;
  spec.name = "lorenz";
  OdeSystem& sys = spec.system;
  sys.dim = 3;
  sys.final_time = final_time;
  sys.u0 = {1.0, 0.0, 0.0};
  sys.rhs_component = [sigma, b, r](int i, std::span<const double> u, double) {
    switch (i) {
      case 0: return sigma * (u[1] - u[0]);
      case 1: return r * u[0] - u[1] - u[0] * u[2];
      default: return u[0] * u[1] - b * u[2];
    }
  };
  sys.jacobian_diag = [sigma, b](int i, std::span<const double>, double) {
    switch (i) {
      case 0: return -sigma;
      case 1: return -1.0;
      default: return -b;
    }
  };
  sys.jacobian_full = [sigma, b, r](std::span<const double> u, double, Eigen::MatrixXd& jac) {
    jac.resize(3, 3);
    jac << -sigma, sigma, 0.0,
           r - u[2], -1.0, -u[0],
           u[1], u[0], -b;
  };
  return spec;
}

// ---------------------------------------------------------------------------
// Gravitational n-body problem, normalized to AU / years / solar masses
// (G = 4 pi^2). State layout: positions of all bodies, then velocities.
struct Body {
  std::string name;
  double mass = 0.0;
  double pos[3] = {0, 0, 0};
  double vel[3] = {0, 0, 0};
};

inline std::vector<Body> load_bodies_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open body data file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("body data file: missing header");
  std::vector<Body> bodies;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string field;
    Body b;
    std::getline(ss, b.name, ',');
    auto num = [&ss, &field, &path]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("body data file: short row in " + path);
      return std::stod(field);
    };
    b.mass = num();
    for (double& v : b.pos) v = num();
    for (double& v : b.vel) v = num();
    bodies.push_back(std::move(b));
  }
  return bodies;
}

inline ProblemSpec solar_system(std::vector<Body> bodies, double final_time = 5.0) {
  const double G = 4.0 * std::numbers::pi * std::numbers::pi;
  const int nb = static_cast<int>(bodies.size());
  if (nb < 2) throw std::invalid_argument("solar_system: need at least 2 bodies");
  for (const Body& b : bodies)
    if (!(b.mass > 0.0)) throw std::invalid_argument("solar_system: nonpositive mass for " + b.name);
  for (int i = 0; i < nb; ++i)
    for (int j = i + 1; j < nb; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        double d = bodies[i].pos[c] - bodies[j].pos[c];
        d2 += d * d;
      }
      if (!(d2 > 0.0))
        throw std::invalid_argument("solar_system: coincident initial positions (" +
                                    bodies[i].name + ", " + bodies[j].name + ")");
    }

  std::vector<double> mass(nb);
  for (int i = 0; i < nb; ++i) mass[i] = bodies[i].mass;

  ProblemSpec spec;
  spec.name = "solar";
  OdeSystem& sys = spec.system;
  sys.dim = 6 * nb;
  sys.final_time = final_time;
  sys.u0.resize(6 * nb);
  for (int i = 0; i < nb; ++i)
    for (int c = 0; c < 3; ++c) {
      sys.u0[3 * i + c] = bodies[i].pos[c];
      sys.u0[3 * nb + 3 * i + c] = bodies[i].vel[c];
    }

  auto accel = [nb, mass, G](std::span<const double> u, int body, int c) {
    double a = 0.0;
    for (int j = 0; j < nb; ++j) {
      if (j == body) continue;
      double d[3], r2 = 0.0;
      for (int cc = 0; cc < 3; ++cc) {
        d[cc] = u[3 * j + cc] - u[3 * body + cc];
        r2 += d[cc] * d[cc];
      }
      a += G * mass[j] * d[c] / (r2 * std::sqrt(r2));
    }
    return a;
  };
  sys.rhs_component = [nb, accel](int i, std::span<const double> u, double) {
    if (i < 3 * nb) return u[3 * nb + i];
    int idx = i - 3 * nb;
    return accel(u, idx / 3, idx % 3);
  };
  sys.jacobian_diag = [](int, std::span<const double>, double) { return 0.0; };

  spec.conserved.push_back({"energy", [nb, mass, G](std::span<const double> u) {
                              double e = 0.0;
                              for (int i = 0; i < nb; ++i)
                                for (int c = 0; c < 3; ++c) {
                                  double v = u[3 * nb + 3 * i + c];
                                  e += 0.5 * mass[i] * v * v;
                                }
                              for (int i = 0; i < nb; ++i)
                                for (int j = i + 1; j < nb; ++j) {
                                  double r2 = 0.0;
                                  for (int c = 0; c < 3; ++c) {
                                    double d = u[3 * i + c] - u[3 * j + c];
                                    r2 += d * d;
                                  }
                                  e -= G * mass[i] * mass[j] / std::sqrt(r2);
                                }
                              return e;
                            }});
  for (int c = 0; c < 3; ++c) {
    spec.conserved.push_back({std::string("momentum_") + "xyz"[c],
                              [nb, mass, c](std::span<const double> u) {
                                double p = 0.0;
                                for (int i = 0; i < nb; ++i)
                                  p += mass[i] * u[3 * nb + 3 * i + c];
                                return p;
                              }});
    int a = (c + 1) % 3, b = (c + 2) % 3;
    spec.conserved.push_back({std::string("angular_momentum_") + "xyz"[c],
                              [nb, mass, a, b](std::span<const double> u) {
                                double l = 0.0;
                                for (int i = 0; i < nb; ++i)
                                  l += mass[i] * (u[3 * i + a] * u[3 * nb + 3 * i + b] -
                                                  u[3 * i + b] * u[3 * nb + 3 * i + a]);
                                return l;
                              }});
  }
  return spec;
}

// Earth-Moon-Sun subsystem with circular-orbit initial data (Earth at 1 AU,
// Moon at its mean distance with its mean orbital speed).
inline ProblemSpec earth_moon_sun(double final_time = 5.0) {
  const double m_earth = 3.0035e-6, m_moon = 3.694e-8;
  const double r_moon = 2.570e-3;           // AU
  const double v_earth = 2.0 * std::numbers::pi;  // circular at 1 AU, G = 4 pi^2
  const double v_moon = 2.0 * std::numbers::pi * r_moon / 0.0748;  // sidereal month
  std::vector<Body> bodies = {
      {"sun", 1.0, {0, 0, 0}, {0, 0, 0}},
      {"earth", m_earth, {1.0, 0, 0}, {0, v_earth, 0}},
      {"moon", m_moon, {1.0 + r_moon, 0, 0}, {0, v_earth + v_moon, 0}},
  };
  ProblemSpec spec = solar_system(std::move(bodies), final_time);
  spec.name = "earth-moon-sun";
  return spec;
}

// ---------------------------------------------------------------------------
// Propagating reaction front: method-of-lines discretization of
//   u1_t - eps u1_xx = -u1 u2^2,  u2_t - eps u2_xx = u1 u2^2
// on (0,L) with homogeneous Neumann boundaries (mirrored ghost values).
// State layout: u1 at all nodes, then u2 at all nodes. The pointwise sum
// u1 + u2 stays 1 when the initial data sums to 1.
inline ProblemSpec propagating_front(int n_nodes, double length = 1.0, double eps = 1e-5,
                                     double final_time = 100.0) {
  if (n_nodes < 3) throw std::invalid_argument("propagating_front: need at least 3 nodes");
  if (!(eps > 0.0) || !(length > 0.0))
    throw std::invalid_argument("propagating_front: epsilon and length must be positive");

  const int n = n_nodes;
  const double h = length / (n - 1);
  const double x0 = 0.2;

  ProblemSpec spec;
  spec.name = "front";
  OdeSystem& sys = spec.system;
  sys.dim = 2 * n;
  sys.final_time = final_time;
  sys.u0.assign(2 * n, 0.0);
  for (int j = 0; j < n; ++j) {
    double u1 = j * h >= x0 - 1e-12 ? 1.0 : 0.0;
    sys.u0[j] = u1;
    sys.u0[n + j] = 1.0 - u1;
  }

  auto laplacian = [n, h](std::span<const double> u, int offset, int j) {
    double left = j == 0 ? u[offset + 1] : u[offset + j - 1];
    double right = j == n - 1 ? u[offset + n - 2] : u[offset + j + 1];
    return (left - 2.0 * u[offset + j] + right) / (h * h);
  };
  sys.rhs_component = [n, eps, laplacian](int i, std::span<const double> u, double) {
    int j = i < n ? i : i - n;
    double reaction = u[j] * u[n + j] * u[n + j];
    if (i < n) return eps * laplacian(u, 0, j) - reaction;
    return eps * laplacian(u, n, j) + reaction;
  };
  sys.jacobian_diag = [n, h, eps](int i, std::span<const double> u, double) {
    double diff = -2.0 * eps / (h * h);
    int j = i < n ? i : i - n;
    if (i < n) return diff - u[n + j] * u[n + j];
    return diff + 2.0 * u[j] * u[n + j];
  };

  spec.conserved.push_back({"pointwise_sum_max_dev", [n](std::span<const double> u) {
                              double dev = 0.0;
                              for (int j = 0; j < n; ++j)
                                dev = std::max(dev, std::abs(u[j] + u[n + j] - 1.0));
                              return dev;
                            }});
  return spec;
}

// ---------------------------------------------------------------------------
// Scalar linear test problem u' = lambda u, u(0) = 1.
inline ProblemSpec scalar_linear(double lambda, double final_time = 1.0) {
  ProblemSpec spec;
  spec.name = "scalar-linear";
  OdeSystem& sys = spec.system;
  sys.dim = 1;
  sys.final_time = final_time;
  sys.u0 = {1.0};
  sys.rhs_component = [lambda](int, std::span<const double> u, double) { return lambda * u[0]; };
  sys.jacobian_diag = [lambda](int, std::span<const double>, double) { return lambda; };
  sys.jacobian_full = [lambda](std::span<const double>, double, Eigen::MatrixXd& jac) {
    jac.resize(1, 1);
    jac(0, 0) = lambda;
  };
  spec.exact = [lambda](int, double t) { return std::exp(lambda * t); };
  return spec;
}

}  // namespace magal
