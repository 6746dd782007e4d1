// Command-line front-end: solve a problem adaptively, certify a stored
// trajectory with a dual solve, or run benchmark sweeps. All outputs are
// CSV with a header row, written atomically (temp file + rename).

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "magal/problems.hpp"
#include "magal/solver.hpp"

namespace fs = std::filesystem;
using namespace magal;

namespace {

struct RunConfig {
  std::string problem = "scalar-linear";
  std::string method = "mcg";
  std::vector<int> orders;  // empty = family default (mcg: 1, mdg: 0)
  double tol = 1e-4;
  std::string strategy = "dyadic";
  std::string regulator = "geomean";
  std::string scheme = "fixpoint";
  double kmin = 1e-10;
  double kmax = 0.1;
  int rounds_max = 10;
  std::string out = "out";
  long seed = 0;
  bool trace = false;

  // Problem parameters.
  double lambda = -1.0;
  double final_time = 0.0;  // 0 = problem default
  int size = 0;             // 0 = problem default
  std::string bodies;       // body CSV for the n-body problem
};

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_order_list(const std::string& value) {
  std::vector<int> orders;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t pos = 0;
    int q = std::stoi(item, &pos);
    if (pos != item.size()) throw std::invalid_argument("order: not an integer: '" + item + "'");
    orders.push_back(q);
  }
  if (orders.empty()) throw std::invalid_argument("order: empty value");
  return orders;
}

// `key = value` lines, '#' comments. Unknown keys are an error so that a
// typo never silently falls back to a default.
void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    auto fail = [&](const std::string& msg) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (eq == std::string::npos) fail("expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.empty()) fail("empty value for key '" + key + "'");
    try {
      if (key == "tol") cfg.tol = std::stod(value);
      else if (key == "method") cfg.method = value;
      else if (key == "order") cfg.orders = parse_order_list(value);
      else if (key == "strategy") cfg.strategy = value;
      else if (key == "regulator") cfg.regulator = value;
      else if (key == "kmin") cfg.kmin = std::stod(value);
      else if (key == "kmax") cfg.kmax = std::stod(value);
      else if (key == "scheme") cfg.scheme = value;
      else if (key == "rounds_max") cfg.rounds_max = std::stoi(value);
      else if (key == "problem") cfg.problem = value;
      else if (key == "lambda") cfg.lambda = std::stod(value);
      else if (key == "final_time") cfg.final_time = std::stod(value);
      else if (key == "size") cfg.size = std::stoi(value);
      else if (key == "bodies") cfg.bodies = value;
      else if (key == "out") cfg.out = value;
      else if (key == "seed") cfg.seed = std::stol(value);
      else fail("unknown key '" + key + "'");
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      fail("bad value '" + value + "' for key '" + key + "'");
    }
  }
}

void validate(const RunConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!(cfg.kmin > 0.0)) throw std::invalid_argument("kmin must be positive");
  if (!(cfg.kmax > cfg.kmin)) throw std::invalid_argument("kmax must exceed kmin");
  if (cfg.rounds_max < 1) throw std::invalid_argument("rounds_max must be at least 1");
  if (cfg.method != "mcg" && cfg.method != "mdg")
    throw std::invalid_argument("method must be mcg or mdg");
  if (cfg.strategy != "dyadic" && cfg.strategy != "rational" && cfg.strategy != "free")
    throw std::invalid_argument("strategy must be dyadic, rational or free");
  if (cfg.regulator != "geomean" && cfg.regulator != "pi")
    throw std::invalid_argument("regulator must be geomean or pi");
  if (cfg.scheme != "fixpoint" && cfg.scheme != "newton")
    throw std::invalid_argument("scheme must be fixpoint or newton");
}

MethodSpec method_spec(const RunConfig& cfg) {
  MethodSpec spec;
  spec.family = cfg.method == "mcg" ? Family::cG : Family::dG;
  spec.orders = cfg.orders;
  if (spec.orders.empty()) spec.orders = {spec.family == Family::cG ? 1 : 0};
  return spec;
}

Strategy strategy_of(const RunConfig& cfg) {
  if (cfg.strategy == "dyadic") return Strategy::dyadic;
  if (cfg.strategy == "rational") return Strategy::rational;
  return Strategy::free_form;
}

ProblemSpec make_problem(const RunConfig& cfg) {
  auto T = [&](double dflt) { return cfg.final_time > 0.0 ? cfg.final_time : dflt; };
  if (cfg.problem == "scalar-linear") return scalar_linear(cfg.lambda, T(1.0));
  if (cfg.problem == "lorenz") return lorenz(T(40.0));
  if (cfg.problem == "mass-spring")
    return mass_spring_chain(cfg.size > 0 ? cfg.size : 5, 1e-4, 1.0, T(1.0));
  if (cfg.problem == "front")
    return propagating_front(cfg.size > 0 ? cfg.size : 16, 1.0, 1e-5, T(100.0));
  if (cfg.problem == "earth-moon-sun") return earth_moon_sun(T(5.0));
  if (cfg.problem == "solar") {
    if (cfg.bodies.empty())
      throw std::invalid_argument("problem 'solar' needs a body file (bodies = PATH)");
    return solar_system(load_bodies_csv(cfg.bodies), T(5.0));
  }
  throw std::invalid_argument(
      "unknown problem '" + cfg.problem +
      "' (available: scalar-linear, lorenz, mass-spring, front, earth-moon-sun, solar)");
}

fs::path output_dir(const RunConfig& cfg) {
  const char* env = std::getenv("MAGAL_OUT");
  fs::path dir = env && *env ? fs::path(env) : fs::path(cfg.out);
  fs::create_directories(dir);
  return dir;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string steps_csv(const std::vector<ElementStat>& stats) {
  std::ostringstream out;
  out << "component,t_begin,t_end,k,r\n";
  for (const auto& st : stats)
    out << st.comp << ',' << num(st.t_begin) << ',' << num(st.t_end) << ',' << num(st.k) << ','
        << num(st.r) << '\n';
  return out.str();
}

std::string weights_csv(const std::vector<ElementStat>& stats, int dim) {
  std::ostringstream out;
  out << "component,j,s_ij\n";
  std::vector<long> count(dim, 0);
  for (const auto& st : stats)
    out << st.comp << ',' << count[st.comp]++ << ',' << num(st.weight) << '\n';
  return out.str();
}

int cmd_solve(const RunConfig& cfg) {
  validate(cfg);
  ProblemSpec prob = make_problem(cfg);

  AdaptiveOptions opt;
  opt.method = method_spec(cfg);
  opt.strategy = strategy_of(cfg);
  opt.scheme = cfg.scheme == "newton" ? Scheme::newton : Scheme::fixpoint;
  opt.tol = cfg.tol;
  opt.regulator = cfg.regulator == "pi" ? Regulator::pi : Regulator::geomean;
  opt.k_min = cfg.kmin;
  opt.k_max = cfg.kmax;
  opt.rounds_max = cfg.rounds_max;
  std::ostringstream trace;
  if (cfg.trace) opt.trace = &trace;

  DualData data = dual_data_preset(DualPreset::endpoint_component, prob.system.dim, 0);
  AdaptiveResult res = adaptive_solve(prob.system, opt, data);

  fs::path dir = output_dir(cfg);
  {
    std::ostringstream traj;
    res.solution.write_csv(traj);
    write_atomic(dir / "trajectory.csv", traj.str());
  }
  write_atomic(dir / "steps.csv", steps_csv(res.stats));
  write_atomic(dir / "weights.csv", weights_csv(res.stats, prob.system.dim));
  {
    std::ostringstream log;
    log << "problem = " << cfg.problem << '\n'
        << "method = " << cfg.method << '\n'
        << "tol = " << num(cfg.tol) << '\n'
        << "seed = " << cfg.seed << '\n'
        << "E = " << num(res.error_estimate) << '\n'
        << "accepted = " << (res.accepted ? "true" : "false") << '\n'
        << "rounds = " << res.rounds << '\n'
        << "elements = " << res.total_elements << '\n'
        << "rhs_evals = " << prob.system.evals() << '\n';
    write_atomic(dir / "run.log", log.str());
  }
  if (cfg.trace) write_atomic(dir / "slab_trace.log", trace.str());

  std::cout << "E = " << num(res.error_estimate) << ", accepted = "
            << (res.accepted ? "true" : "false") << '\n';
  return res.accepted ? 0 : 2;
}

int cmd_dual(const RunConfig& cfg, const std::string& trajectory_path, int data_component,
             int growth_samples) {
  validate(cfg);
  ProblemSpec prob = make_problem(cfg);
  const int dim = prob.system.dim;

  std::ifstream in(trajectory_path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + trajectory_path);
  Solution primal = Solution::read_csv(in, dim, prob.system.u0, prob.system.final_time);

  DualData data = dual_data_preset(DualPreset::endpoint_component, dim, data_component);
  Solution dual = solve_dual(primal, prob.system, data);

  fs::path dir = output_dir(cfg);
  {
    std::ostringstream out;
    dual.write_csv(out);
    write_atomic(dir / "dual.csv", out.str());
  }
  {
    std::vector<ElementStat> no_stats;
    std::vector<int> exps = order_exponents(method_spec(cfg), dim);
    std::vector<double> factors = stability_weights(dual, no_stats, exps);
    std::ostringstream out;
    out << "component,S_i\n";
    for (int i = 0; i < dim; ++i) out << i << ',' << num(factors[i]) << '\n';
    write_atomic(dir / "factors.csv", out.str());
  }
  {
    // Growth curve: fundamental-matrix bounds over a ladder of horizons.
    std::ostringstream out;
    out << "T_sample,S0_bar,S1_bar,S2_bar\n";
    DualOptions dopt;
    dopt.norm_samples = 400;
    for (int s = 1; s <= growth_samples; ++s) {
      double t_cut = prob.system.final_time * (static_cast<double>(s) / growth_samples);
      Solution clipped = truncate_solution(primal, t_cut);
      OdeSystem sub = prob.system;
      sub.final_time = t_cut;
      PhiSamples phi = fundamental_matrix(clipped, sub, dopt);
      out << num(t_cut) << ',' << num(stability_factor_bound(phi, 0)) << ','
          << num(stability_factor_bound(phi, 1)) << ',' << num(stability_factor_bound(phi, 2))
          << '\n';
    }
    write_atomic(dir / "stability.csv", out.str());
  }
  std::cout << "stability report written to " << dir.string() << '\n';
  return 0;
}

double endpoint_error(const Solution& sol, const Solution& ref) {
  double err = 0.0;
  for (int i = 0; i < sol.dim(); ++i) {
    double d = sol.evaluate(i, sol.final_time()) - ref.evaluate(i, ref.final_time());
    err = std::max(err, std::abs(d));
  }
  return err;
}

double wall_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int suite_mass_spring(const RunConfig& cfg) {
  std::ostringstream out;
  out << "N,method,error,steps_total,f_evals,wall_time\n";
  const double k0 = 1e-3;
  for (int n : {10, 50, 100}) {
    ProblemSpec prob = mass_spring_chain(n, 1e-4, 1.0, 1.0);
    PrimalOptions base;
    base.method.family = Family::cG;
    base.method.orders = {1};
    base.iteration.tol_discrete = 1e-10;

    auto run = [&](std::vector<double> steps) {
      PrimalOptions opt = base;
      opt.fixed_steps = std::move(steps);
      prob.system.reset_evals();
      auto t0 = std::chrono::steady_clock::now();
      PrimalResult res = primal_solve(prob.system, opt);
      if (!res.success) throw std::runtime_error("mass-spring benchmark run failed: " + res.message);
      return std::tuple{std::move(res), prob.system.evals(), wall_seconds(t0)};
    };

    auto [ref, ref_evals, ref_wall] = run(mass_spring_preset_steps(n, k0 / 5.0));
    auto [multi, multi_evals, multi_wall] = run(mass_spring_preset_steps(n, k0));
    auto [uni, uni_evals, uni_wall] = run({k0});

    out << n << ",multi," << num(endpoint_error(multi.solution, ref.solution)) << ','
        << multi.total_elements << ',' << multi_evals << ',' << num(multi_wall) << '\n';
    out << n << ",uniform," << num(endpoint_error(uni.solution, ref.solution)) << ','
        << uni.total_elements << ',' << uni_evals << ',' << num(uni_wall) << '\n';
  }
  write_atomic(output_dir(cfg) / "mass_spring.csv", out.str());
  return 0;
}

int suite_convergence(const RunConfig& cfg) {
  std::ostringstream out;
  out << "method,q,slope\n";
  ProblemSpec prob = scalar_linear(-1.0, 1.0);
  const std::vector<double> ks = {0.1, 0.05, 0.025, 0.0125};
  struct Case { Family family; int q; const char* name; };
  for (const Case& c : {Case{Family::dG, 0, "mdg"}, Case{Family::cG, 1, "mcg"},
                        Case{Family::dG, 1, "mdg"}}) {
    std::vector<double> logk, logerr;
    for (double k : ks) {
      PrimalOptions opt;
      opt.method.family = c.family;
      opt.method.orders = {c.q};
      opt.fixed_steps = {k};
      opt.iteration.tol_discrete = 1e-13;
      opt.iteration.scheme = Scheme::newton;
      PrimalResult res = primal_solve(prob.system, opt);
      if (!res.success) throw std::runtime_error("convergence benchmark run failed");
      double err = std::abs(res.solution.evaluate(0, 1.0) - prob.exact(0, 1.0));
      logk.push_back(std::log(k));
      logerr.push_back(std::log(err));
    }
    // Least-squares slope of log err against log k.
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < logk.size(); ++i) { mx += logk[i]; my += logerr[i]; }
    mx /= logk.size(); my /= logk.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < logk.size(); ++i) {
      sxy += (logk[i] - mx) * (logerr[i] - my);
      sxx += (logk[i] - mx) * (logk[i] - mx);
    }
    out << c.name << ',' << c.q << ',' << num(sxy / sxx) << '\n';
  }
  write_atomic(output_dir(cfg) / "convergence.csv", out.str());
  return 0;
}

int suite_front(const RunConfig& cfg) {
  std::ostringstream out;
  out << "nodes,length,method,f_evals,wall_time\n";
  const double T = cfg.final_time > 0.0 ? cfg.final_time : 10.0;
  struct Config { int nodes; double length; };
  for (const Config& c : {Config{16, 1.0}, Config{32, 2.0}}) {
    ProblemSpec prob = propagating_front(c.nodes, c.length, 1e-5, T);

    AdaptiveOptions opt;
    opt.method.family = Family::cG;
    opt.method.orders = {2};
    opt.tol = 1e-5;
    opt.k_max = 0.5;
    prob.system.reset_evals();
    auto t0 = std::chrono::steady_clock::now();
    AdaptiveResult multi =
        adaptive_solve(prob.system, opt, dual_data_preset(DualPreset::endpoint_component,
                                                          prob.system.dim, 0));
    double multi_wall = wall_seconds(t0);
    long multi_evals = prob.system.evals();

    double k_min = T;
    for (const auto& st : multi.stats) k_min = std::min(k_min, st.k);
    PrimalOptions mono;
    mono.method.family = Family::cG;
    mono.method.orders = {2};
    mono.fixed_steps = {k_min};
    mono.iteration.tol_discrete = 1e-10;
    prob.system.reset_evals();
    t0 = std::chrono::steady_clock::now();
    PrimalResult uni = primal_solve(prob.system, mono);
    double uni_wall = wall_seconds(t0);
    if (!uni.success) throw std::runtime_error("front benchmark uniform run failed");

    out << c.nodes << ',' << num(c.length) << ",multi," << multi_evals << ','
        << num(multi_wall) << '\n';
    out << c.nodes << ',' << num(c.length) << ",uniform," << prob.system.evals() << ','
        << num(uni_wall) << '\n';
  }
  write_atomic(output_dir(cfg) / "front.csv", out.str());
  return 0;
}

int cmd_benchmark(const RunConfig& cfg, const std::string& suite) {
  if (suite == "mass-spring") return suite_mass_spring(cfg);
  if (suite == "convergence") return suite_convergence(cfg);
  if (suite == "front") return suite_front(cfg);
  throw std::invalid_argument("unknown suite '" + suite +
                              "' (available: mass-spring, convergence, front)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multirate Galerkin time-stepping for ODE initial value problems"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path, order_arg, trajectory_path, suite = "convergence";
  int data_component = 0, growth_samples = 20;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines)");
    cmd->add_option("--problem", cfg.problem, "problem name");
    cmd->add_option("--tol", cfg.tol, "error tolerance");
    cmd->add_option("--method", cfg.method, "mcg or mdg");
    cmd->add_option("--order", order_arg, "polynomial order (integer or comma list)");
    cmd->add_option("--strategy", cfg.strategy, "dyadic, rational or free");
    cmd->add_option("--scheme", cfg.scheme, "fixpoint or newton");
    cmd->add_option("--regulator", cfg.regulator, "geomean or pi");
    cmd->add_option("--kmin", cfg.kmin, "smallest admissible step");
    cmd->add_option("--kmax", cfg.kmax, "largest admissible step");
    cmd->add_option("--rounds-max", cfg.rounds_max, "adaptive round limit");
    cmd->add_option("--lambda", cfg.lambda, "decay rate of the scalar test problem");
    cmd->add_option("--final-time", cfg.final_time, "integration horizon (0 = problem default)");
    cmd->add_option("--size", cfg.size, "problem size knob (masses or grid nodes)");
    cmd->add_option("--bodies", cfg.bodies, "body CSV for the n-body problem");
    cmd->add_option("--out", cfg.out, "output directory (env MAGAL_OUT overrides)");
    cmd->add_option("--seed", cfg.seed, "random seed recorded in the run log");
    cmd->add_flag("--trace", cfg.trace, "write the slab trace log");
  };

  CLI::App* solve = app.add_subcommand("solve", "adaptive solve with error control");
  add_common(solve);
  CLI::App* dual = app.add_subcommand("dual", "dual certification of a stored trajectory");
  add_common(dual);
  dual->add_option("--trajectory", trajectory_path, "trajectory CSV from a solve run")
      ->required();
  dual->add_option("--data-component", data_component, "component selected by the dual data");
  dual->add_option("--growth-samples", growth_samples, "horizon samples in the growth curve");
  CLI::App* bench = app.add_subcommand("benchmark", "benchmark sweeps");
  add_common(bench);
  bench->add_option("--suite", suite, "mass-spring, convergence or front");

  CLI11_PARSE(app, argc, argv);

  try {
    // Re-parse CLI after the config file so that flags win over file keys.
    if (!config_path.empty()) {
      RunConfig file_cfg;
      apply_config_file(config_path, file_cfg);
      RunConfig cli_cfg = cfg;
      cfg = file_cfg;
      auto* cmd = app.get_subcommands().front();
      auto keep = [&](const char* name, auto& dst, auto& src) {
        if (cmd->count(name) > 0) dst = src;
      };
      keep("--problem", cfg.problem, cli_cfg.problem);
      keep("--tol", cfg.tol, cli_cfg.tol);
      keep("--method", cfg.method, cli_cfg.method);
      keep("--strategy", cfg.strategy, cli_cfg.strategy);
      keep("--scheme", cfg.scheme, cli_cfg.scheme);
      keep("--regulator", cfg.regulator, cli_cfg.regulator);
      keep("--kmin", cfg.kmin, cli_cfg.kmin);
      keep("--kmax", cfg.kmax, cli_cfg.kmax);
      keep("--rounds-max", cfg.rounds_max, cli_cfg.rounds_max);
      keep("--lambda", cfg.lambda, cli_cfg.lambda);
      keep("--final-time", cfg.final_time, cli_cfg.final_time);
      keep("--size", cfg.size, cli_cfg.size);
      keep("--bodies", cfg.bodies, cli_cfg.bodies);
      keep("--out", cfg.out, cli_cfg.out);
      keep("--seed", cfg.seed, cli_cfg.seed);
      keep("--trace", cfg.trace, cli_cfg.trace);
    }
    if (!order_arg.empty()) cfg.orders = parse_order_list(order_arg);

    if (solve->parsed()) return cmd_solve(cfg);
    if (dual->parsed()) return cmd_dual(cfg, trajectory_path, data_component, growth_samples);
    return cmd_benchmark(cfg, suite);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
