#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>
#include <tomlplusplus/toml.hpp>

#include "sonata/errors.hpp"
#include "sonata/io.hpp"
#include "sonata/network.hpp"
#include "sonata/problem.hpp"
#include "sonata/rates.hpp"
#include "sonata/solver.hpp"
#include "sonata/surrogate.hpp"

namespace sonata {

inline constexpr int kSchemaVersion = 1;

enum class Scenario { single_run, sweep_kappa, sweep_beta, compare_surrogates, tv_run };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::single_run: return "single_run";
    case Scenario::sweep_kappa: return "sweep_kappa";
    case Scenario::sweep_beta: return "sweep_beta";
    case Scenario::compare_surrogates: return "compare_surrogates";
    case Scenario::tv_run: return "tv_run";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "single_run") return Scenario::single_run;
  if (s == "sweep_kappa") return Scenario::sweep_kappa;
  if (s == "sweep_beta") return Scenario::sweep_beta;
  if (s == "compare_surrogates") return Scenario::compare_surrogates;
  if (s == "tv_run") return Scenario::tv_run;
  throw ConfigError("unknown scenario: " + s);
}

struct ProblemConfig {
  std::string kind = "ridge";  // ridge | example1 | logistic | file
  int m = 10, n = 200, d = 20;
  double lambda = 0.0;
  std::vector<double> lambda_grid, kappa_grid;
  std::vector<int> n_grid;
  double mu0 = 1.0, L0 = 1000.0;
  double a = 1.0, b = 1.0;
  std::string g = "zero";
  double g_param = 0.0;
  std::string constraint = "all_space";
  double radius = 1.0, lo = -1.0, hi = 1.0;
  std::string file;
  std::vector<std::string> data_files;
};

struct NetworkConfig {
  std::string kind = "erdos_renyi";
  double p = 0.5;
  std::vector<std::pair<int, int>> edges;
  int rounds = 1;
  bool chebyshev = false;
  bool auto_rounds = false;
  int max_rounds = 1000;
  std::string tv_kind = "alternating_subgraphs";
  int B = 2;
  double c_ell = 0.0;  // 0 selects the largest admissible value
};

struct SolverSection {
  std::string mode = "undirected";
  std::string alpha_rule = "fixed";  // fixed | c_times_alpha_max
  double alpha = 1.0;
  double c = 0.5;
  double eps = 1e-7;
  long max_iters = 100000;
  bool random_init = false;
};

struct SurrogateConfig {
  std::string kind = "linearization";
  std::optional<double> tau;
  double inner_tol = 1e-12;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  Scenario scenario = Scenario::single_run;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  ProblemConfig problem;
  NetworkConfig network;
  SolverSection solver;
  SurrogateConfig surrogate;
  int replications = 1;
  bool write_traces = true;

  // Grid values of the scenario (one entry for single runs).
  std::vector<double> grid() const {
    switch (scenario) {
      case Scenario::sweep_kappa:
        return !problem.kappa_grid.empty() ? problem.kappa_grid : problem.lambda_grid;
      case Scenario::sweep_beta:
      case Scenario::compare_surrogates: {
        std::vector<double> g;
        for (int n : problem.n_grid) g.push_back(n);
        return g;
      }
      default: return {problem.kind == "ridge" ? problem.lambda : 0.0};
    }
  }

  void validate() const {
    if (schema_version != kSchemaVersion)
      throw ConfigError(fmt::format("unsupported schema_version {} (expected {})", schema_version, kSchemaVersion));
    if (replications < 1) throw ConfigError("monte_carlo.replications must be >= 1");
    const auto& P = problem;
    if (P.m < 1 || P.n < 1 || P.d < 1) throw ConfigError("problem sizes must be positive");
    if (P.kind == "ridge" && !(P.mu0 > 0 && P.mu0 <= P.L0)) throw ConfigError("ridge needs 0 < mu0 <= L0");
    if (P.lambda < 0) throw ConfigError("lambda must be nonnegative");
    static const std::set<std::string> kinds{"ridge", "example1", "logistic", "file"};
    if (!kinds.count(P.kind)) throw ConfigError("unknown problem kind: " + P.kind);
    if (scenario == Scenario::sweep_kappa) {
      if (P.kind != "ridge") throw ConfigError("sweep_kappa needs a ridge problem");
      if (P.kappa_grid.empty() && P.lambda_grid.empty()) throw ConfigError("sweep_kappa needs kappa_grid or lambda_grid");
      if (!P.kappa_grid.empty() && !P.lambda_grid.empty())
        throw ConfigError("give either kappa_grid or lambda_grid, not both");
      for (double k : P.kappa_grid)
        if (!(k > 1)) throw ConfigError("kappa_grid values must exceed 1");
      for (double l : P.lambda_grid)
        if (l < 0) throw ConfigError("lambda_grid values must be nonnegative");
    }
    if (scenario == Scenario::sweep_beta || scenario == Scenario::compare_surrogates) {
      if (P.kind != "ridge") throw ConfigError("n sweeps need a ridge problem");
      if (P.n_grid.empty()) throw ConfigError("n sweeps need a nonempty n_grid");
      for (int n : P.n_grid)
        if (n < 1) throw ConfigError("n_grid values must be positive");
    }
    if (solver.alpha_rule == "fixed") {
      if (!(solver.alpha > 0 && solver.alpha <= 1)) throw ConfigError("solver.alpha must lie in (0, 1]");
    } else if (solver.alpha_rule == "c_times_alpha_max") {
      if (!(solver.c > 0 && solver.c < 1)) throw ConfigError("solver.c must lie in (0, 1)");
    } else {
      throw ConfigError("unknown alpha rule: " + solver.alpha_rule);
    }
    if (!(solver.eps >= 0)) throw ConfigError("solver.eps must be nonnegative");
    if (solver.max_iters < 0) throw ConfigError("solver.max_iters must be nonnegative");
    mode_from_string(solver.mode);
    surrogate_kind_from_string(surrogate.kind);
    if (surrogate.kind == "custom") throw ConfigError("custom surrogates are available through the library only");
    if (!(surrogate.inner_tol > 0)) throw ConfigError("surrogate.inner_tol must be positive");
    topology_kind_from_string(network.kind);
    tv_kind_from_string(network.tv_kind);
    if (network.rounds < 1 || network.max_rounds < 1) throw ConfigError("network rounds must be >= 1");
    if (network.B < 1) throw ConfigError("network.B must be >= 1");
    if (network.c_ell < 0 || network.c_ell > 1.0 / P.m) throw ConfigError("network.c_ell must lie in (0, 1/m]");
    if (network.kind == "erdos_renyi" && !(network.p > 0 && network.p <= 1))
      throw ConfigError("network.p must lie in (0, 1]");
  }
};

// ---------------------------------------------------------------------------
// Config parsing (TOML, or JSON by extension)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& t, const std::set<std::string>& allowed, const std::string& where) {
  if (!t.is_object()) throw ConfigError(where + " must be a table");
  for (auto it = t.begin(); it != t.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& t, const char* key, T& out) {
  if (!t.contains(key)) return;
  try {
    out = t.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("bad value for '{}': {}", key, e.what()));
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::read;
  detail::check_keys(j,
                     {"schema_version", "scenario", "seed", "out_dir", "problem", "network", "solver", "surrogate",
                      "monte_carlo", "output"},
                     "config");
  ExperimentConfig c;
  read(j, "schema_version", c.schema_version);
  if (!j.contains("schema_version")) throw ConfigError("config needs schema_version");
  std::string scenario = "single_run";
  read(j, "scenario", scenario);
  c.scenario = scenario_from_string(scenario);
  read(j, "seed", c.seed);
  read(j, "out_dir", c.out_dir);
  if (j.contains("problem")) {
    const auto& t = j["problem"];
    detail::check_keys(t,
                       {"kind", "m", "n", "d", "lambda", "lambda_grid", "kappa_grid", "n_grid", "mu0", "L0", "a", "b",
                        "g", "g_param", "constraint", "radius", "lo", "hi", "file", "data_files"},
                       "[problem]");
    auto& P = c.problem;
    read(t, "kind", P.kind);
    read(t, "m", P.m);
    read(t, "n", P.n);
    read(t, "d", P.d);
    read(t, "lambda", P.lambda);
    read(t, "lambda_grid", P.lambda_grid);
    read(t, "kappa_grid", P.kappa_grid);
    read(t, "n_grid", P.n_grid);
    read(t, "mu0", P.mu0);
    read(t, "L0", P.L0);
    read(t, "a", P.a);
    read(t, "b", P.b);
    read(t, "g", P.g);
    read(t, "g_param", P.g_param);
    read(t, "constraint", P.constraint);
    read(t, "radius", P.radius);
    read(t, "lo", P.lo);
    read(t, "hi", P.hi);
    read(t, "file", P.file);
    read(t, "data_files", P.data_files);
  }
  if (j.contains("network")) {
    const auto& t = j["network"];
    detail::check_keys(t, {"kind", "p", "edges", "rounds", "chebyshev", "auto_rounds", "max_rounds", "tv_kind", "B", "c_ell"},
                       "[network]");
    auto& N = c.network;
    read(t, "kind", N.kind);
    read(t, "p", N.p);
    read(t, "edges", N.edges);
    read(t, "rounds", N.rounds);
    read(t, "chebyshev", N.chebyshev);
    read(t, "auto_rounds", N.auto_rounds);
    read(t, "max_rounds", N.max_rounds);
    read(t, "tv_kind", N.tv_kind);
    read(t, "B", N.B);
    read(t, "c_ell", N.c_ell);
  }
  if (j.contains("solver")) {
    const auto& t = j["solver"];
    detail::check_keys(t, {"mode", "alpha_rule", "alpha", "c", "eps", "max_iters", "random_init"}, "[solver]");
    auto& S = c.solver;
    read(t, "mode", S.mode);
    read(t, "alpha_rule", S.alpha_rule);
    read(t, "alpha", S.alpha);
    read(t, "c", S.c);
    read(t, "eps", S.eps);
    read(t, "max_iters", S.max_iters);
    read(t, "random_init", S.random_init);
  }
  if (j.contains("surrogate")) {
    const auto& t = j["surrogate"];
    detail::check_keys(t, {"kind", "tau", "inner_tol"}, "[surrogate]");
    read(t, "kind", c.surrogate.kind);
    if (t.contains("tau")) {
      double tau = 0;
      read(t, "tau", tau);
      c.surrogate.tau = tau;
    }
    read(t, "inner_tol", c.surrogate.inner_tol);
  }
  if (j.contains("monte_carlo")) {
    detail::check_keys(j["monte_carlo"], {"replications"}, "[monte_carlo]");
    read(j["monte_carlo"], "replications", c.replications);
  }
  if (j.contains("output")) {
    detail::check_keys(j["output"], {"traces"}, "[output]");
    read(j["output"], "traces", c.write_traces);
  }
  if (c.scenario == Scenario::tv_run) c.solver.mode = "time_varying";
  c.validate();
  return c;
}

inline json toml_to_json(const toml::table& tbl) {
  std::stringstream ss;
  ss << toml::json_formatter{tbl};
  return json::parse(ss.str());
}

inline ExperimentConfig parse_config_text(const std::string& text, bool is_json) {
  try {
    if (is_json) return parse_config(json::parse(text));
    return parse_config(toml_to_json(toml::parse(text)));
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("TOML parse error: {}", e.description()));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("JSON parse error: {}", e.what()));
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const bool is_json = std::filesystem::path(path).extension() == ".json";
  return parse_config_text(ss.str(), is_json);
}

// ---------------------------------------------------------------------------
// Scenario execution
// ---------------------------------------------------------------------------

// Regularization giving the target condition number on data whose average
// covariance has extreme eigenvalues mu_d <= L_d.
inline double lambda_for_kappa(double mu_d, double L_d, double kappa) {
  if (!(kappa > 1)) throw ConfigError("target kappa must exceed 1");
  const double lambda = (L_d - kappa * mu_d) / (2.0 * (kappa - 1.0));
  if (lambda < 0)
    throw ConfigError(fmt::format("target kappa {} exceeds the data condition number {}", kappa, L_d / mu_d));
  return lambda;
}

inline std::pair<double, double> data_covariance_extremes(const RidgeData& data) {
  Matrix S = Matrix::Zero(data.d, data.d);
  for (int i = 0; i < data.m; ++i) S += data.A[i].transpose() * data.A[i] / static_cast<double>(data.n);
  return extreme_eigenvalues(S / data.m);
}

inline CompositeProblem build_problem(const ProblemConfig& P, const RidgeData* data, double lambda, std::uint64_t seed) {
  CompositeProblem p;
  if (P.kind == "ridge") {
    p = make_ridge_problem(*data, lambda);
  } else if (P.kind == "example1") {
    p = make_example1_problem(P.a, P.b, P.m, P.d);
  } else if (P.kind == "logistic") {
    p = make_logistic_problem(P.m, P.n, P.d, std::max(P.lambda, 1e-3), seed);
    set_beta(p, estimate_beta(p, 32, seed));
  } else {
    std::ifstream in(P.file);
    if (!in) throw ConfigError("cannot open problem file: " + P.file);
    p = problem_from_json(json::parse(in));
  }
  NonsmoothTerm g;
  if (P.g == "l1") g = NonsmoothTerm::l1(P.g_param);
  else if (P.g == "indicator_ball") g = NonsmoothTerm::indicator_ball(P.g_param);
  else if (P.g != "zero") throw ConfigError("unknown nonsmooth term: " + P.g);
  ConstraintSet K;
  if (P.constraint == "ball") K = ConstraintSet::ball(P.radius);
  else if (P.constraint == "box") K = ConstraintSet::box(Vector::Constant(p.d(), P.lo), Vector::Constant(p.d(), P.hi));
  else if (P.constraint != "all_space") throw ConfigError("unknown constraint set: " + P.constraint);
  if (g.kind != NonsmoothTerm::Kind::zero || K.kind != ConstraintSet::Kind::all_space) {
    const double beta = p.beta;
    const bool lb = p.beta_is_lower_bound;
    p = make_problem(p.losses, g, K);
    p.beta = beta;
    p.beta_is_lower_bound = lb;
  }
  return p;
}

struct SummaryRow {
  double grid_value = 0, kappa_g = 0, beta_over_mu = 0, alpha_used = 0;
  double T_eps_mean = 0, T_eps_std = 0, z_predicted = 0;
  std::string flag = "ok";
  std::vector<long> T_values;  // per replication, -1 when eps was not reached
  std::vector<std::string> trace_files;
  std::vector<std::uint64_t> data_hashes;  // per replication, 0 for generated non-ridge problems
  bool diverged = false;
};

struct SummaryTable {
  std::string label;  // surrogate kind
  std::vector<SummaryRow> rows;

  void write_csv(std::ostream& os) const {
    os << "grid_value,kappa_g,beta_over_mu,alpha_used,T_eps_mean,T_eps_std,z_predicted,flag\n";
    for (const auto& r : rows)
      fmt::print(os, "{},{},{},{},{},{},{},{}\n", r.grid_value, r.kappa_g, r.beta_over_mu, r.alpha_used, r.T_eps_mean,
                 r.T_eps_std, r.z_predicted, r.flag);
  }
};

// Everything one solver run needs, built from a config at one grid point.
struct RunSetup {
  CompositeProblem problem;
  Solution oracle;
  MixingModel model = StarNetwork{};
  SurrogateSpec spec;
  SolverConfig solver;
  RateInputs rate_in;
  double z_predicted = std::numeric_limits<double>::quiet_NaN();
  double alpha_max = 0;
  bool certified = false;
  bool vacuous = false;
};

inline RunSetup prepare_run(const ExperimentConfig& cfg, CompositeProblem problem, SurrogateKind kind,
                            std::uint64_t rep_seed) {
  RunSetup s;
  s.problem = std::move(problem);
  auto& p = s.problem;
  s.oracle = centralized_solution(p);
  s.spec = surrogate_constants(kind, p, cfg.surrogate.tau);
  s.spec.inner_tol = cfg.surrogate.inner_tol;

  const Mode mode = mode_from_string(cfg.solver.mode);
  SolverConfig& sc = s.solver;
  sc.mode = mode;
  sc.seed = rep_seed;
  sc.eps = cfg.solver.eps;
  sc.max_iters = cfg.solver.max_iters;
  sc.random_init = cfg.solver.random_init;
  sc.rounds = cfg.network.rounds;
  sc.chebyshev = cfg.network.chebyshev;

  const auto& N = cfg.network;
  Topology topo;
  if (mode != Mode::star) {
    std::vector<Arc> custom(N.edges.begin(), N.edges.end());
    topo = generate_topology(topology_kind_from_string(N.kind), p.m(), rep_seed, N.p, custom);
  }
  double alpha_max = 1.0;
  if (mode == Mode::undirected) {
    MixingMatrix W = metropolis_weights(topo);
    if (N.auto_rounds) {
      RateInputs base = rate_inputs(p, s.spec, W.rho);
      sc.rounds = chebyshev_round_count(base, kind, N.max_rounds).K;
      sc.chebyshev = true;
    }
    s.rate_in = rate_inputs(p, s.spec, effective_rho(W.rho, sc.rounds, sc.chebyshev));
    const RateReport b = theorem_bounds_undirected(s.rate_in);
    alpha_max = b.alpha_max;
    s.vacuous = b.vacuous;
    s.model = std::move(W);
  } else if (mode == Mode::time_varying) {
    const double c_ell = N.c_ell > 0 ? N.c_ell : 1.0 / p.m();
    TimeVaryingNetwork net = generate_tv_network(tv_kind_from_string(N.tv_kind), topo, N.B, c_ell, rep_seed);
    s.rate_in = rate_inputs_tv(p, s.spec, net.constants());
    const RateReport b = theorem_bounds_tv(s.rate_in);
    alpha_max = b.alpha_max;
    s.vacuous = b.vacuous;
    s.model = std::move(net);
  } else {
    s.rate_in = rate_inputs(p, s.spec, 0.0);
    alpha_max = corollary_complexity(kind, s.rate_in, RateTopology::star, 1.0).alpha_max;
    s.model = StarNetwork{p.m()};
  }
  s.alpha_max = alpha_max;
  sc.alpha = cfg.solver.alpha_rule == "fixed" ? cfg.solver.alpha : cfg.solver.c * alpha_max;
  if (!(sc.alpha > 0)) throw ConfigError("alpha = c * alpha_max vanishes; the certified step-size is zero");

  if (mode == Mode::star) {
    s.z_predicted = star_rate(s.rate_in, sc.alpha);
    s.certified = true;
  } else if (sc.alpha < alpha_max) {
    s.z_predicted = mode == Mode::undirected ? theorem_rate_undirected(s.rate_in, sc.alpha).z
                                             : theorem_rate_tv(s.rate_in, sc.alpha).z;
    s.certified = true;
  }
  return s;
}

inline RunTrace execute(const RunSetup& s) { return run(s.problem, s.oracle, s.model, s.spec, s.solver); }

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline void finish_row(SummaryRow& row, long max_iters) {
  std::vector<double> reached;
  for (long t : row.T_values)
    if (t >= 0) reached.push_back(static_cast<double>(t));
  const auto missing = row.T_values.size() - reached.size();
  if (reached.empty()) {
    row.T_eps_mean = row.T_eps_std = std::numeric_limits<double>::quiet_NaN();
  } else {
    double mean = 0;
    for (double t : reached) mean += t;
    mean /= reached.size();
    double var = 0;
    for (double t : reached) var += (t - mean) * (t - mean);
    row.T_eps_mean = mean;
    row.T_eps_std = reached.size() > 1 ? std::sqrt(var / (reached.size() - 1)) : 0.0;
  }
  if (missing > 0) row.flag = fmt::format("unreached_{}_of_{}_max_iters_{}", missing, row.T_values.size(), max_iters);
  if (row.diverged) row.flag = "diverged";
}

}  // namespace detail

struct ScenarioResult {
  std::vector<SummaryTable> tables;
  std::vector<std::string> files;
};

// Runs every grid point and replication of the configured scenario. With
// write_files, emits one summary CSV per surrogate plus per-run traces.
inline ScenarioResult run_scenario(const ExperimentConfig& cfg, bool write_files = true) {
  cfg.validate();
  namespace fs = std::filesystem;
  const auto grid = cfg.grid();
  std::vector<SurrogateKind> kinds;
  if (cfg.scenario == Scenario::compare_surrogates)
    kinds = {SurrogateKind::linearization, SurrogateKind::local_f};
  else
    kinds = {surrogate_kind_from_string(cfg.surrogate.kind)};

  ScenarioResult result;
  for (auto kind : kinds) result.tables.push_back({to_string(kind), std::vector<SummaryRow>(grid.size())});
  for (auto& t : result.tables)
    for (std::size_t g = 0; g < grid.size(); ++g) t.rows[g].grid_value = grid[g];

  const auto& P = cfg.problem;
  for (int r = 0; r < cfg.replications; ++r) {
    const std::uint64_t rep_seed = cfg.seed + static_cast<std::uint64_t>(r);
    std::optional<RidgeData> shared;
    if (P.kind == "ridge" && cfg.scenario != Scenario::sweep_beta && cfg.scenario != Scenario::compare_surrogates)
      shared = P.data_files.empty() ? make_ridge_data(P.m, P.n, P.d, P.mu0, P.L0, rep_seed) : load_ridge_data(P.data_files);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      std::optional<RidgeData> local;
      const RidgeData* data = shared ? &*shared : nullptr;
      double lambda = P.lambda;
      if (cfg.scenario == Scenario::sweep_beta || cfg.scenario == Scenario::compare_surrogates) {
        local = make_ridge_data(P.m, static_cast<int>(grid[g]), P.d, P.mu0, P.L0, rep_seed);
        data = &*local;
      } else if (cfg.scenario == Scenario::sweep_kappa) {
        if (!P.kappa_grid.empty()) {
          auto [mu_d, L_d] = data_covariance_extremes(*data);
          lambda = lambda_for_kappa(mu_d, L_d, grid[g]);
        } else {
          lambda = grid[g];
        }
      }
      const CompositeProblem problem = build_problem(P, data, lambda, rep_seed);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        RunSetup setup = prepare_run(cfg, problem, kinds[k], rep_seed);
        RunTrace trace = execute(setup);
        SummaryRow& row = result.tables[k].rows[g];
        row.kappa_g = setup.problem.kappa_g();
        row.beta_over_mu = setup.problem.beta / setup.problem.mu;
        row.alpha_used = setup.solver.alpha;
        row.z_predicted = setup.z_predicted;
        row.T_values.push_back(trace.T_eps ? *trace.T_eps : -1);
        row.data_hashes.push_back(data ? dataset_hash(*data) : 0);
        if (!setup.certified) row.flag = "uncertified_alpha";
        if (setup.vacuous) row.flag = "vacuous_certification";
        if (setup.problem.beta_is_lower_bound) row.flag = "beta_lower_bound";
        if (trace.diverged) row.diverged = true;
        if (write_files && cfg.write_traces) {
          const auto name = fmt::format("{}_{}_g{}_r{}.csv", to_string(cfg.scenario), to_string(kinds[k]), g, r);
          const fs::path path = fs::path(cfg.out_dir) / "traces" / name;
          std::ostringstream os;
          trace.write_csv(os);
          detail::write_atomic(path, os.str());
          row.trace_files.push_back(path.string());
          result.files.push_back(path.string());
        }
      }
    }
  }
  for (auto& t : result.tables) {
    for (auto& row : t.rows) detail::finish_row(row, cfg.solver.max_iters);
    if (write_files) {
      const fs::path path = fs::path(cfg.out_dir) / fmt::format("summary_{}_{}.csv", to_string(cfg.scenario), t.label);
      std::ostringstream os;
      t.write_csv(os);
      detail::write_atomic(path, os.str());
      result.files.push_back(path.string());
    }
  }
  return result;
}

// Least-squares slope of log y against log x.
inline double fit_scaling_exponent(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3) throw DomainError("fit_scaling_exponent needs >= 3 paired values");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0) || !(y[k] > 0)) throw DomainError("fit_scaling_exponent needs positive values");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double column_value(const SummaryRow& r, const std::string& column) {
  if (column == "grid_value") return r.grid_value;
  if (column == "kappa_g") return r.kappa_g;
  if (column == "beta_over_mu") return r.beta_over_mu;
  if (column == "alpha_used") return r.alpha_used;
  if (column == "T_eps_mean") return r.T_eps_mean;
  if (column == "T_eps_std") return r.T_eps_std;
  if (column == "z_predicted") return r.z_predicted;
  throw ConfigError("unknown summary column: " + column);
}

inline double fit_scaling_exponent(const SummaryTable& table, const std::string& x_column, const std::string& y_column) {
  std::vector<double> x, y;
  for (const auto& r : table.rows) {
    x.push_back(column_value(r, x_column));
    y.push_back(column_value(r, y_column));
  }
  return fit_scaling_exponent(x, y);
}

}  // namespace sonata
