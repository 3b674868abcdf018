#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "sonata/harness.hpp"

namespace sonata {

namespace detail {

struct RateArgs {
  double mu = 1.0, L = 1.0, beta = 0.0, rho = 0.0, alpha = 1.0, c = 0.9;
  std::string surrogate = "linearization";
  std::string topology;  // empty: star when rho == 0, general otherwise
  int m = 0, B = 1;
  double c_ell = 0.0;
  std::string problem_file, weights_file;
  bool json = false;
};

// Aligned "key = value" lines.
class Report {
 public:
  void add(std::string key, double v) { rows_.emplace_back(std::move(key), fmt::format("{}", v)); }
  void add(std::string key, std::string v) { rows_.emplace_back(std::move(key), std::move(v)); }
  void print(std::ostream& os) const {
    std::size_t w = 0;
    for (const auto& [k, v] : rows_) w = std::max(w, k.size());
    for (const auto& [k, v] : rows_) fmt::print(os, "{:<{}} = {}\n", k, w, v);
  }
  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : rows_) {
      char* end = nullptr;
      const double d = std::strtod(v.c_str(), &end);
      if (end && *end == '\0' && !v.empty())
        j[k] = std::isfinite(d) ? json(d) : json(v);
      else
        j[k] = v;
    }
    return j;
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

inline int rate_command(const RateArgs& a, std::ostream& out) {
  const SurrogateKind kind = surrogate_kind_from_string(a.surrogate);
  RateInputs in;
  std::string topo_name = a.topology;
  if (!a.problem_file.empty()) {
    std::ifstream f(a.problem_file);
    if (!f) throw ConfigError("cannot open problem file: " + a.problem_file);
    const CompositeProblem p = problem_from_json(json::parse(f));
    double rho = a.rho;
    if (!a.weights_file.empty()) {
      std::ifstream w(a.weights_file);
      if (!w) throw ConfigError("cannot open weights file: " + a.weights_file);
      rho = mixing_matrix_from_json(json::parse(w)).rho;
    }
    in = rate_inputs(p, surrogate_constants(kind, p), rho);
  } else {
    in = rate_inputs_from_constants(kind, a.mu, a.L, a.beta, a.rho);
  }
  if (topo_name.empty()) topo_name = in.rho == 0 && a.m == 0 ? "star" : (a.m > 0 ? "time_varying" : "general");

  Report r;
  r.add("surrogate", to_string(kind));
  r.add("topology", topo_name);
  r.add("mu", in.mu);
  r.add("L", in.L);
  r.add("beta", in.beta);
  r.add("kappa_g", in.kappa_g());
  if (topo_name == "star") {
    const RateReport c = corollary_complexity(kind, in, RateTopology::star, a.alpha);
    r.add("alpha", a.alpha);
    r.add("z", c.z_corollary);
    r.add("z_certified", c.z);
    r.add("alpha_max", c.alpha_max);
    r.add("J", c.J);
    r.add("iteration_complexity", c.iteration_complexity);
  } else if (topo_name == "general") {
    r.add("rho", in.rho);
    const RateReport b = theorem_bounds_undirected(in);
    r.add("alpha_max", b.alpha_max);
    r.add("alpha_star", b.alpha_star);
    r.add("J", b.J);
    r.add("A_half", b.A_half);
    r.add("C1", b.C1);
    r.add("C2", b.C2);
    r.add("G_P_star", b.G_P_star);
    r.add("alpha", a.alpha);
    if (a.alpha < b.alpha_max) {
      const RateReport t = theorem_rate_undirected(in, a.alpha);
      r.add("sigma_alpha", t.sigma_alpha);
      r.add("eta_alpha", t.eta_alpha);
      r.add("z_certified", t.z);
    } else {
      r.add("z_certified", "uncertified_alpha");
    }
    const RateReport c = corollary_complexity(kind, in, RateTopology::general, a.c);
    r.add("c", a.c);
    r.add("alpha_max_corollary", c.alpha_max);
    r.add("z_corollary", c.z_corollary);
    r.add("M", c.M);
    r.add("network_ratio", c.network_ratio);
    r.add("case_I_threshold", c.case_I_threshold);
    r.add("regime", to_string(c.regime));
    r.add("iteration_complexity", c.iteration_complexity);
    r.add("communication_complexity", c.communication_complexity);
    const ChebyshevRounds k = chebyshev_round_count(in, kind);
    r.add("chebyshev_rounds", static_cast<double>(k.K));
    r.add("chebyshev_rho", k.rho_eff);
    r.add("vacuous", c.vacuous || b.vacuous ? "true" : "false");
  } else if (topo_name == "time_varying") {
    if (a.m < 2) throw ConfigError("time-varying rates need --m >= 2");
    const double c_ell = a.c_ell > 0 ? a.c_ell : 1.0 / a.m;
    in.set_tv(a.m, tv_constants(a.m, a.B, c_ell));
    r.add("m", static_cast<double>(a.m));
    r.add("B", static_cast<double>(a.B));
    r.add("rho_B", in.rho_B);
    r.add("c0", in.c0);
    r.add("phi_lb", in.phi_lb);
    r.add("phi_ub", in.phi_ub);
    const RateReport b = theorem_bounds_tv(in);
    r.add("alpha_max", b.alpha_max);
    r.add("alpha_star", b.alpha_star);
    r.add("J", b.J);
    r.add("alpha", a.alpha);
    if (a.alpha < b.alpha_max)
      r.add("z_certified", theorem_rate_tv(in, a.alpha).z);
    else
      r.add("z_certified", "uncertified_alpha");
    const RateReport c = corollary_complexity(kind, in, RateTopology::time_varying, a.c);
    r.add("c", a.c);
    r.add("alpha_max_corollary", c.alpha_max);
    r.add("z_corollary", c.z_corollary);
    r.add("M", c.M);
    r.add("regime", to_string(c.regime));
    r.add("iteration_complexity", c.iteration_complexity);
    r.add("vacuous", c.vacuous || b.vacuous ? "true" : "false");
  } else {
    throw ConfigError("unknown rate topology: " + topo_name);
  }
  if (a.json)
    out << r.to_json().dump(2) << "\n";
  else
    r.print(out);
  return 0;
}

inline void print_result(const ScenarioResult& res, std::ostream& out) {
  for (const auto& t : res.tables) {
    fmt::print(out, "surrogate {}\n", t.label);
    t.write_csv(out);
  }
  for (const auto& f : res.files)
    if (f.find("summary_") != std::string::npos) fmt::print(out, "wrote {}\n", f);
}

}  // namespace detail

// Command-line entry point. Exit codes: 0 success, 1 runtime failure,
// 2 configuration or usage error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed gradient-tracking optimization experiments and rate certificates", "sonata"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string out_dir, config_path;
  app.add_option("--seed", seed, "Override the base seed")->configurable(false);
  app.add_option("--out-dir", out_dir, "Override the output directory");
  app.add_option("--config", config_path, "Experiment config (TOML, or JSON by extension)");
  app.fallthrough();

  auto* run_cmd = app.add_subcommand("run", "Run a single configured experiment");
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a configured kappa or beta sweep");
  auto* compare_cmd = app.add_subcommand("compare", "Compare linearization and local_f surrogates");
  auto* validate_cmd = app.add_subcommand("validate-config", "Parse and validate a config file");
  auto* rate_cmd = app.add_subcommand("rate", "Print certified and corollary rates");

  detail::RateArgs ra;
  rate_cmd->add_option("--mu", ra.mu, "Strong convexity of F");
  rate_cmd->add_option("--L", ra.L, "Smoothness of F");
  rate_cmd->add_option("--beta", ra.beta, "Similarity bound");
  rate_cmd->add_option("--rho", ra.rho, "Mixing contraction");
  rate_cmd->add_option("--surrogate", ra.surrogate, "linearization | local_f");
  rate_cmd->add_option("--alpha", ra.alpha, "Step-size");
  rate_cmd->add_option("--c", ra.c, "Fraction of alpha_max for corollary rates");
  rate_cmd->add_option("--topology", ra.topology, "star | general | time_varying");
  rate_cmd->add_option("--m", ra.m, "Agents (time-varying)");
  rate_cmd->add_option("--B", ra.B, "Joint connectivity window (time-varying)");
  rate_cmd->add_option("--c-ell", ra.c_ell, "Minimum nonzero weight (time-varying)");
  rate_cmd->add_option("--problem", ra.problem_file, "Quadratic problem JSON");
  rate_cmd->add_option("--weights", ra.weights_file, "Mixing matrix JSON");
  rate_cmd->add_flag("--json", ra.json, "Emit JSON instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*rate_cmd) return detail::rate_command(ra, out);
    if (config_path.empty()) throw ConfigError("--config is required");
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (*validate_cmd) {
      fmt::print(out, "ok: scenario {} with {} grid point(s)\n", to_string(cfg.scenario), cfg.grid().size());
      return 0;
    }
    if (*compare_cmd) cfg.scenario = Scenario::compare_surrogates;
    if (*sweep_cmd && cfg.scenario != Scenario::sweep_kappa && cfg.scenario != Scenario::sweep_beta)
      throw ConfigError("sweep needs scenario sweep_kappa or sweep_beta");
    if (*run_cmd && cfg.scenario != Scenario::single_run && cfg.scenario != Scenario::tv_run)
      throw ConfigError("run needs scenario single_run or tv_run");
    cfg.validate();
    detail::print_result(run_scenario(cfg), out);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sonata
