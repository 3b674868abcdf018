// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "sonata/harness.hpp"
#include "sonata/network.hpp"
#include "sonata/problem.hpp"
#include "sonata/rates.hpp"
#include "sonata/solver.hpp"
#include "sonata/surrogate.hpp"

using namespace sonata;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget_s > 0 && secs >= budget_s) {
    o.pass = false;
    o.detail += fmt::format("; runtime over budget {} s", budget_s);
  }
  if (!o.pass) ++failures;
  fmt::print("{} criterion {}: {} ({}) [{:.2f} s]\n", o.pass ? "PASS" : "FAIL", id, title, o.detail, secs);
  std::fflush(stdout);
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

// ---------------------------------------------------------------------------

Outcome tracking_conservation() {
  const auto p = make_ridge_problem(10, 50, 20, 0.1, 1.0, 100.0, 101);
  const auto W = metropolis_weights(generate_topology(TopologyKind::erdos_renyi, 10, 101, 0.5));
  double worst = 0;
  for (auto kind : {SurrogateKind::linearization, SurrogateKind::local_f}) {
    const SubproblemSolver sol(p, surrogate_constants(kind, p));
    SolverConfig cfg;
    cfg.random_init = true;
    cfg.seed = 101;
    auto s = initial_state(p, cfg);
    const double scale = s.G.colwise().mean().norm();
    for (int k = 0; k < 200; ++k) {
      sonata_undirected_step(s, p, sol, W, 0.5);
      worst = std::max(worst, (s.Y.colwise().mean() - s.G.colwise().mean()).norm() / scale);
    }
  }
  return {worst <= 1e-10, fmt::format("max relative ||ybar - mean grad|| = {:.3e}", worst)};
}

Outcome tv_conservation() {
  const auto p = make_ridge_problem(5, 40, 6, 0.1, 1.0, 20.0, 202);
  const auto base = generate_topology(TopologyKind::cycle, 5, 0);
  const auto net = generate_tv_network(TvKind::alternating_subgraphs, base, 2, 0.2, 202);
  const auto& k = net.constants();
  double worst = 0, phi_lo = kInf, phi_hi = 0;
  bool in_bounds = true;
  for (auto kind : {SurrogateKind::linearization, SurrogateKind::local_f}) {
    const SubproblemSolver sol(p, surrogate_constants(kind, p));
    SolverConfig cfg;
    cfg.random_init = true;
    cfg.seed = 202;
    auto s = initial_state(p, cfg);
    const double scale = s.G.colwise().sum().norm();
    for (long it = 0; it < 500; ++it) {
      sonata_tv_step(s, p, sol, tv_frames(net, it, 1), 0.2);
      const Vector gap = (s.phi.asDiagonal() * s.Y).colwise().sum() - s.G.colwise().sum();
      worst = std::max(worst, gap.norm() / scale);
      phi_lo = std::min(phi_lo, s.phi.minCoeff());
      phi_hi = std::max(phi_hi, s.phi.maxCoeff());
      if (s.phi.minCoeff() < k.phi_lb || s.phi.maxCoeff() > k.phi_ub) in_bounds = false;
    }
  }
  return {worst <= 1e-10 && in_bounds,
          fmt::format("max relative weighted tracking error {:.3e}; phi in [{:.4f}, {:.4f}] within [{:.3e}, {:.4f}]", worst,
                      phi_lo, phi_hi, k.phi_lb, k.phi_ub)};
}

Outcome star_is_gradient_descent() {
  const auto p = make_ridge_problem(8, 40, 10, 0.05, 1.0, 50.0, 303);
  const SubproblemSolver sol(p, surrogate_constants(SurrogateKind::linearization, p));
  Vector x = Vector::Zero(p.d()), ref = x;
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    x = sonata_star_step(x, p, sol, 1.0).x;
    ref = ref - p.grad_F(ref) / p.L;
    worst = std::max(worst, (x - ref).norm() / (1 + ref.norm()));
  }
  return {worst <= 1e-12, fmt::format("max relative deviation from x - grad F(x)/L: {:.3e}", worst)};
}

Outcome oracle_consensus() {
  const auto p = make_ridge_problem(10, 50, 5, 0.1, 1.0, 10.0, 404);
  const Vector x_star = p.average->H.ldlt().solve(p.average->g);
  const Solution oracle{x_star, p.U(x_star), 0};
  const auto base = generate_topology(TopologyKind::erdos_renyi, 10, 404, 0.5);
  struct Variant {
    std::string name;
    MixingModel model;
    double alpha;
  };
  // the certified time-varying step is vacuous; a practical step is used there
  const std::vector<Variant> variants{
      {"undirected", metropolis_weights(base), 1.0},
      {"star", StarNetwork{10}, 1.0},
      {"time_varying", generate_tv_network(TvKind::alternating_subgraphs, base, 2, 0.1, 404), 0.5}};
  std::string detail;
  bool ok = true;
  for (const auto& v : variants) {
    for (auto kind : {SurrogateKind::linearization, SurrogateKind::local_f}) {
      SolverConfig cfg;
      cfg.alpha = v.alpha;
      cfg.random_init = true;
      cfg.seed = 404;
      cfg.stop_at_eps = false;
      cfg.max_iters = 3000;
      const auto t = run(p, oracle, v.model, surrogate_constants(kind, p), cfg);
      const double dist = t.records.back().max_dist_to_opt;
      ok = ok && dist < 1e-6;
      detail += fmt::format("{}{}/{} {:.1e}", detail.empty() ? "" : ", ", v.name, to_string(kind), dist);
    }
  }
  return {ok, "max_i ||x_i - x*||: " + detail};
}

struct RateCase {
  CompositeProblem p;
  MixingMatrix W;
  SurrogateKind kind;
  RateInputs in;
  double alpha, z;
};

std::vector<RateCase> rate_cases() {
  std::vector<RateCase> out;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = make_ridge_problem(6, 40, 5, 0.2, 1.0, 10.0, 500 + seed);
    const auto W = metropolis_weights(generate_topology(TopologyKind::erdos_renyi, 6, 500 + seed, 0.6));
    for (auto kind : {SurrogateKind::linearization, SurrogateKind::local_f}) {
      const auto in = rate_inputs(p, surrogate_constants(kind, p), W.rho);
      const double alpha = 0.9 * theorem_bounds_undirected(in).alpha_max;
      out.push_back({p, W, kind, in, alpha, theorem_rate_undirected(in, alpha).z});
    }
  }
  return out;
}

Outcome certified_rate_soundness(const std::vector<RateCase>& cases) {
  int good = 0;
  double worst_margin = -kInf;
  for (const auto& c : cases) {
    SolverConfig cfg;
    cfg.alpha = c.alpha;
    cfg.random_init = true;
    cfg.stop_at_eps = false;
    cfg.max_iters = 4000;
    const auto t = run(c.p, centralized_solution(c.p), c.W, surrogate_constants(c.kind, c.p), cfg);
    const double floor = 1e-12 * t.records.front().p;
    std::size_t end = t.records.size();
    for (std::size_t k = 0; k < t.records.size(); ++k)
      if (t.records[k].p <= floor) {
        end = k;
        break;
      }
    const double slope = fit_log_slope(t, end / 2, end);
    const double margin = slope - (std::log(c.z) + 0.05);
    worst_margin = std::max(worst_margin, margin);
    if (margin <= 0) ++good;
  }
  return {good == static_cast<int>(cases.size()),
          fmt::format("{}/{} combinations with tail slope <= log z + 0.05; worst margin {:.3e}", good, cases.size(),
                      worst_margin)};
}

std::string run_cli(const std::string& args) {
  const std::string cmd = std::string(SONATA_CLI_PATH) + " " + args;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw std::runtime_error("cannot run " + cmd);
  std::string out;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  return out;
}

double cli_z(const std::string& out) {
  std::istringstream lines(out);
  std::string line;
  while (std::getline(lines, line))
    if (line.rfind("z ", 0) == 0) return std::stod(line.substr(line.find('=') + 1));
  throw std::runtime_error("no z line in output: " + out);
}

Outcome star_closed_forms() {
  double worst = 0;
  int n = 0;
  for (double L : {10.0, 37.5, 1000.0}) {
    const double z = cli_z(run_cli(fmt::format("rate --mu 1 --L {} --rho 0 --surrogate linearization --alpha 1", L)));
    worst = std::max(worst, std::abs(z - (1 - 1 / L)));
    ++n;
  }
  for (double b : {0.25, 0.5, 1.0, 3.0}) {
    const double z =
        cli_z(run_cli(fmt::format("rate --mu 2 --L 40 --beta {} --rho 0 --surrogate local_f --alpha 1", 2 * b)));
    worst = std::max(worst, std::abs(z - (1 - 1 / (1 + 4 * b * std::min(1.0, b)))));
    ++n;
  }
  return {worst <= 1e-12, fmt::format("{} CLI cases, max |z - closed form| = {:.2e}", n, worst)};
}

Outcome scaling_kappa() {
  auto cfg = load_config(std::string(SONATA_SOURCE_DIR) + "/configs/s1.toml");
  const auto lin = run_scenario(cfg, false).tables.at(0);
  cfg.surrogate.kind = "local_f";
  const auto loc = run_scenario(cfg, false).tables.at(0);
  const double slope = fit_scaling_exponent(lin, "kappa_g", "T_eps_mean");
  std::vector<double> tf, ratios;
  std::string ts;
  for (std::size_t g = 0; g < loc.rows.size(); ++g) {
    ratios.push_back(loc.rows[g].beta_over_mu);
    if (loc.rows[g].beta_over_mu < 1) tf.push_back(loc.rows[g].T_eps_mean);
    ts += fmt::format("{}{}/{}", ts.empty() ? "" : ", ", lin.rows[g].T_eps_mean, loc.rows[g].T_eps_mean);
  }
  const bool slope_ok = slope >= 0.7 && slope <= 1.3;
  bool flat_ok = false;
  std::string flat;
  if (tf.size() < 2) {
    flat = fmt::format("no grid point has beta < mu (beta/mu in [{:.2f}, {:.2f}] at n = {})", min_of(ratios),
                       max_of(ratios), cfg.problem.n);
  } else {
    flat_ok = max_of(tf) < 2 * min_of(tf);
    flat = fmt::format("local_f T spread {:.2f}x over beta < mu points", max_of(tf) / min_of(tf));
  }
  return {slope_ok && flat_ok, fmt::format("linearization slope {:.3f}; {}; T lin/local per kappa: {}", slope, flat, ts)};
}

Outcome scaling_beta() {
  const std::vector<int> ns{10, 40, 160};
  const int seeds = 20;
  std::vector<double> mean_f(ns.size()), mean_l(ns.size()), mean_b(ns.size());
  int crossovers = 0;
  for (int s = 0; s < seeds; ++s) {
    std::vector<double> tf(ns.size()), tl(ns.size());
    for (std::size_t g = 0; g < ns.size(); ++g) {
      const auto p = make_ridge_problem(30, ns[g], 5, 0.0, 1.0, 100.0, 800 + s);
      const auto W = metropolis_weights(generate_topology(TopologyKind::erdos_renyi, 30, 800 + s, 0.9));
      const auto opt = centralized_solution(p);
      SolverConfig cfg;
      cfg.max_iters = 100000;
      auto T = [&](SurrogateKind k) {
        const auto t = run(p, opt, W, surrogate_constants(k, p), cfg);
        return t.reached() ? static_cast<double>(*t.T_eps) : kInf;
      };
      tl[g] = T(SurrogateKind::linearization);
      tf[g] = T(SurrogateKind::local_f);
      mean_l[g] += tl[g] / seeds;
      mean_f[g] += tf[g] / seeds;
      mean_b[g] += p.beta / p.mu / seeds;
    }
    if (tf.back() < tl.back() && tl.front() < tf.front()) ++crossovers;
  }
  const bool f_monotone = mean_f[0] > mean_f[1] && mean_f[1] > mean_f[2];
  const bool l_flat = max_of(mean_l) < 2 * min_of(mean_l);
  const bool cross = crossovers >= (8 * seeds + 9) / 10;
  return {f_monotone && l_flat && cross,
          fmt::format("mean beta/mu {:.2f}/{:.2f}/{:.2f}; mean T local_f {:.1f}/{:.1f}/{:.1f}; mean T lin "
                      "{:.1f}/{:.1f}/{:.1f} (spread {:.2f}x); crossover on {}/{} seeds",
                      mean_b[0], mean_b[1], mean_b[2], mean_f[0], mean_f[1], mean_f[2], mean_l[0], mean_l[1], mean_l[2],
                      max_of(mean_l) / min_of(mean_l), crossovers, seeds)};
}

Outcome small_gain_consistency(const std::vector<RateCase>& cases) {
  int good = 0;
  double worst_p = 0, worst_ratio = 0;
  for (const auto& c : cases) {
    const double P = stability_polynomial(c.in, c.alpha, c.z, EpsPolicy::rate_matched);
    const double amax = theorem_bounds_undirected(c.in).alpha_max;
    const double sup = feasible_alpha_sup(c.in, EpsPolicy::rate_matched);
    worst_p = std::max(worst_p, P);
    worst_ratio = std::max(worst_ratio, amax / sup);
    if (P < 1 && amax <= sup) ++good;
  }
  return {good == static_cast<int>(cases.size()),
          fmt::format("{}/{} instances; max P(alpha, z) = {:.4f}; max alpha_max / grid sup = {:.3e}", good, cases.size(),
                      worst_p, worst_ratio)};
}

Outcome chebyshev_rounds() {
  const auto p = make_ridge_problem(10, 100, 10, 0.5, 1.0, 100.0, 1001);
  const auto opt = centralized_solution(p);
  const auto spec = surrogate_constants(SurrogateKind::linearization, p);
  const auto path = metropolis_weights(generate_topology(TopologyKind::path, 10, 0));
  const auto rounds = chebyshev_round_count(rate_inputs(p, spec, path.rho), SurrogateKind::linearization);
  const auto eff = rate_inputs(p, spec, rounds.rho_eff);
  const auto regime = corollary_complexity(SurrogateKind::linearization, eff, RateTopology::general, 0.5).regime;
  SolverConfig cfg;
  cfg.max_iters = 100000;
  cfg.rounds = rounds.K;
  cfg.chebyshev = true;
  const auto tp = run(p, opt, path, spec, cfg);
  cfg.rounds = 1;
  cfg.chebyshev = false;
  const auto tc = run(p, opt, metropolis_weights(generate_topology(TopologyKind::complete, 10, 0)), spec, cfg);
  if (!tp.reached() || !tc.reached()) return {false, "a run did not reach eps"};
  const double ratio = static_cast<double>(*tp.T_eps) / static_cast<double>(*tc.T_eps);
  return {regime == Regime::case_I && !rounds.capped && ratio <= 1.5,
          fmt::format("rho {:.4f}, K = {}, rho_eff {:.2e}, regime {}; T path {} vs complete {} (ratio {:.3f})", path.rho,
                      rounds.K, rounds.rho_eff, to_string(regime), *tp.T_eps, *tc.T_eps, ratio)};
}

}  // namespace

int main() {
  report(1, "tracking conservation", 5, tracking_conservation);
  report(2, "push-sum conservation and phi bounds", 5, tv_conservation);
  report(3, "star linearization equals gradient descent", 0, star_is_gradient_descent);
  report(4, "consensus on the centralized optimum", 30, oracle_consensus);
  const auto cases = rate_cases();
  report(5, "certified rate soundness", 0, [&] { return certified_rate_soundness(cases); });
  report(6, "star closed forms from the rate CLI", 0, star_closed_forms);
  report(7, "kappa scaling", 180, scaling_kappa);
  report(8, "beta scaling and surrogate crossover", 300, scaling_beta);
  report(9, "small-gain certification consistency", 0, [&] { return small_gain_consistency(cases); });
  report(10, "Chebyshev rounds on a path", 120, chebyshev_rounds);
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
