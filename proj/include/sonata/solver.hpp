#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "sonata/errors.hpp"
#include "sonata/network.hpp"
#include "sonata/problem.hpp"
#include "sonata/rng.hpp"
#include "sonata/surrogate.hpp"

namespace sonata {

enum class Mode { undirected, star, time_varying };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::undirected: return "undirected";
    case Mode::star: return "star";
    case Mode::time_varying: return "time_varying";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "undirected") return Mode::undirected;
  if (s == "star") return Mode::star;
  if (s == "time_varying" || s == "tv") return Mode::time_varying;
  throw ConfigError("unknown solver mode: " + s);
}

struct SolverConfig {
  double alpha = 1.0;
  long max_iters = 100000;
  int rounds = 1;  // communication rounds per iteration
  bool chebyshev = false;
  std::uint64_t seed = 0;
  Mode mode = Mode::undirected;
  double eps = 1e-7;
  bool stop_at_eps = true;
  bool random_init = false;
  double init_scale = 1.0;

  void validate() const {
    if (!(alpha > 0 && alpha <= 1)) throw ConfigError("alpha must lie in (0, 1]");
    if (rounds < 1) throw ConfigError("rounds per iteration must be >= 1");
    if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
    if (!(eps >= 0)) throw ConfigError("eps must be nonnegative");
  }
};

struct AgentState {
  Vector x, y, grad;
  double phi = 1.0;
};

// Stacked iterate; row i belongs to agent i.
struct NetworkState {
  Matrix X, Y, G;
  Vector phi;

  int m() const { return static_cast<int>(X.rows()); }
  AgentState agent(int i) const { return {X.row(i).transpose(), Y.row(i).transpose(), G.row(i).transpose(), phi(i)}; }
};

inline Matrix local_gradients(const CompositeProblem& p, const Matrix& X) {
  Matrix G(X.rows(), X.cols());
  for (int i = 0; i < X.rows(); ++i) G.row(i) = p.losses[i]->gradient(X.row(i).transpose()).transpose();
  return G;
}

// x_i^0 = P_K(0) (or a seeded Gaussian draw projected onto K), y_i^0 = grad f_i(x_i^0), phi_i^0 = 1.
inline NetworkState initial_state(const CompositeProblem& p, const SolverConfig& cfg) {
  const int m = p.m(), d = p.d();
  NetworkState s;
  s.X.resize(m, d);
  for (int i = 0; i < m; ++i) {
    Vector x = Vector::Zero(d);
    if (cfg.random_init) {
      auto rng = make_rng(cfg.seed, Stream::algorithm, static_cast<std::uint64_t>(i));
      std::normal_distribution<double> normal(0.0, cfg.init_scale);
      for (int j = 0; j < d; ++j) x(j) = normal(rng);
    }
    s.X.row(i) = p.K.project(x).transpose();
  }
  s.G = local_gradients(p, s.X);
  s.Y = s.G;
  s.phi = Vector::Ones(m);
  return s;
}

inline Matrix local_directions(const NetworkState& s, const SubproblemSolver& sol) {
  Matrix D(s.X.rows(), s.X.cols());
  for (int i = 0; i < s.m(); ++i) {
    auto r = sol.solve(i, s.X.row(i).transpose(), s.Y.row(i).transpose(), s.G.row(i).transpose());
    D.row(i) = r.dx.transpose();
  }
  return D;
}

// One iteration over a static undirected graph: local step, consensus on x,
// then tracking on y. Returns ||Delta x|| (Frobenius over agents).
inline double sonata_undirected_step(NetworkState& s, const CompositeProblem& p, const SubproblemSolver& sol,
                                     const MixingMatrix& W, double alpha, int rounds = 1, bool chebyshev = false) {
  const Matrix D = local_directions(s, sol);
  const Matrix Xh = s.X + alpha * D;
  Matrix Xn = mix_rounds(W, Xh, rounds, chebyshev);
  Matrix Gn = local_gradients(p, Xn);
  s.Y = mix_rounds(W, s.Y + Gn - s.G, rounds, chebyshev);
  s.X = std::move(Xn);
  s.G = std::move(Gn);
  return D.norm();
}

struct StarStep {
  Vector x;
  double dx_norm = 0.0;  // norm of the averaged direction
};

// Master/worker iteration: workers linearize around the shared x with the exact
// global gradient, the master averages their solutions.
inline StarStep sonata_star_step(const Vector& x, const CompositeProblem& p, const SubproblemSolver& sol,
                                 double alpha) {
  const int m = p.m();
  std::vector<Vector> grads(m);
  Vector gF = Vector::Zero(x.size());
  for (int i = 0; i < m; ++i) {
    grads[i] = p.losses[i]->gradient(x);
    gF += grads[i];
  }
  gF /= m;
  Vector avg = Vector::Zero(x.size());
  for (int i = 0; i < m; ++i) avg += sol.solve(i, x, gF, grads[i]).x_hat;
  avg /= m;
  Vector dir = avg - x;
  return {x + alpha * dir, dir.norm()};
}

// One push-sum iteration through the given frames (one frame per round).
inline double sonata_tv_step(NetworkState& s, const CompositeProblem& p, const SubproblemSolver& sol,
                             const std::vector<Matrix>& frames, double alpha) {
  if (frames.empty()) throw ConfigError("sonata_tv_step needs at least one frame");
  const Matrix D = local_directions(s, sol);
  const Matrix Xh = s.X + alpha * D;
  Vector psi = s.phi;
  Matrix Z = s.phi.asDiagonal() * Xh;
  for (const auto& C : frames) {
    psi = C * psi;
    Z = C * Z;
  }
  if ((psi.array() <= 0).any()) throw std::logic_error("push-sum weight became nonpositive");
  const Vector inv = psi.cwiseInverse();
  Matrix Xn = inv.asDiagonal() * Z;
  Matrix Gn = local_gradients(p, Xn);
  Matrix S = s.phi.asDiagonal() * s.Y + Gn - s.G;
  for (const auto& C : frames) S = C * S;
  s.Y = inv.asDiagonal() * S;
  s.X = std::move(Xn);
  s.G = std::move(Gn);
  s.phi = std::move(psi);
  return D.norm();
}

inline double sonata_tv_step(NetworkState& s, const CompositeProblem& p, const SubproblemSolver& sol,
                             const Matrix& C, double alpha) {
  return sonata_tv_step(s, p, sol, std::vector<Matrix>{C}, alpha);
}

// ---------------------------------------------------------------------------
// Metrics and driver
// ---------------------------------------------------------------------------

struct TraceRecord {
  long iter = 0;
  double p = 0;  // sum_i phi_i (U(x_i) - U*), phi = 1 off the push-sum mode
  double x_perp = 0, y_perp = 0, delta = 0, dx = 0;
  double obj_mean = 0;
  double gap_mean = 0;            // (1/m) sum_i (U(x_i) - U*)
  double tracking_residual = 0;   // ||(1/m) sum phi_i y_i - (1/m) sum grad f_i(x_i)||
  double mean_grad_norm = 0;
  double phi_min = 1, phi_max = 1;
  double max_dist_to_opt = 0;     // max_i ||x_i - x*||
};

struct RunTrace {
  std::vector<TraceRecord> records;
  std::optional<long> T_eps;  // empty when eps was not reached
  bool diverged = false;      // stopped on a non-finite iterate
  double eps = 1e-7;
  NetworkState final_state;

  bool reached() const { return T_eps.has_value(); }
  void write_csv(std::ostream& os) const {
    os << "iter,p,x_perp,y_perp,delta,dx,obj_mean\n";
    for (const auto& r : records)
      fmt::print(os, "{},{},{},{},{},{},{}\n", r.iter, r.p, r.x_perp, r.y_perp, r.delta, r.dx, r.obj_mean);
  }
};

inline TraceRecord measure(const NetworkState& s, const CompositeProblem& p, const Solution& oracle) {
  const int m = s.m();
  TraceRecord r;
  const Vector xbar = (s.phi.asDiagonal() * s.X).colwise().sum().transpose() / m;
  const Vector ybar = (s.phi.asDiagonal() * s.Y).colwise().sum().transpose() / m;
  const Vector gbar = s.G.colwise().sum().transpose() / m;
  double p_sum = 0, gap_sum = 0, obj = 0, delta2 = 0, xp2 = 0, yp2 = 0, dist = 0;
  for (int i = 0; i < m; ++i) {
    const Vector xi = s.X.row(i).transpose();
    const double gap = optimality_gap(p, oracle, xi);
    p_sum += s.phi(i) * gap;
    gap_sum += gap;
    obj += p.U(xi);
    delta2 += (p.grad_F(xi) - s.Y.row(i).transpose()).squaredNorm();
    xp2 += (xi - xbar).squaredNorm();
    yp2 += (s.Y.row(i).transpose() - ybar).squaredNorm();
    dist = std::max(dist, (xi - oracle.x_star).norm());
  }
  r.p = p_sum;
  r.gap_mean = gap_sum / m;
  r.obj_mean = obj / m;
  r.delta = std::sqrt(delta2);
  r.x_perp = std::sqrt(xp2);
  r.y_perp = std::sqrt(yp2);
  r.tracking_residual = (ybar - gbar).norm();
  r.mean_grad_norm = gbar.norm();
  r.phi_min = s.phi.minCoeff();
  r.phi_max = s.phi.maxCoeff();
  r.max_dist_to_opt = dist;
  return r;
}

struct StarNetwork {
  int m = 0;
};

using MixingModel = std::variant<MixingMatrix, TimeVaryingNetwork, StarNetwork>;

inline std::vector<Matrix> tv_frames(const TimeVaryingNetwork& net, long iter, int rounds) {
  std::vector<Matrix> frames;
  for (int k = 0; k < rounds; ++k) frames.push_back(net.frame(iter * rounds + k).C);
  return frames;
}

// Loops the step operation of the given mixing model, recording metrics for
// every iterate and stopping at T_eps when requested.
inline RunTrace run(const CompositeProblem& p, const Solution& oracle, const MixingModel& model,
                    const SurrogateSpec& spec, const SolverConfig& cfg) {
  cfg.validate();
  const bool constrained = !p.smooth_unconstrained();
  if (cfg.chebyshev && constrained && std::holds_alternative<MixingMatrix>(model))
    throw ConfigError("Chebyshev mixing uses signed weights and can leave K; use plain rounds");
  if (const auto* W = std::get_if<MixingMatrix>(&model); W && W->size() != p.m())
    throw ConfigError("mixing matrix size differs from the number of agents");
  if (const auto* T = std::get_if<TimeVaryingNetwork>(&model); T && T->m() != p.m())
    throw ConfigError("network size differs from the number of agents");

  SubproblemSolver sol(p, spec);
  RunTrace trace;
  trace.eps = cfg.eps;
  NetworkState s = initial_state(p, cfg);
  const bool star = std::holds_alternative<StarNetwork>(model);
  if (star) s.Y = s.G.colwise().mean().replicate(p.m(), 1);  // tracker initialized at grad F

  for (long it = 0;; ++it) {
    TraceRecord rec = measure(s, p, oracle);
    rec.iter = it;
    if (!trace.T_eps && rec.gap_mean <= cfg.eps) trace.T_eps = it;
    if (!std::isfinite(rec.p)) {
      trace.diverged = true;
      trace.records.push_back(rec);
      break;
    }
    const bool last = it >= cfg.max_iters || (cfg.stop_at_eps && trace.T_eps);
    if (last) {
      rec.dx = local_directions(s, sol).norm();
      trace.records.push_back(rec);
      break;
    }
    if (const auto* W = std::get_if<MixingMatrix>(&model)) {
      rec.dx = sonata_undirected_step(s, p, sol, *W, cfg.alpha, cfg.rounds, cfg.chebyshev);
    } else if (const auto* T = std::get_if<TimeVaryingNetwork>(&model)) {
      rec.dx = sonata_tv_step(s, p, sol, tv_frames(*T, it, cfg.rounds), cfg.alpha);
    } else {
      const Vector x = s.X.row(0).transpose();
      auto st = sonata_star_step(x, p, sol, cfg.alpha);
      rec.dx = std::sqrt(static_cast<double>(p.m())) * st.dx_norm;
      s.X = st.x.transpose().replicate(p.m(), 1);
      s.G = local_gradients(p, s.X);
      s.Y = s.G.colwise().mean().replicate(p.m(), 1);
    }
    trace.records.push_back(rec);
  }
  trace.final_state = std::move(s);
  return trace;
}

// Least-squares slope of log p over records [from, to).
inline double fit_log_slope(const RunTrace& t, std::size_t from, std::size_t to) {
  if (to > t.records.size()) to = t.records.size();
  if (to < from + 2) throw DomainError("fit_log_slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(to - from);
  for (std::size_t k = from; k < to; ++k) {
    const double p = t.records[k].p;
    if (!(p > 0)) throw DomainError("fit_log_slope needs positive p");
    const double x = static_cast<double>(t.records[k].iter), y = std::log(p);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace sonata
