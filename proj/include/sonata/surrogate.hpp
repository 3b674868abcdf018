#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sonata/errors.hpp"
#include "sonata/problem.hpp"
#include "sonata/rng.hpp"

namespace sonata {

enum class SurrogateKind { linearization, local_f, custom };

inline std::string to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::linearization: return "linearization";
    case SurrogateKind::local_f: return "local_f";
    case SurrogateKind::custom: return "custom";
  }
  return "?";
}

inline SurrogateKind surrogate_kind_from_string(const std::string& s) {
  if (s == "linearization" || s == "L") return SurrogateKind::linearization;
  if (s == "local_f" || s == "F") return SurrogateKind::local_f;
  if (s == "custom") return SurrogateKind::custom;
  throw ConfigError("unknown surrogate kind: " + s);
}

// Custom local model f~_i(x; x_nu), given by value and gradient in x.
struct CustomModel {
  std::function<double(int, const Vector&, const Vector&)> value;
  std::function<Vector(int, const Vector&, const Vector&)> gradient;
};

// Aggregated surrogate constants: mu_tilde = min_i mu~_i, L_tilde = max_i L~_i,
// D_ell = min_i D_i^l, D_u = max_i D_i^u, plus the L_mx bound the rates consume.
struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::linearization;
  double tau = 0.0;  // proximal weight (linearization) or shift (local_f)
  double mu_tilde = 0.0, L_tilde = 0.0;
  double D_ell = 0.0, D_u = 0.0;
  double L_mx = 0.0;
  double inner_tol = 1e-12;
  int inner_max_iters = 200000;
  CustomModel model;

  double D() const { return std::max(std::abs(D_ell), std::abs(D_u)); }
  double D_mx() const { return D(); }
};

// Default tau: L for linearization, beta for local_f. A custom spec must be
// built with make_custom_surrogate instead.
inline SurrogateSpec surrogate_constants(SurrogateKind kind, const CompositeProblem& p,
                                         std::optional<double> tau = std::nullopt) {
  SurrogateSpec s;
  s.kind = kind;
  s.L_mx = p.beta_known() ? p.L + p.beta : p.L_mx;
  switch (kind) {
    case SurrogateKind::linearization: {
      s.tau = tau.value_or(p.L);
      if (!(s.tau > 0)) throw ConfigError("linearization tau must be positive");
      s.mu_tilde = s.L_tilde = s.tau;
      s.D_ell = s.tau - p.L;
      s.D_u = s.tau - p.mu;
      break;
    }
    case SurrogateKind::local_f: {
      if (!tau && !p.beta_known())
        throw ConfigError("local_f surrogate needs beta; run estimate_beta first");
      s.tau = tau.value_or(p.beta);
      if (s.tau < 0) throw ConfigError("local_f shift must be nonnegative");
      const double beta = p.beta_known() ? p.beta : 0.0;
      s.mu_tilde = s.tau + std::max(0.0, p.mu - beta);
      s.L_tilde = s.tau + s.L_mx;
      s.D_ell = s.tau - beta;
      s.D_u = s.tau + beta;
      if (!(s.mu_tilde > 0)) throw ConfigError("local_f surrogate is not strongly convex");
      break;
    }
    case SurrogateKind::custom:
      throw ConfigError("custom surrogates are built with make_custom_surrogate");
  }
  return s;
}

inline SurrogateSpec make_custom_surrogate(CustomModel model, double mu_tilde, double L_tilde, double D_ell,
                                           double D_u, const CompositeProblem& p) {
  if (!(mu_tilde > 0) || L_tilde < mu_tilde) throw ConfigError("custom surrogate needs 0 < mu~ <= L~");
  if (D_ell > D_u) throw ConfigError("custom surrogate needs D_ell <= D_u");
  if (!model.value || !model.gradient) throw ConfigError("custom surrogate needs value and gradient");
  SurrogateSpec s;
  s.kind = SurrogateKind::custom;
  s.mu_tilde = mu_tilde;
  s.L_tilde = L_tilde;
  s.D_ell = D_ell;
  s.D_u = D_u;
  s.L_mx = p.beta_known() ? p.L + p.beta : p.L_mx;
  s.model = std::move(model);
  return s;
}

// Checks first-order consistency and the declared curvature mu~ of a custom
// model at random points; the D bounds are taken on trust.
inline void verify_custom_surrogate(const SurrogateSpec& s, const CompositeProblem& p, int samples = 8,
                                    std::uint64_t seed = 0) {
  auto rng = make_rng(seed, Stream::sampling, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    Vector v(p.d());
    for (int j = 0; j < p.d(); ++j) v(j) = normal(rng);
    return v;
  };
  for (int i = 0; i < p.m(); ++i) {
    for (int k = 0; k < samples; ++k) {
      Vector xn = p.K.project(draw());
      Vector g0 = s.model.gradient(i, xn, xn);
      Vector gi = p.losses[i]->gradient(xn);
      if ((g0 - gi).norm() > 1e-8 * (1.0 + gi.norm()))
        throw ConfigError("custom surrogate gradient does not match the local loss at x = x_nu");
      Vector x = draw(), dir = draw();
      const double t = 1e-4;
      const double curv = (s.model.gradient(i, x + t * dir, xn) - s.model.gradient(i, x, xn)).dot(dir) /
                          (t * dir.squaredNorm());
      if (curv < s.mu_tilde - 1e-6 * (1.0 + s.mu_tilde))
        throw ConfigError("custom surrogate curvature is below the declared mu~");
    }
  }
}

struct SubproblemResult {
  Vector x_hat;
  Vector dx;
  int inner_iterations = 0;
  double residual = 0.0;
};

// Minimizes s(x) + G(x) over K with accelerated proximal gradient, where s is
// Ls-smooth and ms-strongly convex. Stops when the gradient mapping at the
// returned point is at most threshold.
template <class Grad>
SubproblemResult minimize_composite(const Grad& grad, double Ls, double ms, const NonsmoothTerm& g,
                                    const ConstraintSet& K, const Vector& x0, double threshold, int max_iters) {
  const double step = 1.0 / Ls;
  auto mapping = [&](const Vector& z, const Vector& gz) { return prox_gk(g, K, z - step * gz, step); };
  Vector x = K.project(x0);
  Vector y = x;
  const double q = ms > 0 ? std::sqrt(ms / Ls) : 0.0;
  const double momentum = ms > 0 ? (1.0 - q) / (1.0 + q) : 0.0;
  double t = 1.0;
  double best_res = kInf;
  Vector best = x;
  for (int it = 1; it <= max_iters; ++it) {
    Vector xn = mapping(y, grad(y));
    const double res_y = Ls * (y - xn).norm();
    if (res_y <= threshold) {
      const double res = Ls * (xn - mapping(xn, grad(xn))).norm();
      if (res < best_res) {
        best_res = res;
        best = xn;
      }
      if (res <= threshold) return {xn, Vector(), it, res};
    }
    double beta;
    if (ms > 0) {
      beta = momentum;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      beta = (t - 1.0) / tn;
      t = tn;
    }
    y = xn + beta * (xn - x);
    x = std::move(xn);
  }
  const double res = Ls * (x - mapping(x, grad(x))).norm();
  throw ConvergenceError("inner solver hit its iteration cap", std::min(res, best_res));
}

// Per-agent solver for
//   argmin_x f~_i(x; x_i) + (y_i - grad f_i(x_i))^T (x - x_i) + G(x),  x in K.
// Factorizations of H_i + tau I are cached for the closed-form local_f path.
class SubproblemSolver {
 public:
  SubproblemSolver(const CompositeProblem& p, SurrogateSpec spec)
      : p_(&p), spec_(std::move(spec)), cache_(std::make_shared<std::vector<std::optional<Eigen::LLT<Matrix>>>>(p.m())) {}

  const SurrogateSpec& spec() const { return spec_; }

  bool closed_form() const {
    switch (spec_.kind) {
      case SurrogateKind::linearization:
        return !(p_->g.kind == NonsmoothTerm::Kind::indicator_ball && p_->K.kind == ConstraintSet::Kind::box);
      case SurrogateKind::local_f: return p_->quadratic() && p_->smooth_unconstrained();
      case SurrogateKind::custom: return false;
    }
    return false;
  }

  SubproblemResult solve(int i, const Vector& x_i, const Vector& y_i, const Vector& grad_i) const {
    SubproblemResult r = solve_impl(i, x_i, y_i, grad_i);
    r.dx = r.x_hat - x_i;
    return r;
  }

  // Gradient-mapping residual of the subproblem at x (step 1/L~).
  double residual(int i, const Vector& x_i, const Vector& y_i, const Vector& grad_i, const Vector& x) const {
    const double Ls = smooth_lipschitz(i);
    Vector gx = smooth_gradient(i, x_i, y_i, grad_i, x);
    return Ls * (x - prox_gk(p_->g, p_->K, x - gx / Ls, 1.0 / Ls)).norm();
  }

  // Objective of the subproblem (without constant terms).
  double objective(int i, const Vector& x_i, const Vector& y_i, const Vector& grad_i, const Vector& x) const {
    const Vector e = x - x_i;
    double s = 0.0;
    switch (spec_.kind) {
      case SurrogateKind::linearization: s = y_i.dot(e) + 0.5 * spec_.tau * e.squaredNorm(); break;
      case SurrogateKind::local_f:
        s = p_->losses[i]->value(x) + 0.5 * spec_.tau * e.squaredNorm() + (y_i - grad_i).dot(e);
        break;
      case SurrogateKind::custom: s = spec_.model.value(i, x, x_i) + (y_i - grad_i).dot(e); break;
    }
    if (!p_->K.contains(x, 1e-10)) return kInf;
    return s + p_->g.value(x);
  }

 private:
  double smooth_lipschitz(int i) const {
    switch (spec_.kind) {
      case SurrogateKind::linearization: return spec_.tau;
      case SurrogateKind::local_f: return p_->losses[i]->L() + spec_.tau;
      case SurrogateKind::custom: return spec_.L_tilde;
    }
    return 1.0;
  }
  double smooth_convexity(int i) const {
    switch (spec_.kind) {
      case SurrogateKind::linearization: return spec_.tau;
      case SurrogateKind::local_f: return p_->losses[i]->mu() + spec_.tau;
      case SurrogateKind::custom: return spec_.mu_tilde;
    }
    return 0.0;
  }
  Vector smooth_gradient(int i, const Vector& x_i, const Vector& y_i, const Vector& grad_i, const Vector& x) const {
    switch (spec_.kind) {
      case SurrogateKind::linearization: return y_i + spec_.tau * (x - x_i);
      case SurrogateKind::local_f: return p_->losses[i]->gradient(x) + spec_.tau * (x - x_i) + y_i - grad_i;
      case SurrogateKind::custom: return spec_.model.gradient(i, x, x_i) + y_i - grad_i;
    }
    return x;
  }

  SubproblemResult solve_impl(int i, const Vector& x_i, const Vector& y_i, const Vector& grad_i) const {
    if (spec_.kind == SurrogateKind::linearization && closed_form())
      return {prox_gk(p_->g, p_->K, x_i - y_i / spec_.tau, 1.0 / spec_.tau), Vector(), 0, 0.0};
    if (spec_.kind == SurrogateKind::local_f && closed_form()) {
      auto& slot = (*cache_)[i];
      const auto& q = static_cast<const QuadraticLoss&>(*p_->losses[i]);
      if (!slot) slot.emplace(q.H() + spec_.tau * Matrix::Identity(q.dim(), q.dim()));
      // (H_i + tau I) x = g_i + tau x_i - y_i + grad f_i(x_i) = H_i x_i + tau x_i - y_i
      Vector rhs = q.g() + spec_.tau * x_i - y_i + grad_i;
      return {slot->solve(rhs), Vector(), 0, 0.0};
    }
    const double Ls = smooth_lipschitz(i);
    const double scale = 1.0 + y_i.norm() + Ls * x_i.norm();
    const double threshold = spec_.inner_tol * scale;
    auto grad = [&](const Vector& x) { return smooth_gradient(i, x_i, y_i, grad_i, x); };
    try {
      return minimize_composite(grad, Ls, smooth_convexity(i), p_->g, p_->K, x_i, threshold, spec_.inner_max_iters);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("agent " + std::to_string(i) + ": " + e.what(), e.residual);
    }
  }

  const CompositeProblem* p_;
  SurrogateSpec spec_;
  std::shared_ptr<std::vector<std::optional<Eigen::LLT<Matrix>>>> cache_;
};

}  // namespace sonata
