#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sonata/errors.hpp"
#include "sonata/network.hpp"
#include "sonata/problem.hpp"
#include "sonata/surrogate.hpp"

namespace sonata {

// Explicit constants of the complexity corollaries.
namespace rate_constants {
inline constexpr double kLinearizationM = 110;     // general graph, linearization
inline constexpr double kLocalSmallBetaM = 193;    // general graph, local f_i, beta <= mu
inline constexpr double kLocalLargeBetaM = 253;    // general graph, local f_i, beta > mu
inline constexpr double kJLinearization = 8;       // J >= 1/(8 kappa_g)
inline constexpr double kJLocalLargeBeta = 34;     // J >= 1/(34 beta/mu)
inline constexpr double kTvLinearization = 608;    // C_M
inline constexpr double kTvLocalSmallBeta = 1087;  // M~_2
inline constexpr double kTvLocalLargeBeta = 1428;  // M~_1
inline constexpr double kVacuousFloor = 1e-8;
}  // namespace rate_constants

enum class Regime { case_I, case_II };
enum class RateTopology { star, general, time_varying };

// Choice of the free Young parameters eps_x = eps_y in the stability polynomial:
// network_optimal uses (1 - rho)/rho, rate_matched uses (sqrt(z) - rho)/rho.
enum class EpsPolicy { network_optimal, rate_matched };

inline std::string to_string(Regime r) { return r == Regime::case_I ? "CaseI" : "CaseII"; }
inline std::string to_string(RateTopology t) {
  switch (t) {
    case RateTopology::star: return "star";
    case RateTopology::general: return "general";
    case RateTopology::time_varying: return "time_varying";
  }
  return "?";
}

struct RateInputs {
  SurrogateKind kind = SurrogateKind::linearization;
  double mu = 0, L = 0, beta = 0;
  double mu_tilde = 0, L_tilde = 0, D_ell = 0, D_mx = 0, L_mx = 0;
  double rho = 0;
  // push-sum network parameters
  int m = 0;
  double rho_B = 1, one_minus_rho_B = 0, c0 = 0, phi_lb = 1, phi_ub = 1;

  double kappa_g() const { return L / mu; }
  void validate() const {
    if (!(mu > 0) || L < mu) throw ConfigError("rate inputs need 0 < mu <= L");
    if (!(mu_tilde > 0)) throw ConfigError("rate inputs need mu~ > 0");
    if (D_ell > mu_tilde) throw ConfigError("rate inputs need mu~ >= D_ell");
    if (beta < 0 || D_mx < 0 || L_mx < 0) throw ConfigError("rate inputs must be nonnegative");
    if (rho < 0 || rho >= 1) throw ConfigError("rho must lie in [0, 1)");
  }
  void set_tv(int m_, const TvConstants& k) {
    m = m_;
    rho_B = k.rho_B;
    one_minus_rho_B = k.one_minus_rho_B;
    c0 = k.c0;
    phi_lb = k.phi_lb;
    phi_ub = k.phi_ub;
  }
};

inline RateInputs rate_inputs(const CompositeProblem& p, const SurrogateSpec& s, double rho) {
  RateInputs in;
  in.kind = s.kind;
  in.mu = p.mu;
  in.L = p.L;
  in.beta = p.beta_known() ? p.beta : 0.0;
  in.mu_tilde = s.mu_tilde;
  in.L_tilde = s.L_tilde;
  in.D_ell = s.D_ell;
  in.D_mx = s.D_mx();
  in.L_mx = s.L_mx;
  in.rho = rho;
  in.validate();
  return in;
}

inline RateInputs rate_inputs_tv(const CompositeProblem& p, const SurrogateSpec& s, const TvConstants& k) {
  RateInputs in = rate_inputs(p, s, 0.0);
  in.set_tv(p.m(), k);
  return in;
}

// Surrogate constants from raw (mu, L, beta) with the default tau (L or beta).
inline RateInputs rate_inputs_from_constants(SurrogateKind kind, double mu, double L, double beta, double rho) {
  RateInputs in;
  in.kind = kind;
  in.mu = mu;
  in.L = L;
  in.beta = beta;
  in.rho = rho;
  in.L_mx = L + beta;
  if (kind == SurrogateKind::linearization) {
    in.mu_tilde = in.L_tilde = L;
    in.D_ell = 0;
    in.D_mx = L - mu;
  } else if (kind == SurrogateKind::local_f) {
    in.mu_tilde = std::max(beta, mu);
    in.L_tilde = L + 2 * beta;
    in.D_ell = 0;
    in.D_mx = 2 * beta;
  } else {
    throw ConfigError("raw constants support linearization and local_f only");
  }
  in.validate();
  return in;
}

struct RateReport {
  double alpha = 0;
  double sigma_alpha = 0, eta_alpha = 0;
  double C1 = 0, C2 = 0, G_P_star = 0, J = 0, A_half = 0;
  double alpha_star = 0, alpha_max = 0;
  double z = 1;            // certified (theorem-level) rate
  double z_corollary = 1;  // order-level rate with the corollary constants
  Regime regime = Regime::case_II;
  double M = 0, network_ratio = 0, case_I_threshold = 0;
  double iteration_complexity = 0;  // coefficient of log(1/eps)
  double communication_complexity = 0;
  bool vacuous = false;
};

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

namespace detail {

// (1 - alpha/2) mu~ + alpha D_ell / 2
inline double descent_coeff(const RateInputs& in, double alpha) {
  return (1.0 - alpha / 2.0) * in.mu_tilde + alpha * in.D_ell / 2.0;
}

// mu~/(mu~ - D_ell), or infinity when D_ell = mu~.
inline double alpha_cap(const RateInputs& in) {
  const double gap = in.mu_tilde - in.D_ell;
  return gap > 0 ? in.mu_tilde / gap : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// sigma(alpha) and eta(alpha) with eps_opt at its optimizer.
inline double sigma_alpha(const RateInputs& in, double alpha) {
  const double Q = detail::descent_coeff(in, alpha) / 2.0;
  return 1.0 - alpha * Q / (in.D_mx * in.D_mx / in.mu + Q);
}

inline double eta_alpha(const RateInputs& in, double alpha) {
  const double q = detail::descent_coeff(in, alpha);
  const double Q = q / 2.0;
  const double D2 = in.D_mx * in.D_mx / in.mu;
  return (alpha * D2 / (2.0 * q) + alpha * Q / in.mu) / (D2 + Q);
}

inline double G_P_star(const RateInputs& in, double alpha) {
  const double q = detail::descent_coeff(in, alpha);
  return (in.D_mx * in.D_mx / in.mu + q * q / in.mu) / (q * q);
}

// G_P* at the cap mu~/(mu~ - D_ell), where the descent coefficient equals mu~/2.
inline double G_P_hat(const RateInputs& in) {
  const double q = in.mu_tilde / 2.0;
  return (in.D_mx * in.D_mx / in.mu + q * q / in.mu) / (q * q);
}

inline double C1_undirected(const RateInputs& in) {
  const double a = in.D_mx / in.mu_tilde + 1.0;
  return 6.0 / in.mu * (a * a + 4.0 * in.L_mx * in.L_mx / (in.mu_tilde * in.mu_tilde));
}
inline double C1_tv(const RateInputs& in) { return C1_undirected(in) / in.phi_lb; }
inline double C2_const(const RateInputs& in) { return 4.0 / (in.mu_tilde * in.mu_tilde); }

inline double J_const(const RateInputs& in) {
  return 0.5 * in.mu_tilde * in.mu / (4.0 * in.D_mx * in.D_mx + in.mu_tilde * in.mu);
}

// ---------------------------------------------------------------------------
// Stability polynomials
// ---------------------------------------------------------------------------

inline double stability_polynomial(const RateInputs& in, double alpha, double z,
                                   EpsPolicy policy = EpsPolicy::network_optimal) {
  if (alpha < 0) throw DomainError("alpha must be nonnegative");
  if (!(z < 1)) throw DomainError("z must be below 1");
  if (alpha == 0) return 0.0;
  const double sigma = sigma_alpha(in, alpha);
  if (!(z > sigma)) throw DomainError("z must exceed sigma(alpha)");
  const double rho = in.rho;
  if (rho == 0) return 0.0;
  double GX;
  if (policy == EpsPolicy::network_optimal) {
    if (!(z > rho)) throw DomainError("z must exceed rho^2 (1 + eps) = rho");
    GX = 1.0 / ((1.0 - rho) * (z - rho));
  } else {
    const double s = std::sqrt(z);
    if (!(s > rho)) throw DomainError("z must exceed rho^2 (1 + eps) = rho sqrt(z)");
    GX = 1.0 / ((s - rho) * (s - rho));
  }
  const double GY = GX;
  const double GP = eta_alpha(in, alpha) / (z - sigma);
  const double C1 = C1_undirected(in), C2 = C2_const(in);
  const double L2 = in.L_mx * in.L_mx, r2 = rho * rho, a2 = alpha * alpha;
  return GP * GX * C1 * 4.0 * L2 * r2 * a2 + (GP * 2.0 * C1 + C2) * GY * 2.0 * L2 * r2 * a2 +
         (GP * 2.0 * C1 + C2) * GY * 8.0 * L2 * r2 * GX * r2 * a2;
}

inline double stability_polynomial_tv(const RateInputs& in, double alpha, double z) {
  if (alpha < 0) throw DomainError("alpha must be nonnegative");
  if (!(z < 1)) throw DomainError("z must be below 1");
  if (alpha == 0) return 0.0;
  const double sigma = sigma_alpha(in, alpha);
  if (!(z > sigma)) throw DomainError("z must exceed sigma(alpha)");
  if (!(z > in.rho_B)) throw DomainError("z must exceed rho_B");
  const double GX = 2.0 * in.c0 * in.c0 / (in.one_minus_rho_B * (z - in.rho_B));
  const double GY = GX;
  const double GP = eta_alpha(in, alpha) / (z - sigma);
  const double C1 = C1_tv(in), C2 = C2_const(in);
  const double L2 = in.L_mx * in.L_mx, r2 = in.rho_B * in.rho_B, a2 = alpha * alpha;
  const double inv_lb2 = 1.0 / (in.phi_lb * in.phi_lb);
  const double inner = GP * 2.0 * in.phi_ub * C1 + C2;
  return GP * GX * C1 * 8.0 * in.phi_ub * L2 * r2 * a2 + inner * GY * 2.0 * in.m * inv_lb2 * L2 * r2 * a2 +
         inner * GY * 8.0 * in.m * inv_lb2 * L2 * GX * r2 * r2 * a2;
}

// ---------------------------------------------------------------------------
// Theorem-level rates
// ---------------------------------------------------------------------------

// Step-size independent part of the undirected bound.
inline RateReport theorem_bounds_undirected(const RateInputs& in) {
  in.validate();
  RateReport r;
  r.C1 = C1_undirected(in);
  r.C2 = C2_const(in);
  r.G_P_star = G_P_hat(in);
  r.J = J_const(in);
  const double G2 = 2.0 * r.G_P_star;  // theta^{-1} = 2
  const double L2 = in.L_mx * in.L_mx, r2 = in.rho * in.rho;
  const double A1 = G2 * r.C1 * 4.0 * L2 * r2;
  const double A2 = (G2 * 2.0 * r.C1 + r.C2) * 2.0 * L2 * r2;
  const double A3 = (G2 * 2.0 * r.C1 + r.C2) * 8.0 * L2 * r2 * r2;
  r.A_half = std::sqrt(A1 + A2 + A3);
  const double one_rho = 1.0 - in.rho;
  const double net_cap = r.A_half > 0 ? one_rho * one_rho / r.A_half : std::numeric_limits<double>::infinity();
  r.alpha_max = std::min({net_cap, detail::alpha_cap(in), 1.0});
  const double A = r.A_half;
  const double root = (-in.rho * std::sqrt(A) + std::sqrt(A + r.J * (1.0 - in.rho * in.rho))) / (A + r.J);
  r.alpha_star = root * root;
  r.vacuous = r.alpha_max < rate_constants::kVacuousFloor;
  return r;
}

inline double theorem_z_undirected(const RateReport& b, double rho, double alpha) {
  if (alpha < std::min(b.alpha_star, b.alpha_max)) return 1.0 - b.J * alpha;
  const double s = rho + std::sqrt(alpha * b.A_half);
  return s * s;
}

// Certified rate for a step-size in (0, alpha_max).
inline RateReport theorem_rate_undirected(const RateInputs& in, double alpha) {
  RateReport r = theorem_bounds_undirected(in);
  if (!(alpha > 0)) throw DomainError("alpha must be positive");
  if (alpha >= r.alpha_max)
    throw DomainError("alpha must be below alpha_max = " + std::to_string(r.alpha_max));
  r.alpha = alpha;
  r.sigma_alpha = sigma_alpha(in, alpha);
  r.eta_alpha = eta_alpha(in, alpha);
  r.z = theorem_z_undirected(r, in.rho, alpha);
  return r;
}

inline RateReport theorem_bounds_tv(const RateInputs& in) {
  in.validate();
  RateReport r;
  r.C1 = C1_tv(in);
  r.C2 = C2_const(in);
  r.G_P_star = G_P_hat(in);
  r.J = J_const(in);
  const double G2 = 2.0 * r.G_P_star;
  const double L2 = in.L_mx * in.L_mx, r2 = in.rho_B * in.rho_B;
  const double omr = in.one_minus_rho_B;
  const double c02 = in.c0 * in.c0;
  const double inv_lb2 = 1.0 / (in.phi_lb * in.phi_lb);
  const double inner = G2 * 2.0 * in.phi_ub * r.C1 + r.C2;
  const double A1 = G2 * r.C1 * 8.0 * in.phi_ub * L2 * 2.0 * c02 * r2 / omr;
  const double A2 = inner * 2.0 * in.m * inv_lb2 * L2 * 2.0 * c02 * r2 / omr;
  const double A3 = inner * 8.0 * in.m * inv_lb2 * L2 * 4.0 * c02 * c02 * r2 * r2 / (omr * omr);
  r.A_half = std::sqrt(A1 + A2 + A3);
  const double net_cap = omr / r.A_half;
  r.alpha_max = std::min({net_cap, detail::alpha_cap(in), 1.0});
  r.alpha_star = omr / (r.A_half + r.J);
  r.vacuous = !(r.alpha_max >= rate_constants::kVacuousFloor);
  if (std::isnan(r.alpha_max)) r.alpha_max = 0;
  return r;
}

inline RateReport theorem_rate_tv(const RateInputs& in, double alpha) {
  RateReport r = theorem_bounds_tv(in);
  if (!(alpha > 0)) throw DomainError("alpha must be positive");
  if (alpha >= r.alpha_max)
    throw DomainError("alpha must be below alpha_max = " + std::to_string(r.alpha_max));
  r.alpha = alpha;
  r.sigma_alpha = sigma_alpha(in, alpha);
  r.eta_alpha = eta_alpha(in, alpha);
  r.z = alpha < std::min(r.alpha_star, r.alpha_max) ? 1.0 - r.J * alpha : in.rho_B + r.A_half * alpha;
  return r;
}

// Largest alpha on a log grid for which some z on a grid gives P(alpha, z) < 1.
inline double feasible_alpha_sup(const RateInputs& in, EpsPolicy policy = EpsPolicy::network_optimal,
                                 int n_alpha = 200, int n_z = 400) {
  double best = 0.0;
  for (int a = 0; a < n_alpha; ++a) {
    const double alpha = std::pow(10.0, -12.0 + 12.0 * (a + 1) / n_alpha);
    if (alpha > detail::alpha_cap(in) * (1 + 1e-12)) break;
    const double sigma = sigma_alpha(in, alpha);
    const double lo = std::max(sigma, in.rho);
    bool ok = false;
    for (int k = 1; k < n_z && !ok; ++k) {
      // geometric spacing toward 1 resolves z close to the window edge
      const double z = 1.0 - (1.0 - lo) * std::pow(10.0, -16.0 * k / n_z);
      if (z <= lo || z >= 1.0) continue;
      try {
        ok = stability_polynomial(in, alpha, z, policy) < 1.0;
      } catch (const DomainError&) {
      }
    }
    if (ok) best = alpha;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Corollary-level rates and complexities
// ---------------------------------------------------------------------------

// Star topology: certified rate for a given alpha.
inline double star_rate(const RateInputs& in, double alpha) {
  const double q = detail::descent_coeff(in, alpha);
  return 1.0 - alpha * q / (in.D_mx * in.D_mx / (2.0 * in.mu) + q);
}

// Closed forms at alpha = 1 (upper bounds on star_rate(in, 1)).
inline double star_rate_closed_form(SurrogateKind kind, double mu, double L, double beta) {
  if (kind == SurrogateKind::linearization) return 1.0 - mu / L;
  const double b = beta / mu;
  return 1.0 - 1.0 / (1.0 + 4.0 * b * std::min(1.0, b));
}

// Closed-form J for the two standard surrogates.
inline double corollary_J(SurrogateKind kind, double mu, double L, double beta) {
  if (kind == SurrogateKind::linearization) {
    const double k = L / mu;
    return 0.5 * k / (4.0 * (k - 1.0) * (k - 1.0) + k);
  }
  const double b = beta / mu;
  return 0.5 / (1.0 + 16.0 * b * std::min(1.0, b));
}

inline double tv_C_M(const RateInputs& in) {
  return rate_constants::kTvLinearization / in.phi_lb * in.c0 * std::sqrt(in.phi_ub / in.phi_lb * in.m);
}
inline double tv_C_M_tilde(const RateInputs& in) {
  return in.c0 * in.c0 / in.phi_lb * std::sqrt(in.phi_ub / in.phi_lb * in.m);
}

// Network-coupling constant M of the Case I/II split.
inline double corollary_M(SurrogateKind kind, const RateInputs& in, RateTopology topo) {
  const double k = in.kappa_g(), b = in.beta / in.mu;
  if (kind == SurrogateKind::linearization) {
    const double s = (1.0 + in.beta / in.L) * (1.0 + in.beta / in.L);
    return topo == RateTopology::time_varying ? tv_C_M(in) * k * s : rate_constants::kLinearizationM * k * s;
  }
  if (kind != SurrogateKind::local_f) throw ConfigError("corollaries cover linearization and local_f");
  const double scale = topo == RateTopology::time_varying ? tv_C_M_tilde(in) : 1.0;
  if (in.beta <= in.mu) {
    const double c = topo == RateTopology::time_varying ? rate_constants::kTvLocalSmallBeta
                                                        : rate_constants::kLocalSmallBetaM;
    return c * scale * (1 + b) * (1 + b) * (k + b) * (k + b);
  }
  const double c =
      topo == RateTopology::time_varying ? rate_constants::kTvLocalLargeBeta : rate_constants::kLocalLargeBetaM;
  return c * scale * (1.0 + in.L / in.beta) * (k + b);
}

// Corollary report. For the star topology alpha is the step-size used; for
// general and time-varying graphs alpha = c * alpha_max.
inline RateReport corollary_complexity(SurrogateKind kind, const RateInputs& in, RateTopology topo,
                                       double alpha_or_c = 1.0) {
  in.validate();
  RateReport r;
  const double k = in.kappa_g(), b = in.beta / in.mu;
  r.J = corollary_J(kind, in.mu, in.L, in.beta);
  if (topo == RateTopology::star) {
    const double alpha = alpha_or_c;
    if (!(alpha > 0 && alpha <= 1)) throw DomainError("star step-size must lie in (0, 1]");
    r.alpha = alpha;
    r.alpha_max = std::min(1.0, 2.0 * detail::alpha_cap(in));
    r.z = star_rate(in, alpha);
    r.z_corollary = alpha == 1.0 ? star_rate_closed_form(kind, in.mu, in.L, in.beta) : r.z;
    r.regime = Regime::case_I;
    r.iteration_complexity = kind == SurrogateKind::linearization ? k : std::max(1.0, b);
    r.communication_complexity = r.iteration_complexity;
    return r;
  }
  const double c = alpha_or_c;
  if (!(c > 0 && c < 1)) throw DomainError("step fraction c must lie in (0, 1)");
  const bool tv = topo == RateTopology::time_varying;
  const double rho = tv ? in.rho_B : in.rho;
  const double omr = tv ? in.one_minus_rho_B : 1.0 - in.rho;
  r.M = corollary_M(kind, in, topo);
  r.network_ratio = rho / (omr * omr);
  r.case_I_threshold = 1.0 / r.M;
  r.regime = r.network_ratio <= r.case_I_threshold ? Regime::case_I : Regime::case_II;
  if (tv && kind == SurrogateKind::linearization)
    r.alpha_max = std::min(1.0, omr * omr / r.M);
  else
    r.alpha_max = rho > 0 ? std::min(1.0, omr * omr / (r.M * rho)) : 1.0;
  r.alpha = c * r.alpha_max;
  if (tv) {
    r.z_corollary = std::max(1.0 - r.alpha * r.J, in.rho_B + r.alpha * r.M * in.rho_B / omr);
  } else {
    const double s = in.rho + std::sqrt(r.alpha * r.M * in.rho);
    r.z_corollary = std::max(1.0 - r.alpha * r.J, s * s);
  }
  r.z = r.z_corollary;
  double case_I = 0;
  if (kind == SurrogateKind::linearization) case_I = k;
  else case_I = in.beta <= in.mu ? 1.0 : b;
  double case_II = 0;
  if (kind == SurrogateKind::local_f && in.beta <= in.mu) case_II = k * k * r.network_ratio;
  else case_II = (k + b) * (k + b) * r.network_ratio;
  r.iteration_complexity = r.regime == Regime::case_I ? case_I : case_II;
  r.communication_complexity = r.iteration_complexity;
  r.vacuous = r.alpha_max < rate_constants::kVacuousFloor;
  return r;
}

struct ChebyshevRounds {
  int K = 1;
  double rho_eff = 0;
  bool capped = false;
};

// Smallest K whose Chebyshev contraction puts the network in Case I.
inline ChebyshevRounds chebyshev_round_count(const RateInputs& in, SurrogateKind kind, int cap = 1000) {
  if (!(in.rho < 1)) throw DomainError("chebyshev_round_count needs rho < 1");
  const double threshold = 1.0 / corollary_M(kind, in, RateTopology::general);
  for (int K = 1; K <= cap; ++K) {
    const double r = K == 1 ? in.rho : chebyshev_contraction(in.rho, K);
    if (r / ((1 - r) * (1 - r)) <= threshold) return {K, r, false};
  }
  return {cap, chebyshev_contraction(in.rho, cap), true};
}

}  // namespace sonata
