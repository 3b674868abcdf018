#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "sonata/rates.hpp"

using namespace sonata;

namespace {

RateInputs lin(double mu, double L, double beta, double rho) {
  return rate_inputs_from_constants(SurrogateKind::linearization, mu, L, beta, rho);
}
RateInputs loc(double mu, double L, double beta, double rho) {
  return rate_inputs_from_constants(SurrogateKind::local_f, mu, L, beta, rho);
}

void expect_rel(double got, double want, double tol) { EXPECT_NEAR(got, want, tol * std::abs(want)) << want; }

}  // namespace

// Values below come from tests/oracles/oracle.py (mpmath, 50 digits).

TEST(StabilityPolynomial, MatchesOracleLinearization) {
  expect_rel(stability_polynomial(lin(1, 10, 0, 0.5), 1e-3, 0.99999), 0.23972829713457391, 1e-9);
}

TEST(StabilityPolynomial, MatchesOracleLocalF) {
  expect_rel(stability_polynomial(loc(1, 10, 0.5, 0.3), 1e-4, 0.99999), 0.016902267076144916, 1e-9);
}

TEST(StabilityPolynomial, ZeroAlphaGivesZero) { EXPECT_EQ(stability_polynomial(lin(1, 10, 0, 0.5), 0.0, 0.99), 0.0); }

TEST(StabilityPolynomial, ZeroRhoGivesZero) {
  for (double a : {1e-3, 0.1, 1.0}) EXPECT_EQ(stability_polynomial(lin(1, 10, 0, 0.0), a, 1 - 1e-7), 0.0);
}

TEST(StabilityPolynomial, RejectsZBelowSigma) {
  // sigma(1e-3) is about 0.99994 for these constants
  EXPECT_THROW(stability_polynomial(lin(1, 10, 0, 0.5), 1e-3, 0.999), DomainError);
}

TEST(StabilityPolynomial, RejectsZBelowRho) {
  EXPECT_THROW(stability_polynomial(lin(1, 1.0001, 0, 0.999999), 1.0, 0.9999), DomainError);
}

TEST(TheoremBounds, ParticularizedLinearizationConstants) {
  // G_P*(1) = (4(L-mu)^2 + L^2)/(mu L^2), C1 = 6((2L-mu)^2 + 4(L+beta)^2)/(mu L^2), C2 = 4/L^2
  const double mu = 1.5, L = 12.0, beta = 0.7;
  const RateReport r = theorem_bounds_undirected(lin(mu, L, beta, 0.2));
  expect_rel(r.G_P_star, (4 * (L - mu) * (L - mu) + L * L) / (mu * L * L), 1e-14);
  expect_rel(r.C1, 6.0 * ((2 * L - mu) * (2 * L - mu) + 4 * (L + beta) * (L + beta)) / (mu * L * L), 1e-14);
  expect_rel(r.C2, 4.0 / (L * L), 1e-14);
}

struct TheoremCase {
  RateInputs in;
  double C1, C2, J, G, A, alpha_max, alpha_star, z_half;
};

TEST(TheoremBounds, MatchesOracle) {
  const std::vector<TheoremCase> cases = {
      {lin(1, 10, 0, 0.5), 45.66, 0.04, 0.014970059880239521, 4.24, 340.82699423607867, 0.00073350997493711999,
       0.00073349386644638207, 0.99999450965587622},
      {loc(1, 10, 0.5, 0.3), 2670.0, 4.0, 0.1, 5.0, 1581.4721738936794, 0.00030983788908127963,
       0.00030982417551701349, 0.99998450810554594},
      {loc(1, 20, 3, 0.01), 1464.6666666666667, 0.44444444444444444, 0.010204081632653061, 17.0, 145.18628631351899,
       0.0067506375766341109, 0.0067501679010089316, 0.99996555797154779},
  };
  for (const auto& c : cases) {
    const RateReport r = theorem_bounds_undirected(c.in);
    expect_rel(r.C1, c.C1, 1e-12);
    expect_rel(r.C2, c.C2, 1e-12);
    expect_rel(r.J, c.J, 1e-12);
    expect_rel(r.G_P_star, c.G, 1e-12);
    expect_rel(r.A_half, c.A, 1e-12);
    expect_rel(r.alpha_max, c.alpha_max, 1e-12);
    expect_rel(r.alpha_star, c.alpha_star, 1e-10);
    expect_rel(theorem_rate_undirected(c.in, c.alpha_max / 2).z, c.z_half, 1e-14);
  }
}

TEST(TheoremRate, KappaOneGivesJHalf) {
  EXPECT_DOUBLE_EQ(theorem_bounds_undirected(lin(2, 2, 0, 0.3)).J, 0.5);
}

TEST(TheoremRate, JWithinLinearizationBand) {
  for (double k : {1.0, 1.5, 3.0, 10.0, 100.0, 1e4}) {
    const double J = theorem_bounds_undirected(lin(1, k, 0, 0.1)).J;
    EXPECT_GE(J, 1.0 / (8 * k) - 1e-15);
    EXPECT_LE(J, 0.5 + 1e-15);
  }
}

TEST(TheoremRate, ZeroRhoIsJBranch) {
  const RateInputs in = lin(1, 10, 0, 0.0);
  for (double a : {1e-3, 0.1, 0.5, 0.99}) EXPECT_DOUBLE_EQ(theorem_rate_undirected(in, a).z, 1 - theorem_bounds_undirected(in).J * a);
}

TEST(TheoremRate, BranchesAgreeAtAlphaStar) {
  for (const auto& in : {lin(1, 10, 0, 0.5), loc(1, 10, 0.5, 0.3), loc(1, 20, 3, 0.01), lin(1, 5, 1, 0.05)}) {
    const RateReport b = theorem_bounds_undirected(in);
    const double s = in.rho + std::sqrt(b.alpha_star * b.A_half);
    EXPECT_NEAR(1 - b.J * b.alpha_star, s * s, 1e-10);
  }
}

TEST(TheoremRate, ContinuousInAlpha) {
  const RateInputs in = lin(1, 10, 0, 0.05);
  const RateReport b = theorem_bounds_undirected(in);
  ASSERT_LT(b.alpha_star, b.alpha_max);
  const double h = 1e-12 * b.alpha_star;
  const double lo = theorem_rate_undirected(in, b.alpha_star - h).z;
  const double hi = theorem_rate_undirected(in, b.alpha_star + h).z;
  EXPECT_NEAR(lo, hi, 1e-10);
  double prev = 1.0;
  for (int k = 1; k < 400; ++k) {
    const double z = theorem_rate_undirected(in, b.alpha_max * k / 400.0).z;
    EXPECT_LT(std::abs(z - prev), 1e-2);
    EXPECT_LT(z, 1.0);
    prev = z;
  }
}

TEST(TheoremRate, AlphaMaxNonincreasingInRho) {
  for (auto kind : {SurrogateKind::linearization, SurrogateKind::local_f}) {
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 100; ++k) {
      const double rho = k / 100.0;
      const double a = theorem_bounds_undirected(rate_inputs_from_constants(kind, 1, 10, 0.5, rho)).alpha_max;
      EXPECT_LE(a, prev);
      prev = a;
    }
  }
}

TEST(TheoremRate, RejectsAlphaAtOrBeyondAlphaMax) {
  const RateInputs in = lin(1, 10, 0, 0.5);
  const double amax = theorem_bounds_undirected(in).alpha_max;
  EXPECT_THROW(theorem_rate_undirected(in, amax), DomainError);
  EXPECT_THROW(theorem_rate_undirected(in, 0.0), DomainError);
}

TEST(TheoremRate, CertifiedZSatisfiesSmallGain) {
  for (const auto& in : {lin(1, 10, 0, 0.5), loc(1, 10, 0.5, 0.3), loc(1, 20, 3, 0.01), lin(1, 100, 0, 0.2)}) {
    const RateReport b = theorem_bounds_undirected(in);
    for (double c : {0.1, 0.5, 0.9}) {
      const double a = c * b.alpha_max;
      const double z = theorem_rate_undirected(in, a).z;
      EXPECT_LT(stability_polynomial(in, a, z, EpsPolicy::rate_matched), 1.0);
    }
  }
}

TEST(TheoremRate, AlphaMaxBelowGridFeasibleSupremum) {
  const RateInputs in = lin(1, 10, 0, 0.5);
  EXPECT_LE(theorem_bounds_undirected(in).alpha_max, feasible_alpha_sup(in, EpsPolicy::rate_matched));
}

TEST(TheoremRate, DEllEqualsMuTildeDropsCap) {
  RateInputs in = lin(1, 10, 0, 0.0);
  in.D_ell = in.mu_tilde;
  EXPECT_TRUE(std::isinf(detail::alpha_cap(in)));
  EXPECT_DOUBLE_EQ(theorem_bounds_undirected(in).alpha_max, 1.0);
}

TEST(TheoremRateTv, MatchesOracle) {
  RateInputs in = loc(1, 10, 0.5, 0.0);
  in.set_tv(2, tv_constants(2, 1, 0.5));
  expect_rel(in.rho_B, 0.9375, 1e-14);
  expect_rel(in.c0, 4.5333333333333333, 1e-14);
  expect_rel(in.phi_lb, 0.25, 1e-14);
  expect_rel(in.phi_ub, 1.75, 1e-14);
  const RateReport r = theorem_bounds_tv(in);
  expect_rel(r.A_half, 59382552.485661443, 1e-12);
  expect_rel(r.alpha_max, 1.0524977014939076e-9, 1e-12);
  expect_rel(r.alpha_star, 1.0524976997215054e-9, 1e-12);
}

TEST(TheoremRateTv, TinyGapKeptSeparately) {
  RateInputs in = lin(1, 10, 0, 0.0);
  in.set_tv(3, tv_constants(3, 2, 1.0 / 3.0));
  expect_rel(in.one_minus_rho_B, 2.0563158349924898e-20, 1e-10);
  expect_rel(in.c0, 6.0, 1e-14);
  expect_rel(in.phi_ub, 2.9998475842097241, 1e-14);
  const RateReport r = theorem_bounds_tv(in);
  expect_rel(r.A_half, 4.3937346691318643e+30, 1e-9);
  expect_rel(r.alpha_max, 4.6801092688621244e-51, 1e-9);
  EXPECT_TRUE(r.vacuous);
}

TEST(TheoremRateTv, StaticNetworkGivesValidRate) {
  RateInputs in = loc(1, 2, 0.1, 0.0);
  in.set_tv(2, tv_constants(2, 1, 0.5));
  const RateReport b = theorem_bounds_tv(in);
  const RateReport r = theorem_rate_tv(in, b.alpha_max / 2);
  EXPECT_LT(r.z, 1.0);
  EXPECT_GT(r.z, 0.0);
  const double tiny = theorem_rate_tv(in, b.alpha_max * 1e-3).z;
  EXPECT_LT(tiny, 1.0);
  EXPECT_GT(tiny, 1.0 - 1e-9);
}

TEST(TheoremRateTv, CertifiedZSatisfiesSmallGain) {
  RateInputs in = loc(1, 10, 0.5, 0.0);
  in.set_tv(2, tv_constants(2, 1, 0.5));
  const RateReport b = theorem_bounds_tv(in);
  for (double c : {0.1, 0.5, 0.9}) {
    const double a = c * b.alpha_max;
    EXPECT_LT(stability_polynomial_tv(in, a, theorem_rate_tv(in, a).z), 1.0);
  }
}

TEST(StarRate, ClosedForms) {
  EXPECT_NEAR(star_rate_closed_form(SurrogateKind::linearization, 1, 10, 0), 0.9, 1e-15);
  EXPECT_NEAR(star_rate_closed_form(SurrogateKind::local_f, 1, 10, 0.5), 0.5, 1e-15);
  EXPECT_NEAR(star_rate_closed_form(SurrogateKind::local_f, 1, 10, 3), 1 - 1.0 / 13, 1e-15);
}

TEST(StarRate, CertifiedWithinClosedForm) {
  for (double k : {1.0, 2.0, 10.0, 1000.0}) {
    const RateReport r = corollary_complexity(SurrogateKind::linearization, lin(1, k, 0, 0), RateTopology::star, 1.0);
    EXPECT_NEAR(r.z_corollary, 1 - 1 / k, 1e-12);
    EXPECT_LE(r.z, r.z_corollary + 1e-15);
    // certified star value at alpha = 1
    EXPECT_NEAR(r.z, 1 - k / ((k - 1) * (k - 1) + k), 1e-12);
  }
  for (double b : {0.0, 0.5, 1.0, 4.0}) {
    const RateReport r = corollary_complexity(SurrogateKind::local_f, loc(1, 10, b, 0), RateTopology::star, 1.0);
    EXPECT_LE(r.z, r.z_corollary + 1e-12);
  }
}

TEST(StarRate, KappaOneIsExact) {
  const RateReport r = corollary_complexity(SurrogateKind::linearization, lin(3, 3, 0, 0), RateTopology::star, 1.0);
  EXPECT_DOUBLE_EQ(r.z, 0.0);
  EXPECT_DOUBLE_EQ(r.z_corollary, 0.0);
}

TEST(Corollary, CaseIThresholdArithmetic) {
  const RateReport r =
      corollary_complexity(SurrogateKind::linearization, lin(1, 10, 0, 1e-4), RateTopology::general, 0.5);
  EXPECT_DOUBLE_EQ(r.M, 1100.0);
  EXPECT_EQ(r.regime, Regime::case_I);
  EXPECT_DOUBLE_EQ(r.alpha_max, 1.0);
  EXPECT_DOUBLE_EQ(r.iteration_complexity, 10.0);
}

TEST(Corollary, CaseIIComplexity) {
  const RateReport r =
      corollary_complexity(SurrogateKind::linearization, lin(1, 10, 0, 0.5), RateTopology::general, 0.5);
  EXPECT_EQ(r.regime, Regime::case_II);
  expect_rel(r.alpha_max, 0.25 / (1100 * 0.5), 1e-14);
  expect_rel(r.iteration_complexity, 100.0 * 0.5 / 0.25, 1e-14);
}

TEST(Corollary, LocalFConstants) {
  const double k = 10, b = 0.5;
  expect_rel(corollary_M(SurrogateKind::local_f, loc(1, k, b, 0.1), RateTopology::general),
             193 * (1 + b) * (1 + b) * (k + b) * (k + b), 1e-14);
  const double b2 = 3;
  expect_rel(corollary_M(SurrogateKind::local_f, loc(1, k, b2, 0.1), RateTopology::general),
             253 * (1 + k / b2) * (k + b2), 1e-14);
  expect_rel(corollary_J(SurrogateKind::local_f, 1, k, b), 0.5 / (1 + 16 * b * b), 1e-14);
}

TEST(Corollary, RejectsBadFraction) {
  EXPECT_THROW(corollary_complexity(SurrogateKind::linearization, lin(1, 10, 0, 0.5), RateTopology::general, 1.0),
               DomainError);
}

TEST(ChebyshevRounds, AlreadyCaseI) {
  const auto k = chebyshev_round_count(lin(1, 10, 0, 1e-4), SurrogateKind::linearization);
  EXPECT_EQ(k.K, 1);
  EXPECT_FALSE(k.capped);
}

TEST(ChebyshevRounds, ContractionMeetsThreshold) {
  const RateInputs in = lin(1, 10, 0, 0.9);
  const auto k = chebyshev_round_count(in, SurrogateKind::linearization);
  ASSERT_FALSE(k.capped);
  EXPECT_GT(k.K, 1);
  // 1/T_K(1/rho) by the cosh form
  const double direct = 1.0 / std::cosh(k.K * std::acosh(1.0 / 0.9));
  EXPECT_NEAR(k.rho_eff, direct, 1e-12 * direct);
  const double threshold = 1.0 / 1100.0;
  EXPECT_LE(direct / ((1 - direct) * (1 - direct)), threshold);
  const double prev = 1.0 / std::cosh((k.K - 1) * std::acosh(1.0 / 0.9));
  EXPECT_GT(prev / ((1 - prev) * (1 - prev)), threshold);
}
