#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sonata/errors.hpp"
#include "sonata/rng.hpp"

namespace sonata {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Smooth losses
// ---------------------------------------------------------------------------

class SmoothLoss {
 public:
  virtual ~SmoothLoss() = default;
  virtual int dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual bool has_hessian() const { return false; }
  virtual Matrix hessian(const Vector&) const {
    throw CapabilityError("loss does not expose a Hessian");
  }
  virtual bool is_quadratic() const { return false; }
  // Bounds mu_i I <= Hessian <= L_i I over the domain.
  double mu() const { return mu_; }
  double L() const { return L_; }

 protected:
  double mu_ = 0.0, L_ = 0.0;
};

inline std::pair<double, double> extreme_eigenvalues(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

inline double spectral_norm_sym(const Matrix& S) {
  auto [lo, hi] = extreme_eigenvalues(S);
  return std::max(std::abs(lo), std::abs(hi));
}

// f(x) = 1/2 x^T H x - g^T x + c
class QuadraticLoss final : public SmoothLoss {
 public:
  QuadraticLoss(Matrix H, Vector g, double c = 0.0)
      : H_(0.5 * (H + H.transpose())), g_(std::move(g)), c_(c) {
    if (H_.rows() != g_.size()) throw ConfigError("QuadraticLoss: H and g sizes differ");
    std::tie(mu_, L_) = extreme_eigenvalues(H_);
  }
  int dim() const override { return static_cast<int>(g_.size()); }
  double value(const Vector& x) const override { return 0.5 * x.dot(H_ * x) - g_.dot(x) + c_; }
  Vector gradient(const Vector& x) const override { return H_ * x - g_; }
  bool has_hessian() const override { return true; }
  Matrix hessian(const Vector&) const override { return H_; }
  bool is_quadratic() const override { return true; }

  const Matrix& H() const { return H_; }
  const Vector& g() const { return g_; }
  double c() const { return c_; }

 private:
  Matrix H_;
  Vector g_;
  double c_;
};

// f(x) = (1/n) sum_j log(1 + exp(-b_j a_j^T x)) + lambda ||x||^2, labels b_j in {-1, +1}.
class LogisticLoss final : public SmoothLoss {
 public:
  LogisticLoss(Matrix A, Vector b, double lambda) : A_(std::move(A)), b_(std::move(b)), lambda_(lambda) {
    const double n = static_cast<double>(A_.rows());
    auto [lo, hi] = extreme_eigenvalues(A_.transpose() * A_ / n);
    (void)lo;
    mu_ = 2.0 * lambda_;
    L_ = hi / 4.0 + 2.0 * lambda_;
  }
  int dim() const override { return static_cast<int>(A_.cols()); }
  double value(const Vector& x) const override {
    Vector t = -(b_.array() * (A_ * x).array()).matrix();
    double s = 0.0;
    for (int j = 0; j < t.size(); ++j) s += t(j) > 0 ? t(j) + std::log1p(std::exp(-t(j))) : std::log1p(std::exp(t(j)));
    return s / static_cast<double>(A_.rows()) + lambda_ * x.squaredNorm();
  }
  Vector gradient(const Vector& x) const override {
    Vector z = b_.array() * (A_ * x).array();
    Vector w = (-b_.array() * sigmoid(-z).array()).matrix();
    return A_.transpose() * w / static_cast<double>(A_.rows()) + 2.0 * lambda_ * x;
  }
  bool has_hessian() const override { return true; }
  Matrix hessian(const Vector& x) const override {
    Vector z = b_.array() * (A_ * x).array();
    Vector s = sigmoid(z);
    Vector d = (s.array() * (1.0 - s.array())).matrix();
    return A_.transpose() * d.asDiagonal() * A_ / static_cast<double>(A_.rows()) +
           2.0 * lambda_ * Matrix::Identity(dim(), dim());
  }

 private:
  static Vector sigmoid(const Vector& z) {
    Vector s(z.size());
    for (int j = 0; j < z.size(); ++j)
      s(j) = z(j) >= 0 ? 1.0 / (1.0 + std::exp(-z(j))) : std::exp(z(j)) / (1.0 + std::exp(z(j)));
    return s;
  }
  Matrix A_;
  Vector b_;
  double lambda_;
};

// ---------------------------------------------------------------------------
// Nonsmooth term and constraint set
// ---------------------------------------------------------------------------

struct NonsmoothTerm {
  enum class Kind { zero, l1, indicator_ball };
  Kind kind = Kind::zero;
  double param = 0.0;  // l1 weight or ball radius

  static NonsmoothTerm zero() { return {}; }
  static NonsmoothTerm l1(double w) {
    if (w < 0) throw ConfigError("l1 weight must be nonnegative");
    return {Kind::l1, w};
  }
  static NonsmoothTerm indicator_ball(double r) {
    if (!(r > 0)) throw ConfigError("ball radius must be positive");
    return {Kind::indicator_ball, r};
  }

  double value(const Vector& x) const {
    switch (kind) {
      case Kind::zero: return 0.0;
      case Kind::l1: return param * x.lpNorm<1>();
      case Kind::indicator_ball: return x.norm() <= param * (1 + 1e-12) ? 0.0 : kInf;
    }
    return 0.0;
  }

  // argmin_u G(u) + ||u - x||^2 / (2t)
  Vector prox(const Vector& x, double t) const {
    if (t < 0) throw DomainError("prox step must be nonnegative");
    switch (kind) {
      case Kind::zero: return x;
      case Kind::l1: {
        const double s = param * t;
        return x.unaryExpr([s](double v) { return v > s ? v - s : (v < -s ? v + s : 0.0); });
      }
      case Kind::indicator_ball: {
        const double n = x.norm();
        return n <= param ? x : Vector(x * (param / n));
      }
    }
    return x;
  }
};

struct ConstraintSet {
  enum class Kind { all_space, ball, box };
  Kind kind = Kind::all_space;
  double radius = 0.0;
  Vector lo, hi;

  static ConstraintSet all_space() { return {}; }
  static ConstraintSet ball(double r) {
    if (!(r > 0)) throw ConfigError("ball radius must be positive");
    return {Kind::ball, r, {}, {}};
  }
  static ConstraintSet box(Vector lo, Vector hi) {
    if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
      throw ConfigError("box bounds are inconsistent");
    return {Kind::box, 0.0, std::move(lo), std::move(hi)};
  }

  Vector project(const Vector& x) const {
    switch (kind) {
      case Kind::all_space: return x;
      case Kind::ball: {
        const double n = x.norm();
        return n <= radius ? x : Vector(x * (radius / n));
      }
      case Kind::box: return x.cwiseMax(lo).cwiseMin(hi);
    }
    return x;
  }
  bool contains(const Vector& x, double tol = 1e-12) const {
    switch (kind) {
      case Kind::all_space: return true;
      case Kind::ball: return x.norm() <= radius * (1 + tol) + tol;
      case Kind::box: return ((x - lo).array() >= -tol).all() && ((hi - x).array() >= -tol).all();
    }
    return true;
  }
};

// prox of t*G + indicator(K). Exact for every combination except a ball-type G
// over a box K, which falls back to Dykstra's alternating projections.
inline Vector prox_gk(const NonsmoothTerm& g, const ConstraintSet& K, const Vector& x, double t) {
  using GK = NonsmoothTerm::Kind;
  using CK = ConstraintSet::Kind;
  if (K.kind == CK::all_space) return g.prox(x, t);
  if (g.kind == GK::zero) return K.project(x);
  if (g.kind == GK::l1) return K.project(g.prox(x, t));  // KKT: scaled/clipped soft threshold
  if (K.kind == CK::ball) return ConstraintSet::ball(std::min(g.param, K.radius)).project(x);
  Vector y = x, p = Vector::Zero(x.size()), q = Vector::Zero(x.size());
  for (int it = 0; it < 10000; ++it) {
    Vector a = g.prox(y + p, t);
    p = y + p - a;
    Vector b = K.project(a + q);
    q = a + q - b;
    const double change = (b - y).norm();
    y = b;
    if (change <= 1e-15 * (1.0 + y.norm())) break;
  }
  return y;
}

inline Vector prox_g(const NonsmoothTerm& g, const Vector& x, double t) { return g.prox(x, t); }

// ---------------------------------------------------------------------------
// Composite problem
// ---------------------------------------------------------------------------

struct Quadratic {
  Matrix H;
  Vector g;
  double c = 0.0;
};

struct CompositeProblem {
  std::vector<std::shared_ptr<const SmoothLoss>> losses;
  NonsmoothTerm g;
  ConstraintSet K;

  double mu = 0, L = 0;
  double beta = std::numeric_limits<double>::quiet_NaN();
  bool beta_is_lower_bound = false;
  double L_mx = 0, mu_mn = 0, mu_mx = 0, mu_mean = 0;
  std::optional<Quadratic> average;  // set when every f_i is quadratic

  int m() const { return static_cast<int>(losses.size()); }
  int d() const { return losses.front()->dim(); }
  bool beta_known() const { return !std::isnan(beta); }
  bool quadratic() const { return average.has_value(); }
  bool smooth_unconstrained() const {
    return g.kind == NonsmoothTerm::Kind::zero && K.kind == ConstraintSet::Kind::all_space;
  }

  double kappa_g() const { return L / mu; }
  double kappa_l() const { return L_mx / mu_mn; }
  double kappa_hat() const { return L_mx / mu_mean; }
  double kappa_breve() const { return L_mx / mu; }
  double kappa_bar() const { return L_mx / mu_mx; }

  double F(const Vector& x) const {
    if (average) return 0.5 * x.dot(average->H * x) - average->g.dot(x) + average->c;
    double s = 0.0;
    for (const auto& f : losses) s += f->value(x);
    return s / m();
  }
  Vector grad_F(const Vector& x) const {
    if (average) return average->H * x - average->g;
    Vector s = Vector::Zero(x.size());
    for (const auto& f : losses) s += f->gradient(x);
    return s / m();
  }
  Matrix hessian_F(const Vector& x) const {
    if (average) return average->H;
    Matrix s = Matrix::Zero(x.size(), x.size());
    for (const auto& f : losses) s += f->hessian(x);
    return s / m();
  }
  double U(const Vector& x) const {
    if (!K.contains(x, 1e-10)) return kInf;
    return F(x) + g.value(x);
  }
};

inline CompositeProblem make_problem(std::vector<std::shared_ptr<const SmoothLoss>> losses,
                                     NonsmoothTerm g = {}, ConstraintSet K = {}) {
  if (losses.empty()) throw ConfigError("problem needs at least one loss");
  const int d = losses.front()->dim();
  for (const auto& f : losses)
    if (f->dim() != d) throw ConfigError("all losses must share one dimension");
  if (K.kind == ConstraintSet::Kind::box && K.lo.size() != d) throw ConfigError("box dimension mismatch");

  CompositeProblem p;
  p.losses = std::move(losses);
  p.g = g;
  p.K = std::move(K);
  p.L_mx = 0;
  p.mu_mn = kInf;
  p.mu_mx = 0;
  p.mu_mean = 0;
  for (const auto& f : p.losses) {
    p.L_mx = std::max(p.L_mx, f->L());
    p.mu_mn = std::min(p.mu_mn, f->mu());
    p.mu_mx = std::max(p.mu_mx, f->mu());
    p.mu_mean += f->mu() / p.m();
  }
  const bool all_quad = std::all_of(p.losses.begin(), p.losses.end(), [](const auto& f) { return f->is_quadratic(); });
  if (all_quad) {
    Quadratic avg{Matrix::Zero(d, d), Vector::Zero(d), 0.0};
    for (const auto& f : p.losses) {
      const auto& q = static_cast<const QuadraticLoss&>(*f);
      avg.H += q.H() / p.m();
      avg.g += q.g() / p.m();
      avg.c += q.c() / p.m();
    }
    std::tie(p.mu, p.L) = extreme_eigenvalues(avg.H);
    double beta = 0.0;
    for (const auto& f : p.losses)
      beta = std::max(beta, spectral_norm_sym(avg.H - static_cast<const QuadraticLoss&>(*f).H()));
    p.beta = beta;
    p.average = std::move(avg);
  } else {
    // Averages of the per-loss bounds are valid bounds for F.
    double Lsum = 0;
    for (const auto& f : p.losses) Lsum += f->L();
    p.mu = p.mu_mean;
    p.L = Lsum / p.m();
  }
  return p;
}

// ---------------------------------------------------------------------------
// Problem generators
// ---------------------------------------------------------------------------

struct RidgeData {
  int m = 0, n = 0, d = 0;
  double mu0 = 0, L0 = 0;
  std::vector<Matrix> A;
  std::vector<Vector> b;
  Vector x_true;
  Vector spectrum;  // eigenvalues of the feature covariance
};

// Covariance eigenvalues are equispaced over [mu0, L0] (both endpoints included),
// so the population condition number is exactly L0/mu0.
inline RidgeData make_ridge_data(int m, int n, int d, double mu0, double L0, std::uint64_t seed) {
  if (m < 1 || n < 1 || d < 1) throw ConfigError("ridge sizes must be positive");
  if (!(mu0 > 0 && mu0 <= L0)) throw ConfigError("ridge needs 0 < mu0 <= L0");
  RidgeData data{m, n, d, mu0, L0, {}, {}, Vector(d), Vector(d)};
  for (int j = 0; j < d; ++j) data.spectrum(j) = d == 1 ? mu0 : mu0 + (L0 - mu0) * j / (d - 1.0);

  auto rng = make_rng(seed, Stream::problem, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix G(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) G(i, j) = normal(rng);
  Matrix U = Eigen::HouseholderQR<Matrix>(G).householderQ();
  Matrix root = U * data.spectrum.cwiseSqrt().asDiagonal();  // Sigma = root root^T
  for (int j = 0; j < d; ++j) data.x_true(j) = 5.0 + normal(rng);

  const double noise_sd = std::sqrt(0.1);
  for (int i = 0; i < m; ++i) {
    auto r = make_rng(seed, Stream::problem, static_cast<std::uint64_t>(i) + 1);
    Matrix Z(n, d);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < d; ++j) Z(k, j) = normal(r);
    Matrix A = Z * root.transpose();
    Vector noise(n);
    for (int k = 0; k < n; ++k) noise(k) = noise_sd * normal(r);
    data.b.push_back(A * data.x_true + noise);
    data.A.push_back(std::move(A));
  }
  return data;
}

// f_i(x) = ||A_i x - b_i||^2 / (2n) + lambda ||x||^2, so H_i = A_i^T A_i / n + 2 lambda I.
inline CompositeProblem make_ridge_problem(const RidgeData& data, double lambda) {
  if (lambda < 0) throw ConfigError("ridge lambda must be nonnegative");
  std::vector<std::shared_ptr<const SmoothLoss>> losses;
  const double n = static_cast<double>(data.n);
  for (int i = 0; i < data.m; ++i) {
    const Matrix& A = data.A[i];
    Matrix H = A.transpose() * A / n + 2.0 * lambda * Matrix::Identity(data.d, data.d);
    Vector g = A.transpose() * data.b[i] / n;
    losses.push_back(std::make_shared<QuadraticLoss>(std::move(H), std::move(g), data.b[i].squaredNorm() / (2.0 * n)));
  }
  auto p = make_problem(std::move(losses));
  if (!(p.mu > 1e-10 * p.L))
    throw ConfigError("average Hessian is singular; lambda = 0 needs n*m >= d and full-rank data");
  return p;
}

inline CompositeProblem make_ridge_problem(int m, int n, int d, double lambda, double mu0, double L0,
                                           std::uint64_t seed) {
  return make_ridge_problem(make_ridge_data(m, n, d, mu0, L0, seed), lambda);
}

// FNV-1a over the raw bytes of every (A_i, b_i).
inline std::uint64_t dataset_hash(const RidgeData& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < static_cast<std::size_t>(n) * sizeof(double); ++k) {
      h ^= bytes[k];
      h *= 1099511628211ULL;
    }
  };
  for (int i = 0; i < data.m; ++i) {
    mix(data.A[i].data(), data.A[i].size());
    mix(data.b[i].data(), data.b[i].size());
  }
  return h;
}

// f_i(x) = 1/2 x^T (a I + m b diag(e_i)) x.
inline CompositeProblem make_example1_problem(double a, double b, int m, int d) {
  if (!(a > 0) || b < 0) throw ConfigError("example 1 needs a > 0 and b >= 0");
  if (d < m) throw ConfigError("example 1 needs d >= m");
  std::vector<std::shared_ptr<const SmoothLoss>> losses;
  for (int i = 0; i < m; ++i) {
    Matrix H = a * Matrix::Identity(d, d);
    H(i, i) += m * b;
    losses.push_back(std::make_shared<QuadraticLoss>(std::move(H), Vector::Zero(d)));
  }
  return make_problem(std::move(losses));
}

// Logistic regression on Gaussian features with labels from a random linear model.
inline CompositeProblem make_logistic_problem(int m, int n, int d, double lambda, std::uint64_t seed) {
  if (!(lambda > 0)) throw ConfigError("logistic problem needs lambda > 0 for strong convexity");
  auto rng0 = make_rng(seed, Stream::problem, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(d);
  for (int j = 0; j < d; ++j) w(j) = normal(rng0);
  std::vector<std::shared_ptr<const SmoothLoss>> losses;
  for (int i = 0; i < m; ++i) {
    auto r = make_rng(seed, Stream::problem, static_cast<std::uint64_t>(i) + 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix A(n, d);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < d; ++j) A(k, j) = normal(r);
    Vector b(n);
    for (int k = 0; k < n; ++k) {
      const double pr = 1.0 / (1.0 + std::exp(-A.row(k).dot(w)));
      b(k) = unif(r) < pr ? 1.0 : -1.0;
    }
    losses.push_back(std::make_shared<LogisticLoss>(std::move(A), std::move(b), lambda));
  }
  return make_problem(std::move(losses));
}

// ---------------------------------------------------------------------------
// Similarity parameter
// ---------------------------------------------------------------------------

struct BetaEstimate {
  double value = 0.0;
  bool lower_bound = false;  // true when obtained by sampling
};

inline BetaEstimate estimate_beta(const CompositeProblem& p, int sample_points = 32, std::uint64_t seed = 0) {
  if (p.quadratic()) {
    double beta = 0.0;
    for (const auto& f : p.losses) beta = std::max(beta, spectral_norm_sym(p.average->H - f->hessian(Vector())));
    return {beta, false};
  }
  for (const auto& f : p.losses)
    if (!f->has_hessian()) throw CapabilityError("estimate_beta needs Hessians");
  if (sample_points < 1) throw CapabilityError("estimate_beta needs sampling for non-quadratic losses");
  auto rng = make_rng(seed, Stream::sampling);
  std::normal_distribution<double> normal(0.0, 1.0);
  double beta = 0.0;
  for (int s = 0; s < sample_points; ++s) {
    Vector x(p.d());
    for (int j = 0; j < p.d(); ++j) x(j) = normal(rng);
    x = p.K.project(x);
    std::vector<Matrix> Hs;
    Matrix Havg = Matrix::Zero(p.d(), p.d());
    for (const auto& f : p.losses) {
      Hs.push_back(f->hessian(x));
      Havg += Hs.back() / p.m();
    }
    for (const auto& H : Hs) beta = std::max(beta, spectral_norm_sym(Havg - H));
  }
  return {beta, true};
}

inline void set_beta(CompositeProblem& p, const BetaEstimate& b) {
  p.beta = b.value;
  p.beta_is_lower_bound = b.lower_bound;
}

// ---------------------------------------------------------------------------
// Centralized oracle
// ---------------------------------------------------------------------------

struct Solution {
  Vector x_star;
  double U_star = 0.0;
  int iterations = 0;
};

// Restarted FISTA on F + G + indicator(K) with step 1/L; stops when the
// gradient-mapping norm falls below tol (1 + ||grad F(x)||).
inline Solution centralized_solution(const CompositeProblem& p, double tol = 1e-12, int max_iters = 2000000) {
  const int d = p.d();
  if (p.quadratic() && p.smooth_unconstrained()) {
    Vector x = p.average->H.ldlt().solve(p.average->g);
    return {x, p.U(x), 0};
  }
  const double step = 1.0 / p.L;
  Vector x = p.K.project(Vector::Zero(d));
  Vector y = x;
  double t = 1.0;
  double fx = p.U(x);
  bool restarted = false;
  for (int it = 1; it <= max_iters; ++it) {
    const Vector gy = p.grad_F(y);
    Vector xn = prox_gk(p.g, p.K, y - step * gy, step);
    const double res = (xn - y).norm() / step;
    const double fn = p.U(xn);
    if (fn > fx && !restarted) {  // adaptive restart; a plain step from x is always accepted
      t = 1.0;
      y = x;
      restarted = true;
      continue;
    }
    restarted = false;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xn + ((t - 1.0) / tn) * (xn - x);
    x = std::move(xn);
    fx = fn;
    t = tn;
    if (res <= tol * (1.0 + gy.norm())) return {x, fx, it};
  }
  Vector gm = (x - prox_gk(p.g, p.K, x - step * p.grad_F(x), step)) / step;
  throw ConvergenceError("centralized solver did not converge", gm.norm());
}

// U(x) - U*, evaluated without cancellation for unconstrained quadratics.
inline double optimality_gap(const CompositeProblem& p, const Solution& s, const Vector& x) {
  if (p.quadratic() && p.smooth_unconstrained()) {
    Vector e = x - s.x_star;
    return 0.5 * e.dot(p.average->H * e);
  }
  return p.U(x) - s.U_star;
}

}  // namespace sonata
