#pragma once

// Covariance splitting, complexity functionals and the risk-bound formulas.

#include "moreau/common.hpp"
#include "moreau/envelope.hpp"
#include "moreau/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace moreau {

// ---------------------------------------------------------------------------
// Covariance split

struct CovSplit {
  std::vector<Vector> wstars;  // Sigma-orthonormal
  Matrix Sigma;
  Matrix Q;          // I - sum_i w_i w_i^T Sigma
  Matrix SigmaPerp;  // Q^T Sigma Q
  int k = 0;
};

namespace detail {

// Gram-Schmidt in the <u, v>_Sigma = u^T Sigma v inner product, given Sigma v as a callable.
template <class Apply>
std::vector<Vector> sigma_orthonormalize(const std::vector<Vector>& raw, Apply&& sigma_apply) {
  std::vector<Vector> out;
  for (const auto& r : raw) {
    Vector v = r;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : out) v -= u.dot(sigma_apply(v)) * u;
    const double nrm2 = v.dot(sigma_apply(v));
    const double ref = r.dot(sigma_apply(r));
    require(nrm2 > 1e-24 * std::max(1.0, ref),
            "build_cov_split: directions are rank deficient in the Sigma geometry");
    out.push_back(v / std::sqrt(nrm2));
  }
  return out;
}

}  // namespace detail

inline CovSplit build_cov_split(const std::vector<Vector>& raw_dirs, const Matrix& Sigma) {
  require(Sigma.rows() == Sigma.cols(), "build_cov_split: Sigma must be square");
  const Eigen::Index d = Sigma.rows();
  for (const auto& v : raw_dirs) require(v.size() == d, "build_cov_split: dimension mismatch");
  CovSplit s;
  s.Sigma = Sigma;
  s.wstars = detail::sigma_orthonormalize(raw_dirs, [&](const Vector& v) -> Vector { return Sigma * v; });
  s.k = static_cast<int>(s.wstars.size());
  s.Q = Matrix::Identity(d, d);
  for (const auto& w : s.wstars) s.Q.noalias() -= w * (Sigma * w).transpose();
  s.SigmaPerp = s.Q.transpose() * Sigma * s.Q;
  s.SigmaPerp = 0.5 * (s.SigmaPerp + s.SigmaPerp.transpose());
  return s;
}

/// (<w, Sigma w_1>, ..., <w, Sigma w_k>, ||Sigma^{1/2} Q w||).
inline Vector phi(const CovSplit& split, const Vector& w) {
  require(w.size() == split.Sigma.rows(), "phi: dimension mismatch");
  Vector out(split.k + 1);
  const Vector Sw = split.Sigma * w;
  for (int i = 0; i < split.k; ++i) out(i) = split.wstars[i].dot(Sw);
  const Vector Qw = split.Q * w;
  out(split.k) = std::sqrt(std::max(0.0, Qw.dot(split.Sigma * Qw)));
  return out;
}

struct EffectiveRanks {
  double r = 0.0;  // Tr / ||.||_op
  double R = 0.0;  // Tr^2 / Tr(.^2)
};

inline EffectiveRanks effective_ranks_from_eigs(const Vector& eigs) {
  const double tr = eigs.sum();
  const double op = eigs.maxCoeff();
  const double tr2 = eigs.squaredNorm();
  require(op > 0 && tr2 > 0, "effective_ranks: zero matrix");
  return {tr / op, tr * tr / tr2};
}

inline EffectiveRanks effective_ranks(const Matrix& Sigma) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(Sigma, Eigen::EigenvaluesOnly);
  return effective_ranks_from_eigs(es.eigenvalues().cwiseMax(0.0));
}

/// Spectral statistics of Sigma_perp = Sigma - (Sigma W)(Sigma W)^T without forming it.
struct PerpStats {
  double trace = 0.0;
  double trace_sq = 0.0;  // Tr(Sigma_perp^2)
  double op_norm = 0.0;
  EffectiveRanks ranks() const {
    require(op_norm > 0 && trace_sq > 0, "perp stats: zero matrix");
    return {trace / op_norm, trace * trace / trace_sq};
  }
};

inline PerpStats perp_stats(const CovarianceSpec& cov, const std::vector<Vector>& raw_dirs) {
  const Eigen::Index d = cov.dim();
  const auto W = detail::sigma_orthonormalize(raw_dirs, [&](const Vector& v) { return cov.apply(v); });
  const auto k = static_cast<Eigen::Index>(W.size());
  Matrix M(d, k);
  for (Eigen::Index i = 0; i < k; ++i) M.col(i) = cov.apply(W[i]);
  auto apply_perp = [&](const Vector& v) -> Vector {
    return cov.apply(v) - M * (M.transpose() * v);
  };

  PerpStats ps;
  ps.trace = cov.trace() - M.squaredNorm();
  // Tr((S - MM^T)^2) = Tr S^2 - 2 Tr(M^T S M) + ||M^T M||_F^2
  double tr_mSm = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) tr_mSm += M.col(i).dot(cov.apply(M.col(i)));
  ps.trace_sq = cov.eigs.squaredNorm() - 2.0 * tr_mSm + (M.transpose() * M).squaredNorm();

  // Operator norm by power iteration with a Rayleigh-quotient stopping rule.
  Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
  for (Eigen::Index j = 0; j < d; ++j) v(j) *= 1.0 + 1e-3 * static_cast<double>(j % 7);
  v.normalize();
  double rq = 0.0;
  for (int it = 0; it < 20000; ++it) {
    Vector u = apply_perp(v);
    const double nrm = u.norm();
    if (nrm == 0.0) break;
    const double rq_new = v.dot(u);
    v = u / nrm;
    if (it > 10 && std::abs(rq_new - rq) <= 1e-14 * std::abs(rq_new)) {
      rq = rq_new;
      break;
    }
    rq = rq_new;
  }
  ps.op_norm = rq;
  return ps;
}

// ---------------------------------------------------------------------------
// Complexity functionals

inline double c_delta_ball(double norm_w, double trace_perp, double op_perp, double delta) {
  require(delta > 0 && delta < 1, "c_delta_ball: delta must be in (0, 1)");
  require(norm_w >= 0 && trace_perp >= 0 && op_perp >= 0, "c_delta_ball: negative input");
  return norm_w * (std::sqrt(trace_perp) + 2.0 * std::sqrt(op_perp * std::log(8.0 / delta)));
}

inline double c_delta_ball(double norm_w, const Matrix& SigmaPerp, double delta) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(SigmaPerp, Eigen::EigenvaluesOnly);
  return c_delta_ball(norm_w, SigmaPerp.trace(), std::max(0.0, es.eigenvalues().maxCoeff()), delta);
}

/// sqrt(||w||^2 Tr(Sigma_perp) / n), already divided by sqrt(n).
inline double c_simple(double norm_w, double trace_perp, double n) {
  require(n >= 1, "c_simple: n must be >= 1");
  return std::sqrt(norm_w * norm_w * std::max(0.0, trace_perp) / n);
}

/// sqrt(d / n) ||Qw||, already divided by sqrt(n).
inline double c_isotropic(double norm_Qw, double d, double n) {
  require(n >= 1, "c_isotropic: n must be >= 1");
  return std::sqrt(d / n) * norm_Qw;
}

/// (1 / (n B)) sum_k ||sum_i s_{k,i} (XQ)_i||_inf, given XQ = X Q (rows Q^T x_i).
inline double rademacher_linf_mc(const Matrix& XQ, int B_reps, std::uint64_t seed) {
  require(B_reps >= 1, "rademacher_linf_mc: need at least one replicate");
  const Eigen::Index n = XQ.rows();
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  Matrix S(B_reps, n);
  for (Eigen::Index r = 0; r < B_reps; ++r)
    for (Eigen::Index i = 0; i < n; ++i) S(r, i) = coin(rng) ? 1.0 : -1.0;
  const Matrix M = S * XQ;
  const double total = M.cwiseAbs().rowwise().maxCoeff().sum();
  return total / (static_cast<double>(n) * B_reps);
}

inline double rademacher_linf_mc(const Matrix& X, const Matrix& Q, int B_reps, std::uint64_t seed) {
  require(X.cols() == Q.rows(), "rademacher_linf_mc: dimension mismatch");
  return rademacher_linf_mc(Matrix(X * Q), B_reps, seed);
}

/// 1 - 8 tau sqrt((h (log(2n/h) + 1) + log(48/delta)) / n). Nonpositive means vacuous.
inline double vc_correction(double tau, double h, double n, double delta) {
  require(n > h && h >= 1, "vc_correction: need n > h >= 1");
  require(tau >= 0, "vc_correction: tau must be nonnegative");
  require(delta > 0 && delta < 1, "vc_correction: delta must be in (0, 1)");
  return 1.0 - 8.0 * tau * std::sqrt((h * (std::log(2.0 * n / h) + 1.0) + std::log(48.0 / delta)) / n);
}

// ---------------------------------------------------------------------------
// Bounds

inline double optimistic_bound(double train_loss, double C, double n, double correction = 1.0) {
  require(correction > 0 && correction <= 1, "optimistic_bound: correction must be in (0, 1]");
  require(C >= 0 && train_loss >= 0 && n >= 1, "optimistic_bound: invalid input");
  return sq(std::sqrt(train_loss) + C / std::sqrt(n)) / correction;
}

inline double lipschitz_bound(double train_loss, double M, double C, double n) {
  require(M >= 0 && n >= 1, "lipschitz_bound: invalid input");
  return train_loss + M * std::sqrt(C * C / n);
}

inline double smooth_interpolator_bound(double H, double C, double n) {
  require(H >= 0 && n >= 1, "smooth_interpolator_bound: invalid input");
  return 0.5 * H * C * C / n;
}

inline double summary_functional_psi(double test_loss_a, double complexity_b) {
  return optimize_lambda_square_family(test_loss_a, complexity_b);
}

struct BoundReport {
  double complexity_C = 0.0;
  double bound_value = 0.0;
  double correction = 1.0;
  double delta = 0.05;
  std::string kind;
};

inline double norm_bound_B2(double norm_wsharp_sq, double n, double trace_perp, double L_sharp,
                            double rho1, double rho2) {
  require(trace_perp > 0, "norm_bound_B2: trace must be positive");
  require(rho2 >= 0 && rho2 < 1, "norm_bound_B2: rho2 must be in [0, 1)");
  return norm_wsharp_sq + (1.0 + rho2) * (n / trace_perp) * (L_sharp + rho1);
}

struct BenignConditions {
  double c1 = 0.0;  // n / R(Sigma_perp)
  double c2 = 0.0;  // ||w#||^2 Tr(Sigma_perp) / n
  double c3 = 0.0;  // k / n
  double rho3 = 0.0;
};

inline BenignConditions benign_conditions(const PerpStats& perp, double n, double norm_wsharp_sq,
                                          int k, double rho2 = 0.0, double delta = 0.05) {
  require(n >= 1, "benign_conditions: n must be >= 1");
  const auto rk = perp.ranks();
  BenignConditions c;
  c.c1 = n / rk.R;
  c.c2 = norm_wsharp_sq * perp.trace / n;
  c.c3 = static_cast<double>(k) / n;
  c.rho3 = (1.0 + rho2) * sq(1.0 + 2.0 * std::sqrt(std::log(2.0 / delta) / rk.r)) - 1.0;
  return c;
}

inline BenignConditions benign_conditions(const Matrix& SigmaPerp, double n, double norm_wsharp_sq,
                                          int k, double rho2 = 0.0, double delta = 0.05) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(SigmaPerp, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues().cwiseMax(0.0);
  PerpStats ps{ev.sum(), ev.squaredNorm(), ev.maxCoeff()};
  return benign_conditions(ps, n, norm_wsharp_sq, k, rho2, delta);
}

inline double ols_psi_excess(double sigma_sq, double d, double n) {
  require(d < n, "ols_psi_excess: need d < n");
  const double g = d / n;
  return sigma_sq * g / (1.0 - g);
}

// ---------------------------------------------------------------------------
// Local Gaussian width over an l2 ball

namespace detail {

// Maximizer of <u, x> over u with W^T Sigma u = 0, u^T Sigma u <= r^2 and
// ||wp + u||^2 <= B^2, everything expressed in the eigenbasis of Sigma.
struct WidthSolver {
  Vector s;   // eigenvalues of Sigma
  Matrix SW;  // Sigma W in the eigenbasis (d x k)
  Vector wp;  // w_parallel in the eigenbasis
  double r = 0.0;
  double B = 0.0;  // +inf allowed
  double tol = 1e-9;

  Vector u_of(const Vector& x, double a, double b) const {
    const Vector g = (2.0 * a * s.array() + 2.0 * b).inverse();
    const Vector base = x - 2.0 * b * wp;
    if (SW.cols() == 0) return g.cwiseProduct(base);
    const Matrix G_SW = g.asDiagonal() * SW;
    const Matrix A = SW.transpose() * G_SW;
    const Vector mu = A.ldlt().solve(SW.transpose() * g.cwiseProduct(base));
    return g.cwiseProduct(base) - G_SW * mu;
  }

  double mahal(const Vector& u) const { return u.dot(s.cwiseProduct(u)); }

  // Smallest alpha >= 0 with u^T Sigma u <= r^2 at fixed beta.
  Vector solve_alpha(const Vector& x, double b) const {
    const double r2 = r * r;
    if (b == 0) {
      // u(alpha) = u(1) / alpha when beta = 0
      const Vector u1 = u_of(x, 1.0, 0.0);
      const double m1 = mahal(u1);
      return m1 > 0 ? Vector(u1 * (r / std::sqrt(m1))) : u1;
    }
    Vector u0 = u_of(x, 0.0, b);
    if (mahal(u0) <= r2) return u0;
    double lo = 0.0, hi = 1.0;
    while (mahal(u_of(x, hi, b)) > r2) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mahal(u_of(x, mid, b)) > r2) lo = mid; else hi = mid;
    }
    return u_of(x, hi, b);
  }

  double value(const Vector& x) const {
    if (r <= 0) return 0.0;
    Vector u = solve_alpha(x, 0.0);
    if (!std::isfinite(B) || (wp + u).squaredNorm() <= B * B) return u.dot(x);
    double lo = 0.0, hi = 1.0;
    while ((wp + solve_alpha(x, hi)).squaredNorm() > B * B) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((wp + solve_alpha(x, mid)).squaredNorm() > B * B) lo = mid; else hi = mid;
    }
    return solve_alpha(x, hi).dot(x);
  }
};

}  // namespace detail

/// Monte Carlo estimate of E_x sup{<Qv, x> : v_par = w_par, ||Sigma^{1/2} Q v|| <= r_w, ||v|| <= B}
/// with x ~ N(0, Sigma). B may be +infinity when Sigma is positive definite.
inline double local_gaussian_width_l2(const CovSplit& split, const Vector& w_parallel, double r_w,
                                      double B, int mc_samples, std::uint64_t seed) {
  require(mc_samples >= 1, "local_gaussian_width_l2: mc_samples must be >= 1");
  require(r_w >= 0, "local_gaussian_width_l2: r_w must be nonnegative");
  const Eigen::Index d = split.Sigma.rows();
  require(w_parallel.size() == d, "local_gaussian_width_l2: dimension mismatch");
  require(!(B * B < w_parallel.squaredNorm() * (1.0 - 1e-12)),
          "local_gaussian_width_l2: infeasible fiber (B < ||w_parallel||)");
  if (r_w == 0.0) return 0.0;

  Eigen::SelfAdjointEigenSolver<Matrix> es(split.Sigma);
  const Matrix& V = es.eigenvectors();
  detail::WidthSolver ws;
  ws.s = es.eigenvalues().cwiseMax(0.0);
  if (!std::isfinite(B))
    require(ws.s.minCoeff() > 0, "local_gaussian_width_l2: B = inf needs positive definite Sigma");
  ws.SW.resize(d, split.k);
  for (int i = 0; i < split.k; ++i) ws.SW.col(i) = V.transpose() * (split.Sigma * split.wstars[i]);
  ws.wp = V.transpose() * w_parallel;
  ws.r = r_w;
  ws.B = B;

  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Vector sd = ws.s.cwiseSqrt();
  double total = 0.0;
  Vector x(d);
  for (int m = 0; m < mc_samples; ++m) {
    for (Eigen::Index j = 0; j < d; ++j) x(j) = sd(j) * nd(rng);  // N(0, Sigma) in the eigenbasis
    total += ws.value(x);
  }
  return total / mc_samples;
}

}  // namespace moreau
