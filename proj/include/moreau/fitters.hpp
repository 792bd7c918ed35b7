#pragma once

// Regularization paths and interpolators for linear predictors x -> <w, x> + b.
// The intercept is never penalized.

#include "moreau/common.hpp"
#include "moreau/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <variant>
#include <vector>

namespace moreau {

struct FitResult {
  Vector w;
  double b = 0.0;
  double train_loss = 0.0;
  int iterations = 0;
  bool converged = true;
  // constrained_erm: Frank-Wolfe duality gap at the returned point.
  double gap_estimate = 0.0;
  // min_l1_interpolator: ||y - Xw - b||_inf and whether it is below the feasibility tolerance.
  double residual_inf = 0.0;
  bool feasible = true;
};

struct RegPath {
  std::vector<double> reg_values;
  std::vector<Vector> coefficients;
  std::vector<double> intercepts;
  std::vector<double> train_losses;
  std::vector<double> norms_l1;
  std::vector<double> norms_l2;
  std::vector<int> iterations;
  std::vector<bool> converged;

  std::size_t size() const { return reg_values.size(); }

  void push(double reg, const FitResult& f) {
    reg_values.push_back(reg);
    coefficients.push_back(f.w);
    intercepts.push_back(f.b);
    train_losses.push_back(f.train_loss);
    norms_l1.push_back(f.w.lpNorm<1>());
    norms_l2.push_back(f.w.norm());
    iterations.push_back(f.iterations);
    converged.push_back(f.converged);
  }

  FitResult at(std::size_t i) const {
    FitResult f;
    f.w = coefficients[i];
    f.b = intercepts[i];
    f.train_loss = train_losses[i];
    f.iterations = iterations[i];
    f.converged = converged[i];
    return f;
  }
};

namespace detail {

inline void check_design(const Matrix& X, const Vector& y) {
  require(X.rows() >= 1 && X.cols() >= 1, "fit: design must be nonempty");
  require(X.rows() == y.size(), "fit: X rows must equal length of y");
}

inline double mean_square_loss(const Matrix& X, const Vector& y, const Vector& w, double b) {
  return ((y - X * w).array() - b).square().mean();
}

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

struct Centered {
  Matrix X;
  Vector y;
  Eigen::RowVectorXd x_mean;
  double y_mean = 0.0;
};

inline Centered center(const Matrix& X, const Vector& y, bool fit_intercept) {
  Centered c;
  if (fit_intercept) {
    c.x_mean = X.colwise().mean();
    c.y_mean = y.mean();
    c.X = X.rowwise() - c.x_mean;
    c.y = y.array() - c.y_mean;
  } else {
    c.x_mean = Eigen::RowVectorXd::Zero(X.cols());
    c.X = X;
    c.y = y;
  }
  return c;
}

}  // namespace detail

/// n log-spaced values from hi down to lo.
inline std::vector<double> log_grid(double hi, double lo, int count) {
  require(hi > 0 && lo > 0 && count >= 1, "log_grid: bounds must be positive");
  std::vector<double> g(static_cast<std::size_t>(count));
  if (count == 1) {
    g[0] = hi;
    return g;
  }
  const double a = std::log(hi), b = std::log(lo);
  for (int i = 0; i < count; ++i) g[i] = std::exp(a + (b - a) * i / (count - 1));
  return g;
}

// ---------------------------------------------------------------------------
// Ridge

/// Minimizes ||y - Xw - b||^2 / n + reg ||w||^2 for every reg in the grid from one SVD.
inline RegPath ridge_path(const Matrix& X, const Vector& y, const std::vector<double>& reg_grid,
                          bool fit_intercept) {
  detail::check_design(X, y);
  for (double r : reg_grid) require(r > 0, "ridge_path: grid values must be positive");
  const auto c = detail::center(X, y, fit_intercept);
  const double n = static_cast<double>(X.rows());
  Eigen::BDCSVD<Matrix> svd(c.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  const Vector uty = svd.matrixU().transpose() * c.y;

  RegPath path;
  for (double reg : reg_grid) {
    const Vector shrink = s.array() / (s.array().square() + n * reg);
    FitResult f;
    f.w = svd.matrixV() * shrink.cwiseProduct(uty);
    f.b = fit_intercept ? c.y_mean - c.x_mean.dot(f.w) : 0.0;
    f.train_loss = detail::mean_square_loss(X, y, f.w, f.b);
    path.push(reg, f);
  }
  return path;
}

/// 50 log-spaced values from ||X^T y_c||_inf / n down to ratio times that.
inline std::vector<double> default_ridge_grid(const Matrix& X, const Vector& y, bool fit_intercept,
                                              int count = 50, double ratio = 1e-6) {
  detail::check_design(X, y);
  const auto c = detail::center(X, y, fit_intercept);
  double hi = (c.X.transpose() * c.y).lpNorm<Eigen::Infinity>() / static_cast<double>(X.rows());
  if (!(hi > 0)) hi = 1.0;
  return log_grid(hi, hi * ratio, count);
}

/// w = X^+ y (on centered data when fitting an intercept).
inline FitResult min_norm_least_squares(const Matrix& X, const Vector& y, bool fit_intercept = false) {
  detail::check_design(X, y);
  const auto c = detail::center(X, y, fit_intercept);
  FitResult f;
  f.w = c.X.completeOrthogonalDecomposition().solve(c.y);
  f.b = fit_intercept ? c.y_mean - c.x_mean.dot(f.w) : 0.0;
  f.train_loss = detail::mean_square_loss(X, y, f.w, f.b);
  return f;
}

// ---------------------------------------------------------------------------
// LASSO

struct LassoOptions {
  double tol = 1e-7;  // max coefficient change over a full sweep
  int max_iter = 10000;
};

namespace detail {

// Cyclic coordinate descent on (1/2n)||y - Xw||^2 + alpha ||w||_1 for centered
// data, warm-started at w. Residual r = y - Xw is maintained in place.
inline std::pair<int, bool> lasso_cd(const Matrix& X, const Vector& col_sq, double alpha,
                                     const LassoOptions& opt, Vector& w, Vector& r) {
  const Eigen::Index d = X.cols();
  const double n = static_cast<double>(X.rows());
  auto update = [&](Eigen::Index j) {
    if (col_sq(j) == 0.0) {
      w(j) = 0.0;
      return 0.0;
    }
    const double old = w(j);
    const double z = X.col(j).dot(r) / n + col_sq(j) * old;
    const double nw = soft_threshold(z, alpha) / col_sq(j);
    if (nw != old) {
      r.noalias() -= (nw - old) * X.col(j);
      w(j) = nw;
    }
    return std::abs(nw - old);
  };

  int sweeps = 0;
  std::vector<Eigen::Index> active;
  while (sweeps < opt.max_iter) {
    // Full sweep over all coordinates; it decides convergence.
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) max_change = std::max(max_change, update(j));
    ++sweeps;
    if (max_change < opt.tol) return {sweeps, true};

    active.clear();
    for (Eigen::Index j = 0; j < d; ++j)
      if (w(j) != 0.0) active.push_back(j);
    while (sweeps < opt.max_iter) {
      double change = 0.0;
      for (auto j : active) change = std::max(change, update(j));
      ++sweeps;
      if (change < opt.tol) break;
    }
  }
  return {sweeps, false};
}

}  // namespace detail

inline double lasso_alpha_max(const Matrix& X, const Vector& y, bool fit_intercept) {
  const auto c = detail::center(X, y, fit_intercept);
  return (c.X.transpose() * c.y).lpNorm<Eigen::Infinity>() / static_cast<double>(X.rows());
}

inline std::vector<double> default_lasso_grid(const Matrix& X, const Vector& y, bool fit_intercept,
                                              int count = 50, double ratio = 1e-4) {
  detail::check_design(X, y);
  double hi = lasso_alpha_max(X, y, fit_intercept);
  if (!(hi > 0)) hi = 1.0;
  return log_grid(hi, hi * ratio, count);
}

/// Minimizes (1/2n)||y - Xw - b||^2 + alpha ||w||_1 along a descending grid with warm starts.
inline RegPath lasso_path(const Matrix& X, const Vector& y, const std::vector<double>& alpha_grid,
                          bool fit_intercept, const LassoOptions& opt = {},
                          const Vector* warm_start = nullptr) {
  detail::check_design(X, y);
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    require(alpha_grid[i] > 0, "lasso_path: grid values must be positive");
    require(i == 0 || alpha_grid[i] <= alpha_grid[i - 1], "lasso_path: grid must be descending");
  }
  const auto c = detail::center(X, y, fit_intercept);
  const double n = static_cast<double>(X.rows());
  const Vector col_sq = c.X.colwise().squaredNorm().transpose() / n;
  Vector w = warm_start ? *warm_start : Vector::Zero(X.cols());
  require(w.size() == X.cols(), "lasso_path: warm start has wrong dimension");
  Vector r = c.y - c.X * w;

  RegPath path;
  for (double alpha : alpha_grid) {
    auto [it, ok] = detail::lasso_cd(c.X, col_sq, alpha, opt, w, r);
    FitResult f;
    f.w = w;
    f.b = fit_intercept ? c.y_mean - c.x_mean.dot(w) : 0.0;
    f.train_loss = detail::mean_square_loss(X, y, f.w, f.b);
    f.iterations = it;
    f.converged = ok;
    path.push(alpha, f);
  }
  return path;
}

/// Basis-pursuit approximation: the LASSO path continued down to alpha = continuation_floor.
inline FitResult min_l1_interpolator(const Matrix& X, const Vector& y, double continuation_floor,
                                     bool fit_intercept = false, int steps = 60,
                                     double feasibility_tol = -1.0) {
  detail::check_design(X, y);
  require(continuation_floor > 0, "min_l1_interpolator: floor must be positive");
  const double hi = lasso_alpha_max(X, y, fit_intercept);
  FitResult f;
  if (!(hi > 0)) {
    f.w = Vector::Zero(X.cols());
    f.b = fit_intercept ? y.mean() : 0.0;
    f.train_loss = detail::mean_square_loss(X, y, f.w, f.b);
    f.residual_inf = ((y - X * f.w).array() - f.b).abs().maxCoeff();
    return f;
  }
  const double lo = std::min(continuation_floor, hi);
  LassoOptions opt;
  opt.tol = std::min(1e-7, continuation_floor * 1e-2);
  opt.max_iter = 100000;
  const auto path = lasso_path(X, y, log_grid(hi, lo, steps), fit_intercept, opt);
  f = path.at(path.size() - 1);
  f.residual_inf = ((y - X * f.w).array() - f.b).abs().maxCoeff();
  const double ftol =
      feasibility_tol > 0 ? feasibility_tol : 1e-3 * std::max(1.0, y.lpNorm<Eigen::Infinity>());
  f.feasible = f.residual_inf <= ftol;
  return f;
}

// ---------------------------------------------------------------------------
// Squared hinge

struct L2Penalty {
  double lambda = 0.0;
};
struct L1Penalty {
  double alpha = 0.0;
};
using Penalty = std::variant<L2Penalty, L1Penalty>;

struct SqHingeOptions {
  double tol = 1e-6;
  int max_iter = 1000;      // Newton iterations (L2)
  int max_iter_l1 = 20000;  // proximal gradient iterations (L1)
};

namespace detail {

inline void check_labels_pm1(const Vector& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    require(y(i) == 1.0 || y(i) == -1.0, "squared hinge: labels must be in {-1, +1}");
}

inline double sq_hinge_mean(const Vector& y, const Vector& f) {
  return (1.0 - y.array() * f.array()).max(0.0).square().mean();
}

// L2 solver in representer coordinates w = X^T a with Gram matrix K = X X^T.
// Each iteration solves the ridge problem restricted to the current margin
// violators and backtracks along the resulting direction.
inline FitResult sq_hinge_l2(const Matrix& X, const Matrix& K, const Vector& y, double lambda,
                             bool fit_intercept, const SqHingeOptions& opt, Vector& alpha,
                             double& b) {
  const Eigen::Index n = X.rows();
  const double nd = static_cast<double>(n);
  auto objective = [&](const Vector& Ka, double bb, const Vector& a) {
    return sq_hinge_mean(y, Ka.array() + bb) + lambda * a.dot(Ka);
  };

  Vector Ka = K * alpha;
  double F = objective(Ka, b, alpha);
  FitResult res;
  res.converged = false;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const Vector m = 1.0 - y.array() * (Ka.array() + b);
    Vector v = Vector::Zero(n);
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < n; ++i)
      if (m(i) > 0) {
        v(i) = -2.0 / nd * y(i) * m(i);
        act.push_back(i);
      }
    const Vector g = v + 2.0 * lambda * alpha;  // w-gradient is X^T g
    const Vector Kg = K * g;
    const double db = fit_intercept ? v.sum() : 0.0;
    const double gnorm = std::sqrt(std::max(0.0, g.dot(Kg)) + db * db);
    if (gnorm <= opt.tol) {
      res.converged = true;
      break;
    }

    Vector da;
    double dbeta = 0.0;
    const auto na = static_cast<Eigen::Index>(act.size());
    if (na > 0) {
      const Eigen::Index m_sz = na + (fit_intercept ? 1 : 0);
      Matrix A = Matrix::Zero(m_sz, m_sz);
      Vector rhs(m_sz);
      for (Eigen::Index p = 0; p < na; ++p) {
        for (Eigen::Index q = 0; q < na; ++q) A(p, q) = K(act[p], act[q]);
        A(p, p) += nd * lambda;
        rhs(p) = y(act[p]);
      }
      if (fit_intercept) {
        A.block(0, na, na, 1).setOnes();
        A.block(na, 0, 1, na).setOnes();
        rhs(na) = 0.0;
      }
      const Vector sol = A.completeOrthogonalDecomposition().solve(rhs);
      Vector target = Vector::Zero(n);
      for (Eigen::Index p = 0; p < na; ++p) target(act[p]) = sol(p);
      da = target - alpha;
      if (fit_intercept) dbeta = sol(na) - b;  // last unknown is the new intercept
    } else {
      da = -alpha;
      dbeta = 0.0;
    }
    double slope = g.dot(K * da) + db * dbeta;
    if (!(slope < -1e-14 * (1.0 + std::abs(F)))) {
      da = -g;
      dbeta = -db;
      slope = -(g.dot(Kg) + db * db);
    }

    double t = 1.0;
    bool accepted = false;
    const Vector Kda = K * da;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector a_new = alpha + t * da;
      const Vector Ka_new = Ka + t * Kda;
      const double b_new = b + t * dbeta;
      const double F_new = objective(Ka_new, b_new, a_new);
      if (F_new <= F + 1e-4 * t * slope) {
        alpha = a_new;
        Ka = Ka_new;
        b = b_new;
        F = F_new;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No decrease possible at floating-point resolution.
      res.converged = gnorm <= 1e3 * opt.tol;
      break;
    }
  }
  res.iterations = it;
  res.w = X.transpose() * alpha;
  res.b = b;
  res.train_loss = sq_hinge_mean(y, Ka.array() + b);
  return res;
}

inline FitResult sq_hinge_l1(const Matrix& X, double sigma_max_sq, const Vector& y, double a,
                             bool fit_intercept, const SqHingeOptions& opt, Vector& w, double& b) {
  const double nd = static_cast<double>(X.rows());
  auto smooth = [&](const Vector& ww, double bb) {
    return sq_hinge_mean(y, (X * ww).array() + bb);
  };
  auto grad = [&](const Vector& ww, double bb, Vector& gw, double& gb) {
    const Vector m = (1.0 - y.array() * ((X * ww).array() + bb)).max(0.0);
    const Vector v = -2.0 / nd * y.cwiseProduct(m);
    gw = X.transpose() * v;
    gb = fit_intercept ? v.sum() : 0.0;
  };
  auto full = [&](const Vector& ww, double bb) { return smooth(ww, bb) + a * ww.lpNorm<1>(); };

  double L = 2.0 * (sigma_max_sq + (fit_intercept ? nd : 0.0)) / nd;
  if (!(L > 0)) L = 1.0;
  Vector zw = w, w_prev = w;
  double zb = b, b_prev = b;
  double tk = 1.0;
  double F = full(w, b);
  FitResult res;
  res.converged = false;
  int it = 0;
  Vector gw;
  double gb = 0.0;
  for (; it < opt.max_iter_l1; ++it) {
    grad(zw, zb, gw, gb);
    const double fz = smooth(zw, zb);
    Vector wn;
    double bn = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      wn = (zw - gw / L).unaryExpr([&](double u) { return soft_threshold(u, a / L); });
      bn = zb - gb / L;
      const Vector dw = wn - zw;
      const double dbb = bn - zb;
      const double quad = fz + gw.dot(dw) + gb * dbb + 0.5 * L * (dw.squaredNorm() + dbb * dbb);
      if (smooth(wn, bn) <= quad + 1e-12 * std::abs(quad)) break;
      L *= 2.0;
    }
    const double Fn = full(wn, bn);
    // prox-gradient residual at the extrapolated point
    const double resid = L * std::sqrt((wn - zw).squaredNorm() + sq(bn - zb));
    if (Fn > F) {
      // monotone restart
      zw = w;
      zb = b;
      tk = 1.0;
      continue;
    }
    w_prev = w;
    b_prev = b;
    w = wn;
    b = bn;
    F = Fn;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    zw = w + ((tk - 1.0) / tn) * (w - w_prev);
    zb = b + ((tk - 1.0) / tn) * (b - b_prev);
    tk = tn;
    if (resid <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = it;
  res.w = w;
  res.b = b;
  res.train_loss = smooth(w, b);
  return res;
}

}  // namespace detail

/// Minimizes (1/n) sum max(0, 1 - y_i(<w, x_i> + b))^2 + penalty.
inline FitResult sq_hinge_erm(const Matrix& X, const Vector& y, const Penalty& penalty,
                              bool fit_intercept, const SqHingeOptions& opt = {}) {
  detail::check_design(X, y);
  detail::check_labels_pm1(y);
  if (auto* p = std::get_if<L2Penalty>(&penalty)) {
    require(p->lambda >= 0, "sq_hinge_erm: lambda must be nonnegative");
    const Matrix K = X * X.transpose();
    Vector alpha = Vector::Zero(X.rows());
    double b = 0.0;
    return detail::sq_hinge_l2(X, K, y, p->lambda, fit_intercept, opt, alpha, b);
  }
  const double a = std::get<L1Penalty>(penalty).alpha;
  require(a >= 0, "sq_hinge_erm: alpha must be nonnegative");
  Eigen::BDCSVD<Matrix> svd(X);
  const double smax = svd.singularValues()(0);
  Vector w = Vector::Zero(X.cols());
  double b = 0.0;
  return detail::sq_hinge_l1(X, smax * smax, y, a, fit_intercept, opt, w, b);
}

/// Intercept-only squared-hinge optimum: b = (n+ - n-)/n clipped to [-1, 1].
inline double sq_hinge_intercept_only(const Vector& y) {
  const double mean = y.mean();
  return std::clamp(mean, -1.0, 1.0);
}

/// Gradient scale at the intercept-only predictor; ridge and LASSO analogues of lambda_max.
inline double sq_hinge_reg_max(const Matrix& X, const Vector& y, bool fit_intercept, bool l1) {
  const double b0 = fit_intercept ? sq_hinge_intercept_only(y) : 0.0;
  const double nd = static_cast<double>(X.rows());
  const Vector m = (1.0 - y.array() * b0).max(0.0);
  const Vector v = -2.0 / nd * y.cwiseProduct(m);
  const double g = (X.transpose() * v).lpNorm<Eigen::Infinity>();
  return l1 ? g : 0.5 * g;
}

inline std::vector<double> default_sq_hinge_grid(const Matrix& X, const Vector& y, bool fit_intercept,
                                                 bool l1, int count = 50) {
  double hi = sq_hinge_reg_max(X, y, fit_intercept, l1);
  if (!(hi > 0)) hi = 1.0;
  return log_grid(hi, hi * (l1 ? 1e-4 : 1e-6), count);
}

/// Squared-hinge path with warm starts. The penalty type is set by `l1`.
inline RegPath sq_hinge_path(const Matrix& X, const Vector& y, const std::vector<double>& grid,
                             bool l1, bool fit_intercept, const SqHingeOptions& opt = {}) {
  detail::check_design(X, y);
  detail::check_labels_pm1(y);
  for (double g : grid) require(g >= 0, "sq_hinge_path: grid values must be nonnegative");
  RegPath path;
  double b = fit_intercept ? sq_hinge_intercept_only(y) : 0.0;
  if (!l1) {
    const Matrix K = X * X.transpose();
    Vector alpha = Vector::Zero(X.rows());
    for (double lam : grid) path.push(lam, detail::sq_hinge_l2(X, K, y, lam, fit_intercept, opt, alpha, b));
  } else {
    Eigen::BDCSVD<Matrix> svd(X);
    const double smax = svd.singularValues()(0);
    Vector w = Vector::Zero(X.cols());
    for (double a : grid)
      path.push(a, detail::sq_hinge_l1(X, smax * smax, y, a, fit_intercept, opt, w, b));
  }
  return path;
}

// ---------------------------------------------------------------------------
// Constrained ERM over norm balls

enum class BallKind { L2, L1 };

struct Ball {
  BallKind kind = BallKind::L2;
  double radius = 1.0;
};

struct ConstrainedOptions {
  double tol = 1e-6;
  int max_iter = 100000;
};

/// Euclidean projection onto {||w||_1 <= r} by the sort-based method.
inline Vector project_l1_ball(const Vector& v, double r) {
  if (v.lpNorm<1>() <= r) return v;
  if (r <= 0) return Vector::Zero(v.size());
  std::vector<double> u(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) u[i] = std::abs(v(i));
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - r) / static_cast<double>(j + 1);
    if (u[j] - t > 0) theta = t;
  }
  return v.unaryExpr([&](double x) { return detail::soft_threshold(x, theta); });
}

inline Vector project_ball(const Vector& v, const Ball& ball) {
  if (ball.kind == BallKind::L1) return project_l1_ball(v, ball.radius);
  const double nv = v.norm();
  if (nv <= ball.radius) return v;
  return ball.radius > 0 ? Vector(v * (ball.radius / nv)) : Vector(Vector::Zero(v.size()));
}

namespace detail {

inline double empirical_loss(const LossSpec& loss, const Matrix& X, const Vector& y, const Vector& w,
                             double b) {
  const Vector f = X * w;
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += loss_value(loss, f(i) + b, y(i));
  return s / static_cast<double>(y.size());
}

inline void empirical_grad(const LossSpec& loss, const Matrix& X, const Vector& y, const Vector& w,
                           double b, Vector& gw, double& gb) {
  const Vector f = X * w;
  Vector v(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) v(i) = loss_derivative(loss, f(i) + b, y(i));
  v /= static_cast<double>(y.size());
  gw = X.transpose() * v;
  gb = v.sum();
}

inline bool is_smooth(const LossSpec& s) {
  return s.kind == LossKind::Square || s.kind == LossKind::SquaredHinge ||
         s.kind == LossKind::Huber || s.kind == LossKind::HuberHinge;
}

}  // namespace detail

/// Minimizes the empirical loss over {||w|| <= B}. Smooth losses use accelerated
/// projected gradient, nonsmooth ones projected subgradient with the best iterate kept.
inline FitResult constrained_erm(const Matrix& X, const Vector& y, const LossSpec& loss,
                                 const Ball& ball, bool fit_intercept,
                                 const ConstrainedOptions& opt = {}) {
  detail::check_design(X, y);
  require(loss.convex, "constrained_erm: loss must be convex");
  require(ball.radius >= 0, "constrained_erm: radius must be nonnegative");
  const double nd = static_cast<double>(X.rows());
  const double smax = Eigen::BDCSVD<Matrix>(X).singularValues()(0);
  auto dual_norm = [&](const Vector& g) {
    return ball.kind == BallKind::L2 ? g.norm() : g.lpNorm<Eigen::Infinity>();
  };

  Vector w = Vector::Zero(X.cols());
  double b = 0.0;
  if (fit_intercept && loss.kind == LossKind::Square) b = y.mean();
  Vector gw;
  double gb = 0.0;
  FitResult res;
  res.converged = false;
  int it = 0;

  if (detail::is_smooth(loss)) {
    const double H = loss.smoothness_H.value_or(2.0);
    double L = H * (smax * smax + (fit_intercept ? nd : 0.0)) / nd;
    if (!(L > 0)) L = 1.0;
    Vector zw = w, w_prev = w;
    double zb = b, b_prev = b, tk = 1.0;
    double F = detail::empirical_loss(loss, X, y, w, b);
    for (; it < opt.max_iter; ++it) {
      detail::empirical_grad(loss, X, y, zw, zb, gw, gb);
      const Vector wn = project_ball(zw - gw / L, ball);
      const double bn = fit_intercept ? zb - gb / L : 0.0;
      const double resid = L * std::sqrt((wn - zw).squaredNorm() + sq(bn - zb));
      const double Fn = detail::empirical_loss(loss, X, y, wn, bn);
      if (Fn > F) {
        zw = w;
        zb = b;
        tk = 1.0;
        continue;
      }
      w_prev = w;
      b_prev = b;
      w = wn;
      b = bn;
      F = Fn;
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
      zw = w + ((tk - 1.0) / tn) * (w - w_prev);
      zb = b + ((tk - 1.0) / tn) * (b - b_prev);
      tk = tn;
      if (resid <= opt.tol) {
        res.converged = true;
        break;
      }
    }
  } else {
    const double G = loss.lipschitz_M.value_or(1.0) * (X.rowwise().norm().maxCoeff() + 1.0);
    const double D = 2.0 * std::max(ball.radius, 1.0);
    Vector best_w = w;
    double best_b = b;
    double best_F = detail::empirical_loss(loss, X, y, w, b);
    for (; it < opt.max_iter; ++it) {
      detail::empirical_grad(loss, X, y, w, b, gw, gb);
      const double step = D / (G * std::sqrt(static_cast<double>(it) + 1.0));
      w = project_ball(w - step * gw, ball);
      if (fit_intercept) b -= step * gb;
      const double F = detail::empirical_loss(loss, X, y, w, b);
      if (F < best_F) {
        best_F = F;
        best_w = w;
        best_b = b;
      }
    }
    w = best_w;
    b = best_b;
  }

  detail::empirical_grad(loss, X, y, w, b, gw, gb);
  res.gap_estimate = std::max(0.0, gw.dot(w) + ball.radius * dual_norm(gw));
  if (!detail::is_smooth(loss))
    res.converged = res.gap_estimate <= opt.tol && (!fit_intercept || std::abs(gb) <= opt.tol);
  res.iterations = it;
  res.w = w;
  res.b = b;
  res.train_loss = detail::empirical_loss(loss, X, y, w, b);
  return res;
}

// ---------------------------------------------------------------------------
// One-pass SGD for the 1-D population squared-hinge problem

struct Sgd1dResult {
  double w1 = 0.0;
  double b = 0.0;
};

/// Averaged SGD on E max(0, 1 - y (w1 x1 + b))^2 with step step0 / sqrt(t).
inline Sgd1dResult one_pass_sgd_1d(const std::function<std::pair<double, double>(Rng&)>& sampler,
                                   Sgd1dResult init, double step0, long long n_steps,
                                   std::uint64_t seed) {
  require(n_steps >= 1, "one_pass_sgd_1d: need at least one step");
  require(step0 > 0, "one_pass_sgd_1d: step size must be positive");
  Rng rng(seed);
  double w = init.w1, b = init.b;
  double sw = 0.0, sb = 0.0;
  for (long long t = 1; t <= n_steps; ++t) {
    const auto [x, y] = sampler(rng);
    const double m = 1.0 - y * (w * x + b);
    if (m > 0) {
      const double eta = step0 / std::sqrt(static_cast<double>(t));
      w += eta * 2.0 * m * y * x;
      b += eta * 2.0 * m * y;
    }
    sw += (w - sw) / static_cast<double>(t);
    sb += (b - sb) / static_cast<double>(t);
  }
  return {sw, sb};
}

}  // namespace moreau
