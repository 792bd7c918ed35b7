#pragma once

// Scalar losses f(yhat, y), their Moreau envelopes
//
//   f_lambda(yhat, y) = inf_u  f(u, y) + lambda * (u - yhat)^2
//
// and the proximal map returning the minimizing u. Larger lambda means
// less smoothing: f_lambda increases to f as lambda -> infinity.

#include "moreau/common.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace moreau {

enum class LossKind { Square, SquaredHinge, Hinge, AbsoluteError, Huber, HuberHinge, ZeroOne };

struct LossSpec {
  LossKind kind = LossKind::Square;
  double delta = 1.0;  // Huber / HuberHinge only
  bool convex = true;
  std::optional<double> lipschitz_M;
  std::optional<double> smoothness_H;
  std::optional<double> sqrt_lipschitz_L;

  static LossSpec square() { return {LossKind::Square, 1.0, true, std::nullopt, 2.0, 1.0}; }
  static LossSpec squared_hinge() {
    return {LossKind::SquaredHinge, 1.0, true, std::nullopt, 2.0, 1.0};
  }
  static LossSpec hinge() { return {LossKind::Hinge, 1.0, true, 1.0, std::nullopt, std::nullopt}; }
  static LossSpec absolute_error() {
    return {LossKind::AbsoluteError, 1.0, true, 1.0, std::nullopt, std::nullopt};
  }
  // r^2/(2 delta) for |r| <= delta, |r| - delta/2 beyond: 1-Lipschitz, (1/delta)-smooth.
  static LossSpec huber(double delta) {
    require(delta > 0, "huber: delta must be positive");
    return {LossKind::Huber, delta, true, 1.0, 1.0 / delta, std::nullopt};
  }
  static LossSpec huber_hinge(double delta) {
    require(delta > 0, "huber_hinge: delta must be positive");
    return {LossKind::HuberHinge, delta, true, 1.0, 1.0 / delta, std::nullopt};
  }
  static LossSpec zero_one() {
    return {LossKind::ZeroOne, 1.0, false, std::nullopt, std::nullopt, std::nullopt};
  }

  bool is_margin() const {
    return kind == LossKind::SquaredHinge || kind == LossKind::Hinge ||
           kind == LossKind::HuberHinge || kind == LossKind::ZeroOne;
  }
};

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::Square: return "square";
    case LossKind::SquaredHinge: return "squared_hinge";
    case LossKind::Hinge: return "hinge";
    case LossKind::AbsoluteError: return "absolute_error";
    case LossKind::Huber: return "huber";
    case LossKind::HuberHinge: return "huber_hinge";
    case LossKind::ZeroOne: return "zero_one";
  }
  return "?";
}

inline LossSpec loss_from_string(std::string_view name, double delta = 1.0) {
  if (name == "square") return LossSpec::square();
  if (name == "squared_hinge") return LossSpec::squared_hinge();
  if (name == "hinge") return LossSpec::hinge();
  if (name == "absolute_error" || name == "l1") return LossSpec::absolute_error();
  if (name == "huber") return LossSpec::huber(delta);
  if (name == "huber_hinge") return LossSpec::huber_hinge(delta);
  if (name == "zero_one") return LossSpec::zero_one();
  throw DomainError("unknown loss: " + std::string(name));
}

namespace detail {

inline void check_label(const LossSpec& spec, double y) {
  if (spec.is_margin() && y != 1.0 && y != -1.0)
    throw DomainError("margin loss requires a label in {-1, +1}");
}

inline double huber_core(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? r * r / (2.0 * delta) : a - 0.5 * delta;
}

}  // namespace detail

inline double loss_value(const LossSpec& spec, double yhat, double y) {
  detail::check_label(spec, y);
  switch (spec.kind) {
    case LossKind::Square: return sq(yhat - y);
    case LossKind::SquaredHinge: return sq(std::max(0.0, 1.0 - y * yhat));
    case LossKind::Hinge: return std::max(0.0, 1.0 - y * yhat);
    case LossKind::AbsoluteError: return std::abs(yhat - y);
    case LossKind::Huber: return detail::huber_core(yhat - y, spec.delta);
    case LossKind::HuberHinge: {
      const double m = 1.0 - y * yhat;
      return m <= 0 ? 0.0 : detail::huber_core(m, spec.delta);
    }
    case LossKind::ZeroOne: return y * yhat > 0 ? 0.0 : 1.0;
  }
  return 0.0;
}

/// A subgradient of f(., y) at yhat (the right derivative at kinks).
inline double loss_derivative(const LossSpec& spec, double yhat, double y) {
  detail::check_label(spec, y);
  switch (spec.kind) {
    case LossKind::Square: return 2.0 * (yhat - y);
    case LossKind::SquaredHinge: {
      const double m = 1.0 - y * yhat;
      return m > 0 ? -2.0 * y * m : 0.0;
    }
    case LossKind::Hinge: return 1.0 - y * yhat > 0 ? -y : 0.0;
    case LossKind::AbsoluteError: {
      const double r = yhat - y;
      return r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
    }
    case LossKind::Huber: {
      const double r = yhat - y;
      return std::abs(r) <= spec.delta ? r / spec.delta : (r > 0 ? 1.0 : -1.0);
    }
    case LossKind::HuberHinge: {
      const double m = 1.0 - y * yhat;
      if (m <= 0) return 0.0;
      return -y * (m <= spec.delta ? m / spec.delta : 1.0);
    }
    case LossKind::ZeroOne: throw DomainError("zero-one loss has no useful derivative");
  }
  return 0.0;
}

/// Closed-form envelope where one exists; nullopt means use moreau_numeric.
inline std::optional<double> moreau_closed(const LossSpec& spec, double lambda, double yhat,
                                           double y) {
  require(lambda > 0, "moreau_closed: lambda must be positive");
  detail::check_label(spec, y);
  switch (spec.kind) {
    case LossKind::Square:
    case LossKind::SquaredHinge: return lambda / (1.0 + lambda) * loss_value(spec, yhat, y);
    case LossKind::AbsoluteError: {
      const double r = std::abs(yhat - y);
      return r <= 0.5 / lambda ? lambda * r * r : r - 0.25 / lambda;
    }
    case LossKind::Hinge: {
      const double m = 1.0 - y * yhat;
      if (m <= 0) return 0.0;
      return m <= 0.5 / lambda ? lambda * m * m : m - 0.25 / lambda;
    }
    default: return std::nullopt;
  }
}

/// argmin_u f(u, y) + lambda (u - yhat)^2 by golden-section search.
///
/// The minimizer satisfies lambda (u* - yhat)^2 <= f(yhat, y), so the search
/// is confined to yhat +- sqrt(f(yhat, y) / lambda).
inline double prox(const LossSpec& spec, double lambda, double yhat, double y,
                   double tol = 1e-10) {
  require(spec.convex, "prox: loss must be convex");
  require(lambda > 0, "prox: lambda must be positive");
  require(tol > 0, "prox: tol must be positive");
  const double f0 = loss_value(spec, yhat, y);
  if (f0 == 0.0) return yhat;

  const auto objective = [&](double u) { return loss_value(spec, u, y) + lambda * sq(u - yhat); };
  const double half = std::sqrt(f0 / lambda);
  double lo = yhat - half;
  double hi = yhat + half;

  constexpr double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (hi - lo > tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
    // Stalls once the bracket is below the floating-point spacing of u.
    if (x1 >= x2) break;
  }
  double best = 0.5 * (lo + hi);
  double fbest = objective(best);
  for (double c : {x1, x2, yhat}) {
    const double fc = objective(c);
    if (fc < fbest) {
      best = c;
      fbest = fc;
    }
  }
  return best;
}

inline double moreau_numeric(const LossSpec& spec, double lambda, double yhat, double y,
                             double tol = 1e-10) {
  const double u = prox(spec, lambda, yhat, y, tol);
  return loss_value(spec, u, y) + lambda * sq(u - yhat);
}

/// Envelope value, using the closed form when available.
inline double moreau_envelope(const LossSpec& spec, double lambda, double yhat, double y,
                              double tol = 1e-10) {
  if (auto v = moreau_closed(spec, lambda, yhat, y)) return *v;
  return moreau_numeric(spec, lambda, yhat, y, tol);
}

/// 0 <= f - f_lambda <= M^2 / (4 lambda) for M-Lipschitz f.
inline double lipschitz_gap_bound(double M, double lambda) {
  require(M >= 0, "lipschitz_gap_bound: M must be nonnegative");
  require(lambda > 0, "lipschitz_gap_bound: lambda must be positive");
  return M * M / (4.0 * lambda);
}

/// max_{lambda >= 0} [ lambda/(1+lambda) a - lambda b ] = (sqrt a - sqrt b)_+^2.
inline double optimize_lambda_square_family(double a, double b) {
  require(a >= 0 && b >= 0, "optimize_lambda_square_family: a, b must be nonnegative");
  if (a <= b) return 0.0;
  return sq(std::sqrt(a) - std::sqrt(b));
}

}  // namespace moreau
