#pragma once

// Population quantities: closed-form square-loss risk, the two-dimensional
// reduction for the logistic classification model, Monte Carlo fallbacks,
// zero-one risk and hypercontractivity diagnostics.

#include "moreau/common.hpp"
#include "moreau/envelope.hpp"
#include "moreau/synthdata.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>

namespace moreau {

enum class RiskMethod { ClosedForm, TwoDimReduction, MonteCarlo };

inline std::string_view to_string(RiskMethod m) {
  switch (m) {
    case RiskMethod::ClosedForm: return "closed_form";
    case RiskMethod::TwoDimReduction: return "two_dim_reduction";
    case RiskMethod::MonteCarlo: return "monte_carlo";
  }
  return "?";
}

struct PopulationRisk {
  double value = 0.0;
  RiskMethod method = RiskMethod::ClosedForm;
  double std_error = 0.0;
};

// ---------------------------------------------------------------------------
// Moment table

/// Moments of x1 = scale1 * z and x2 = scale2 * z for one standardized coordinate law.
struct MomentTable {
  FeatureKind dist = FeatureKind::Gaussian;
  double scale1 = 1.0;
  double scale2 = 1.0;
  double m_abs = 0.0;   // E|x1|
  double m_sgn = 0.0;   // E[x1 |x1|]
  double m_cos = 0.0;   // E cos x2
  double m_zcos = 0.0;  // E[x2 cos x2]
  double m_cos2 = 0.0;  // E cos^2 x2
  long long mc_samples = 0;  // 0 when analytic
  std::uint64_t seed = 0;
};

inline MomentTable gaussian_moments(double scale1 = 1.0, double scale2 = 1.0) {
  MomentTable t;
  t.dist = FeatureKind::Gaussian;
  t.scale1 = scale1;
  t.scale2 = scale2;
  t.m_abs = scale1 * std::sqrt(2.0 / std::numbers::pi);
  t.m_sgn = 0.0;
  t.m_cos = std::exp(-0.5 * scale2 * scale2);
  t.m_zcos = 0.0;
  t.m_cos2 = 0.5 * (1.0 + std::exp(-2.0 * scale2 * scale2));
  return t;
}

/// Gaussian entries are analytic; every other law uses mc_samples draws.
inline MomentTable build_moment_table(FeatureKind dist, long long mc_samples = 10'000'000,
                                      std::uint64_t seed = 0, double scale1 = 1.0,
                                      double scale2 = 1.0) {
  if (dist == FeatureKind::Gaussian) return gaussian_moments(scale1, scale2);
  require(mc_samples >= 1, "build_moment_table: mc_samples must be >= 1");
  MomentTable t;
  t.dist = dist;
  t.scale1 = scale1;
  t.scale2 = scale2;
  t.mc_samples = mc_samples;
  t.seed = seed;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(dist)));
  CoordinateSampler draw(dist);
  // Kahan-free long double accumulation is enough at 1e7 terms.
  long double a = 0, s = 0, c = 0, zc = 0, c2 = 0;
  for (long long i = 0; i < mc_samples; ++i) {
    const double x1 = scale1 * draw(rng);
    const double x2 = scale2 * draw(rng);
    const double cx = std::cos(x2);
    a += std::abs(x1);
    s += x1 * std::abs(x1);
    c += cx;
    zc += x2 * cx;
    c2 += cx * cx;
  }
  const long double m = static_cast<long double>(mc_samples);
  t.m_abs = static_cast<double>(a / m);
  t.m_sgn = static_cast<double>(s / m);
  t.m_cos = static_cast<double>(c / m);
  t.m_zcos = static_cast<double>(zc / m);
  t.m_cos2 = static_cast<double>(c2 / m);
  return t;
}

inline nlohmann::json to_json(const MomentTable& t) {
  return {{"dist", std::string(to_string(t.dist))}, {"scale1", t.scale1}, {"scale2", t.scale2},
          {"m_abs", t.m_abs}, {"m_sgn", t.m_sgn}, {"m_cos", t.m_cos}, {"m_zcos", t.m_zcos},
          {"m_cos2", t.m_cos2}, {"mc_samples", t.mc_samples}, {"seed", t.seed}};
}

inline MomentTable moment_table_from_json(const nlohmann::json& j) {
  MomentTable t;
  t.dist = feature_kind_from_string(j.at("dist").get<std::string>());
  t.scale1 = j.at("scale1").get<double>();
  t.scale2 = j.at("scale2").get<double>();
  t.m_abs = j.at("m_abs").get<double>();
  t.m_sgn = j.at("m_sgn").get<double>();
  t.m_cos = j.at("m_cos").get<double>();
  t.m_zcos = j.at("m_zcos").get<double>();
  t.m_cos2 = j.at("m_cos2").get<double>();
  t.mc_samples = j.at("mc_samples").get<long long>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

inline std::string moment_cache_key(FeatureKind dist, long long mc_samples, std::uint64_t seed,
                                    double scale1, double scale2) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(dist) << ':' << mc_samples << ':' << seed << ':' << scale1 << ':' << scale2;
  return os.str();
}

/// Looks the table up in a JSON cache file, computing and storing it on a miss.
/// An empty path disables caching.
inline MomentTable cached_moment_table(const std::string& cache_path, FeatureKind dist,
                                       long long mc_samples = 10'000'000, std::uint64_t seed = 0,
                                       double scale1 = 1.0, double scale2 = 1.0) {
  if (dist == FeatureKind::Gaussian || cache_path.empty())
    return build_moment_table(dist, mc_samples, seed, scale1, scale2);
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const auto key = moment_cache_key(dist, mc_samples, seed, scale1, scale2);
  nlohmann::json cache = nlohmann::json::object();
  if (std::ifstream in(cache_path); in) {
    try {
      in >> cache;
    } catch (const nlohmann::json::exception&) {
      cache = nlohmann::json::object();
    }
  }
  if (cache.contains(key)) return moment_table_from_json(cache[key]);
  const auto t = build_moment_table(dist, mc_samples, seed, scale1, scale2);
  cache[key] = to_json(t);
  std::ofstream(cache_path) << cache.dump(2) << '\n';
  return t;
}

// ---------------------------------------------------------------------------
// Square-loss regression

struct OptimalPredictor {
  Vector w_tilde;
  double risk = 0.0;  // E(y - <w_tilde, x>)^2, no intercept
  double mean_y = 0.0;
  double second_moment_y = 0.0;  // E y^2: risk of the zero predictor
};

/// Optimal linear predictor for the misspecified model with diagonal Sigma.
inline OptimalPredictor misspecified_optimal_predictor(const MisspecifiedRegression& m,
                                                       const CovarianceSpec& cov,
                                                       const MomentTable& mt) {
  require(cov.is_diagonal(), "misspecified_optimal_predictor: Sigma must be diagonal");
  require(cov.dim() >= 3, "misspecified_optimal_predictor: needs d >= 3");
  const double s11 = cov.eigs(0), s22 = cov.eigs(1), s33 = cov.eigs(2);
  require(s11 > 0 && s22 > 0, "misspecified_optimal_predictor: singular Sigma");
  OptimalPredictor op;
  op.w_tilde = Vector::Zero(cov.dim());
  const double c1 = mt.m_sgn * mt.m_cos;   // E[x1 |x1| cos x2]
  const double c2 = mt.m_abs * mt.m_zcos;  // E[x2 |x1| cos x2]
  op.w_tilde(0) = m.scale + c1 / s11;
  op.w_tilde(1) = c2 / s22;
  const double sv = m.noise_variance();
  op.risk = s11 * mt.m_cos2 + s33 * sv - c1 * c1 / s11 - c2 * c2 / s22;
  op.mean_y = mt.m_abs * mt.m_cos;
  op.second_moment_y = m.scale * m.scale * s11 + s11 * mt.m_cos2 + 2.0 * m.scale * c1 + s33 * sv;
  return op;
}

inline OptimalPredictor well_specified_optimal_predictor(const WellSpecifiedLinear& m,
                                                         const CovarianceSpec& cov) {
  OptimalPredictor op;
  op.w_tilde = m.wstar;
  op.risk = m.noise_var;
  op.mean_y = 0.0;
  op.second_moment_y = m.wstar.dot(cov.apply(m.wstar)) + m.noise_var;
  return op;
}

inline OptimalPredictor regression_optimal_predictor(const DataModel& model, const MomentTable& mt) {
  if (auto* ws = std::get_if<WellSpecifiedLinear>(&model.labels))
    return well_specified_optimal_predictor(*ws, model.cov);
  if (auto* ms = std::get_if<MisspecifiedRegression>(&model.labels))
    return misspecified_optimal_predictor(*ms, model.cov, mt);
  throw DomainError("regression oracle: label model is not a regression model");
}

/// L(w, b) = L(w_tilde) + ||w - w_tilde||_Sigma^2 + b^2 - 2 b E[y].
inline PopulationRisk regression_pop_risk(const Vector& w, double b, const OptimalPredictor& op,
                                          const CovarianceSpec& cov) {
  require(w.size() == cov.dim(), "regression_pop_risk: dimension mismatch");
  const Vector diff = w - op.w_tilde;
  const double v = op.risk + diff.dot(cov.apply(diff)) + b * b - 2.0 * b * op.mean_y;
  return {std::max(0.0, v), RiskMethod::ClosedForm, 0.0};
}

inline PopulationRisk regression_pop_risk(const Vector& w, double b, const DataModel& model,
                                          const MomentTable& mt) {
  return regression_pop_risk(w, b, regression_optimal_predictor(model, mt), model.cov);
}

// ---------------------------------------------------------------------------
// Generic Monte Carlo

namespace detail {

template <class F>
void for_each_chunk(const DataModel& model, long long n_mc, std::uint64_t seed, F&& f) {
  constexpr long long chunk = 8192;
  long long done = 0;
  std::uint64_t idx = 0;
  while (done < n_mc) {
    const long long m = std::min(chunk, n_mc - done);
    f(sample_dataset(model, m, derive_seed(seed, idx++)));
    done += m;
  }
}

struct Moments {
  long double s1 = 0, s2 = 0;
  long long n = 0;
  void add(double v) {
    s1 += v;
    s2 += static_cast<long double>(v) * v;
    ++n;
  }
  double mean() const { return static_cast<double>(s1 / n); }
  double std_error() const {
    if (n < 2) return 0.0;
    const long double mu = s1 / n;
    const long double var = std::max<long double>(0, (s2 / n - mu * mu) * n / (n - 1));
    return static_cast<double>(std::sqrt(var / n));
  }
};

}  // namespace detail

/// Fresh-sample Monte Carlo mean of f(<w, x> + b, y).
inline PopulationRisk mc_pop_risk(const LossSpec& loss, const Vector& w, double b,
                                  const DataModel& model, long long n_mc, std::uint64_t seed) {
  require(n_mc >= 1, "mc_pop_risk: n_mc must be >= 1");
  require(w.size() == model.cov.dim(), "mc_pop_risk: dimension mismatch");
  detail::Moments acc;
  detail::for_each_chunk(model, n_mc, seed, [&](const Dataset& ds) {
    const Vector f = ds.X * w;
    for (Eigen::Index i = 0; i < ds.n(); ++i) acc.add(loss_value(loss, f(i) + b, ds.y(i)));
  });
  return {acc.mean(), RiskMethod::MonteCarlo, acc.std_error()};
}

/// A frozen test sample; reusing it across predictors gives common random numbers.
class TestSetOracle {
public:
  TestSetOracle(const DataModel& model, Eigen::Index n_test, std::uint64_t seed)
      : data_(sample_dataset(model, n_test, seed)) {}

  PopulationRisk risk(const LossSpec& loss, const Vector& w, double b) const {
    const Vector f = data_.X * w;
    detail::Moments acc;
    for (Eigen::Index i = 0; i < data_.n(); ++i) acc.add(loss_value(loss, f(i) + b, data_.y(i)));
    return {acc.mean(), RiskMethod::MonteCarlo, acc.std_error()};
  }

private:
  Dataset data_;
};

// ---------------------------------------------------------------------------
// Logistic classification via the two-dimensional reduction

namespace detail {

// E[(a - s Z)_+^2] for Z ~ N(0, 1).
inline double gauss_pos_sq(double a, double s) {
  if (s <= 0) return a > 0 ? a * a : 0.0;
  const double t = a / s;
  return (a * a + s * s) * normal_cdf(t) + a * s * normal_pdf(t);
}

}  // namespace detail

/// Conditioned on eta = <w*, x> + b* ~ N(b*, ||w*||_Sigma^2), the score <w, x> + b is
/// N(mu(eta), sigma^2). Holds a frozen sample of eta so repeated queries share randomness.
class LogisticReduction {
public:
  LogisticReduction(const LogisticClassification& m, const CovarianceSpec& cov, long long mc_samples,
                    std::uint64_t seed)
      : cov_(cov), bstar_(m.bstar) {
    require(mc_samples >= 1, "classification oracle: mc_samples must be >= 1");
    wstar_ = Vector::Zero(cov.dim());
    wstar_(0) = m.wstar_coef;
    Sw_star_ = cov.apply(wstar_);
    S_ = wstar_.dot(Sw_star_);
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    eta_.resize(mc_samples);
    g_.resize(mc_samples);
    const double sd = std::sqrt(S_);
    for (long long i = 0; i < mc_samples; ++i) {
      eta_(i) = bstar_ + sd * nd(rng);
      g_(i) = sigmoid(eta_(i));
    }
  }

  struct Reduced {
    double slope = 0.0;  // <w, Sigma w*> / ||w*||_Sigma^2
    double sigma = 0.0;
  };

  Reduced reduce(const Vector& w) const {
    require(w.size() == cov_.dim(), "classification oracle: dimension mismatch");
    const double cross = w.dot(Sw_star_);
    const double slope = S_ > 0 ? cross / S_ : 0.0;
    const double var = w.dot(cov_.apply(w)) - (S_ > 0 ? cross * cross / S_ : 0.0);
    return {slope, std::sqrt(std::max(0.0, var))};
  }

  PopulationRisk sq_hinge(const Vector& w, double b) const {
    const auto r = reduce(w);
    detail::Moments acc;
    for (Eigen::Index i = 0; i < eta_.size(); ++i) {
      const double mu = b + r.slope * (eta_(i) - bstar_);
      acc.add(g_(i) * detail::gauss_pos_sq(1.0 - mu, r.sigma) +
              (1.0 - g_(i)) * detail::gauss_pos_sq(1.0 + mu, r.sigma));
    }
    return {acc.mean(), RiskMethod::TwoDimReduction, acc.std_error()};
  }

  /// P(sign(<w, x> + b) != y), counting a zero score as an error.
  PopulationRisk zero_one(const Vector& w, double b) const {
    const auto r = reduce(w);
    detail::Moments acc;
    for (Eigen::Index i = 0; i < eta_.size(); ++i) {
      const double mu = b + r.slope * (eta_(i) - bstar_);
      double p_pos;  // P(score > 0)
      if (r.sigma > 0) p_pos = normal_cdf(mu / r.sigma);
      else p_pos = mu > 0 ? 1.0 : 0.0;
      acc.add(g_(i) * (1.0 - p_pos) + (1.0 - g_(i)) * p_pos);
    }
    return {acc.mean(), RiskMethod::TwoDimReduction, acc.std_error()};
  }

  double signal_variance() const { return S_; }

private:
  CovarianceSpec cov_;
  double bstar_;
  Vector wstar_, Sw_star_;
  double S_ = 0.0;
  Vector eta_, g_;
};

inline PopulationRisk classification_pop_sq_hinge(const Vector& w, double b,
                                                  const LogisticClassification& m,
                                                  const CovarianceSpec& cov, long long mc_samples,
                                                  std::uint64_t seed) {
  return LogisticReduction(m, cov, mc_samples, seed).sq_hinge(w, b);
}

enum class ZeroOneMethod { TwoDimReduction, MonteCarlo };

inline PopulationRisk zero_one_risk(const Vector& w, double b, const DataModel& model,
                                    ZeroOneMethod method, long long n_mc = 1'000'000,
                                    std::uint64_t seed = 0) {
  require(is_classification(model.labels), "zero_one_risk: needs a classification model");
  if (method == ZeroOneMethod::TwoDimReduction) {
    auto* lm = std::get_if<LogisticClassification>(&model.labels);
    require(lm != nullptr && model.features == FeatureKind::Gaussian,
            "zero_one_risk: the reduction needs Gaussian features and the logistic model");
    return LogisticReduction(*lm, model.cov, n_mc, seed).zero_one(w, b);
  }
  return mc_pop_risk(LossSpec::zero_one(), w, b, model, n_mc, seed);
}

namespace detail {

// E h(eta) for eta ~ N(mean, var), split at a kink location.
template <class H>
double gaussian_expectation(H&& h, double mean, double var, double kink) {
  using boost::math::quadrature::gauss_kronrod;
  const double sd = std::sqrt(var);
  auto dens = [&](double e) { return h(e) * normal_pdf((e - mean) / sd) / sd; };
  const double inf = std::numeric_limits<double>::infinity();
  return gauss_kronrod<double, 61>::integrate(dens, -inf, kink, 15, 1e-12) +
         gauss_kronrod<double, 61>::integrate(dens, kink, inf, 15, 1e-12);
}

}  // namespace detail

/// Bayes zero-one risk E[min(g, 1 - g)] by adaptive quadrature over eta.
inline double logistic_bayes_zero_one(const LogisticClassification& m, const CovarianceSpec& cov) {
  const double S = m.wstar_coef * m.wstar_coef * cov.apply(Vector::Unit(cov.dim(), 0))(0);
  return detail::gaussian_expectation(
      [](double e) { return std::min(sigmoid(e), 1.0 - sigmoid(e)); }, m.bstar, S, 0.0);
}

/// P(y = 1) for the logistic model.
inline double logistic_positive_rate(const LogisticClassification& m, const CovarianceSpec& cov) {
  const double S = m.wstar_coef * m.wstar_coef * cov.apply(Vector::Unit(cov.dim(), 0))(0);
  return detail::gaussian_expectation([](double e) { return sigmoid(e); }, m.bstar, S, 0.0);
}

/// Best constant predictor under the squared hinge: 4 p (1 - p).
inline double logistic_null_sq_hinge(const LogisticClassification& m, const CovarianceSpec& cov) {
  const double p = logistic_positive_rate(m, cov);
  return 4.0 * p * (1.0 - p);
}

// ---------------------------------------------------------------------------
// Hypercontractivity

struct HyperResult {
  double ratio = 0.0;     // (E f^4)^{1/4} / E f for q = 4, (E f^4)^{1/8} / (E f)^{1/2} for q = 8
  double tau = 0.0;       // the same quantity on the (E f^4)^{1/4} / E f scale
  double rel_se = 0.0;    // relative standard error of the E f^4 estimate
  bool heavy_tail_warning = false;
};

inline HyperResult hypercontractivity_from_moments(long double s1, long double s4, long double s8,
                                                   long long n, int q) {
  require(q == 4 || q == 8, "hypercontractivity: q must be 4 or 8");
  require(n >= 2, "hypercontractivity: need at least two samples");
  const long double m1 = s1 / n, m4 = s4 / n, m8 = s8 / n;
  require(m1 > 0, "hypercontractivity: E f must be positive");
  HyperResult h;
  const double tau = static_cast<double>(std::pow(m4, 0.25L) / m1);
  h.tau = tau;
  h.ratio = q == 4 ? tau : std::sqrt(tau);
  const long double var4 = std::max<long double>(0, m8 - m4 * m4);
  h.rel_se = m4 > 0 ? static_cast<double>(std::sqrt(var4 / n) / m4) : 0.0;
  h.heavy_tail_warning = h.rel_se > 0.10;
  return h;
}

inline HyperResult hypercontractivity_ratio(const LossSpec& loss, const Vector& w, double b,
                                            const DataModel& model, int q, long long n_mc,
                                            std::uint64_t seed) {
  require(n_mc >= 2, "hypercontractivity_ratio: n_mc must be >= 2");
  long double s1 = 0, s4 = 0, s8 = 0;
  detail::for_each_chunk(model, n_mc, seed, [&](const Dataset& ds) {
    const Vector f = ds.X * w;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      const long double v = loss_value(loss, f(i) + b, ds.y(i));
      const long double v4 = v * v * v * v;
      s1 += v;
      s4 += v4;
      s8 += v4 * v4;
    }
  });
  return hypercontractivity_from_moments(s1, s4, s8, n_mc, q);
}

}  // namespace moreau
