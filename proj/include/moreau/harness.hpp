#pragma once

// Experiment orchestration: presets, regularization-path sweeps over trials,
// bound evaluation, bootstrap intervals and CSV output.

#include "moreau/bounds.hpp"
#include "moreau/common.hpp"
#include "moreau/envelope.hpp"
#include "moreau/fitters.hpp"
#include "moreau/oracles.hpp"
#include "moreau/synthdata.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace moreau {

enum class LabelKind { WellSpecified, Misspecified, Logistic };
enum class FitterKind { Ridge, Lasso, SqHingeL2, SqHingeL1, ConstrainedL2 };
enum class BoundKind { Simple, Isotropic, Rademacher, DeltaBall };
enum class TestMetric { Native, ZeroOne };

namespace detail {

template <class E>
struct EnumNames;

template <>
struct EnumNames<LabelKind> {
  static constexpr std::pair<LabelKind, const char*> v[] = {
      {LabelKind::WellSpecified, "well_specified"},
      {LabelKind::Misspecified, "misspecified"},
      {LabelKind::Logistic, "logistic"}};
};
template <>
struct EnumNames<FitterKind> {
  static constexpr std::pair<FitterKind, const char*> v[] = {
      {FitterKind::Ridge, "ridge"},
      {FitterKind::Lasso, "lasso"},
      {FitterKind::SqHingeL2, "sq_hinge_l2"},
      {FitterKind::SqHingeL1, "sq_hinge_l1"},
      {FitterKind::ConstrainedL2, "constrained_l2"}};
};
template <>
struct EnumNames<BoundKind> {
  static constexpr std::pair<BoundKind, const char*> v[] = {
      {BoundKind::Simple, "simple"},
      {BoundKind::Isotropic, "isotropic"},
      {BoundKind::Rademacher, "rademacher"},
      {BoundKind::DeltaBall, "delta_ball"}};
};
template <>
struct EnumNames<TestMetric> {
  static constexpr std::pair<TestMetric, const char*> v[] = {{TestMetric::Native, "native"},
                                                             {TestMetric::ZeroOne, "zero_one"}};
};
template <>
struct EnumNames<CovKind> {
  static constexpr std::pair<CovKind, const char*> v[] = {{CovKind::Isotropic, "isotropic"},
                                                          {CovKind::Junk, "junk"},
                                                          {CovKind::Harmful, "harmful"},
                                                          {CovKind::ExplicitDiagonal, "explicit"}};
};

}  // namespace detail

template <class E>
std::string enum_name(E e) {
  for (auto& [k, s] : detail::EnumNames<E>::v)
    if (k == e) return s;
  return "?";
}

template <class E>
E enum_from(const std::string& s) {
  for (auto& [k, name] : detail::EnumNames<E>::v)
    if (s == name) return k;
  throw DomainError("unknown value: " + s);
}

struct ExperimentConfig {
  std::string preset = "custom";
  FeatureKind features = FeatureKind::Gaussian;
  CovKind covariance = CovKind::Junk;
  int k = 3;
  double eps = 0.05;
  std::vector<double> explicit_eigs;  // ExplicitDiagonal only
  LabelKind labels = LabelKind::Misspecified;
  double signal_scale = 1.5;  // regression w* = (signal_scale, 0, ..., 0)
  double noise_var = 0.5;
  bool noise_is_std = false;
  double wstar_coef = 5.0;
  double bstar = 3.0;
  FitterKind fitter = FitterKind::Ridge;
  std::vector<double> grid;  // empty: derived from a pilot sample
  int grid_size = 50;
  bool fit_intercept = true;
  int n = 100;
  int d = 1000;
  int trials = 20;
  double delta = 0.05;
  BoundKind bound = BoundKind::Simple;
  double correction = 1.0;
  TestMetric test_metric = TestMetric::Native;
  std::uint64_t seed = 0;
  long long n_mc = 100'000;
  long long moment_mc = 10'000'000;
  int rademacher_reps = 300;
  int bootstrap_resamples = 1000;
  std::string moment_cache;
  std::string out;
  unsigned threads = 0;  // 0: hardware concurrency
  // sharpness-l1 only
  double dj_factor = 20.0;
  double sigma = 1.0;

  void validate() const {
    require(trials >= 1, "config: trials must be >= 1");
    require(n >= 1 && d >= 1, "config: n and d must be >= 1");
    require(grid_size >= 1, "config: grid_size must be >= 1");
    require(delta > 0 && delta < 1, "config: delta must be in (0, 1)");
    require(correction > 0 && correction <= 1, "config: correction must be in (0, 1]");
    require(k >= 0 && k <= d, "config: need 0 <= k <= d");
    if (labels == LabelKind::Misspecified) require(d >= 3, "config: misspecified labels need d >= 3");
    const bool cls = labels == LabelKind::Logistic;
    const bool cls_fit = fitter == FitterKind::SqHingeL2 || fitter == FitterKind::SqHingeL1;
    require(cls == cls_fit, "config: classification labels need a squared-hinge fitter and vice versa");
    require(test_metric == TestMetric::Native || cls, "config: zero-one metric needs classification");
    if (covariance == CovKind::ExplicitDiagonal)
      require(static_cast<int>(explicit_eigs.size()) == d, "config: explicit_eigs must have d entries");
  }
};

inline CovarianceSpec make_covariance(const ExperimentConfig& c) {
  switch (c.covariance) {
    case CovKind::Isotropic: return CovarianceSpec::isotropic(c.d);
    case CovKind::Junk: return CovarianceSpec::junk(c.d, c.k, c.eps);
    case CovKind::Harmful: return CovarianceSpec::harmful(c.d, c.k);
    case CovKind::ExplicitDiagonal:
      return CovarianceSpec::explicit_diagonal(
          Eigen::Map<const Vector>(c.explicit_eigs.data(), static_cast<Eigen::Index>(c.explicit_eigs.size())));
  }
  throw DomainError("config: unknown covariance");
}

inline DataModel make_data_model(const ExperimentConfig& c) {
  DataModel m;
  m.features = c.features;
  m.cov = make_covariance(c);
  switch (c.labels) {
    case LabelKind::WellSpecified: {
      Vector ws = Vector::Zero(c.d);
      ws(0) = c.signal_scale;
      m.labels = WellSpecifiedLinear{ws, c.noise_is_std ? c.noise_var * c.noise_var : c.noise_var};
      break;
    }
    case LabelKind::Misspecified:
      m.labels = MisspecifiedRegression{c.signal_scale, c.noise_var, c.noise_is_std};
      break;
    case LabelKind::Logistic: m.labels = LogisticClassification{c.wstar_coef, c.bstar}; break;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "fig1-regression", "fig1-classification", "isotropic-ridge", "junk-ridge",
      "nonbenign-ridge", "isotropic-lasso",     "junk-lasso",      "nonbenign-lasso",
      "l2-margin",       "l1-margin",           "sharpness-l1",    "ols-psi",
      "zero-one-consistency"};
  return names;
}

inline ExperimentConfig preset(const std::string& name, bool paper_scale = false) {
  ExperimentConfig c;
  c.preset = name;
  auto overparam = [&](int n_paper, int d_paper) {
    c.n = paper_scale ? n_paper : 100;
    c.d = paper_scale ? d_paper : 1000;
  };
  auto proportional = [&](int n_paper, int d_paper) {
    c.n = paper_scale ? n_paper : 100;
    c.d = paper_scale ? d_paper : 120;
  };
  auto regression = [&](CovKind cov, FitterKind fit, BoundKind bound) {
    c.covariance = cov;
    c.k = 3;
    c.labels = LabelKind::Misspecified;
    c.fitter = fit;
    c.bound = bound;
    if (cov == CovKind::Isotropic) proportional(300, 350);
    else overparam(300, 3000);
  };
  auto classification = [&](CovKind cov, FitterKind fit, BoundKind bound) {
    c.covariance = cov;
    c.k = 1;
    c.labels = LabelKind::Logistic;
    c.fitter = fit;
    c.bound = bound;
    if (cov == CovKind::Isotropic) proportional(100, 120);
    else overparam(100, 2000);
  };

  if (name == "fig1-regression") regression(CovKind::Junk, FitterKind::Ridge, BoundKind::Simple);
  else if (name == "fig1-classification")
    classification(CovKind::Junk, FitterKind::SqHingeL2, BoundKind::Simple);
  else if (name == "isotropic-ridge")
    regression(CovKind::Isotropic, FitterKind::Ridge, BoundKind::Isotropic);
  else if (name == "junk-ridge") regression(CovKind::Junk, FitterKind::Ridge, BoundKind::Simple);
  else if (name == "nonbenign-ridge") regression(CovKind::Harmful, FitterKind::Ridge, BoundKind::Simple);
  else if (name == "isotropic-lasso")
    regression(CovKind::Isotropic, FitterKind::Lasso, BoundKind::Rademacher);
  else if (name == "junk-lasso") regression(CovKind::Junk, FitterKind::Lasso, BoundKind::Rademacher);
  else if (name == "nonbenign-lasso")
    regression(CovKind::Harmful, FitterKind::Lasso, BoundKind::Rademacher);
  else if (name == "l2-margin") classification(CovKind::Junk, FitterKind::SqHingeL2, BoundKind::Simple);
  else if (name == "l1-margin")
    classification(CovKind::Junk, FitterKind::SqHingeL1, BoundKind::Rademacher);
  else if (name == "zero-one-consistency") {
    classification(CovKind::Junk, FitterKind::SqHingeL2, BoundKind::Simple);
    c.test_metric = TestMetric::ZeroOne;
  } else if (name == "ols-psi") {
    c.covariance = CovKind::Isotropic;
    c.k = 1;
    c.labels = LabelKind::WellSpecified;
    c.noise_var = 1.0;
    c.fitter = FitterKind::ConstrainedL2;
    c.bound = BoundKind::Isotropic;
    c.fit_intercept = false;
    c.n = 400;
    c.d = 100;
    c.grid_size = 30;
  } else if (name == "sharpness-l1") {
    // Only n, dj_factor, sigma, trials and seed are used.
    c.covariance = CovKind::Junk;
    c.k = 1;
    c.labels = LabelKind::WellSpecified;
    c.n = paper_scale ? 1600 : 400;
    c.d = static_cast<int>(c.dj_factor * c.n) + 1;
    c.trials = 20;
  } else {
    throw DomainError("unknown preset: " + name);
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON config

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"preset", c.preset},
          {"features", std::string(to_string(c.features))},
          {"covariance", enum_name(c.covariance)},
          {"k", c.k},
          {"eps", c.eps},
          {"explicit_eigs", c.explicit_eigs},
          {"labels", enum_name(c.labels)},
          {"signal_scale", c.signal_scale},
          {"noise_var", c.noise_var},
          {"noise_is_std", c.noise_is_std},
          {"wstar_coef", c.wstar_coef},
          {"bstar", c.bstar},
          {"fitter", enum_name(c.fitter)},
          {"grid", c.grid},
          {"grid_size", c.grid_size},
          {"fit_intercept", c.fit_intercept},
          {"n", c.n},
          {"d", c.d},
          {"trials", c.trials},
          {"delta", c.delta},
          {"bound", enum_name(c.bound)},
          {"correction", c.correction},
          {"test_metric", enum_name(c.test_metric)},
          {"seed", c.seed},
          {"n_mc", c.n_mc},
          {"moment_mc", c.moment_mc},
          {"rademacher_reps", c.rademacher_reps},
          {"bootstrap_resamples", c.bootstrap_resamples},
          {"moment_cache", c.moment_cache},
          {"out", c.out},
          {"threads", c.threads},
          {"dj_factor", c.dj_factor},
          {"sigma", c.sigma}};
}

/// Starts from the named preset (if any) and overrides with the remaining keys.
inline ExperimentConfig config_from_json(const nlohmann::json& j, bool paper_scale = false) {
  try {
    ExperimentConfig c;
    if (j.contains("preset") && j["preset"].get<std::string>() != "custom")
      c = preset(j["preset"].get<std::string>(), paper_scale);
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("features")) c.features = feature_kind_from_string(j["features"].get<std::string>());
    if (j.contains("covariance")) c.covariance = enum_from<CovKind>(j["covariance"].get<std::string>());
    if (j.contains("labels")) c.labels = enum_from<LabelKind>(j["labels"].get<std::string>());
    if (j.contains("fitter")) c.fitter = enum_from<FitterKind>(j["fitter"].get<std::string>());
    if (j.contains("bound")) c.bound = enum_from<BoundKind>(j["bound"].get<std::string>());
    if (j.contains("test_metric")) c.test_metric = enum_from<TestMetric>(j["test_metric"].get<std::string>());
    get("k", c.k);
    get("eps", c.eps);
    get("explicit_eigs", c.explicit_eigs);
    get("signal_scale", c.signal_scale);
    get("noise_var", c.noise_var);
    get("noise_is_std", c.noise_is_std);
    get("wstar_coef", c.wstar_coef);
    get("bstar", c.bstar);
    get("grid", c.grid);
    get("grid_size", c.grid_size);
    get("fit_intercept", c.fit_intercept);
    get("n", c.n);
    get("d", c.d);
    get("trials", c.trials);
    get("delta", c.delta);
    get("correction", c.correction);
    get("seed", c.seed);
    get("n_mc", c.n_mc);
    get("moment_mc", c.moment_mc);
    get("rademacher_reps", c.rademacher_reps);
    get("bootstrap_resamples", c.bootstrap_resamples);
    get("moment_cache", c.moment_cache);
    get("out", c.out);
    get("threads", c.threads);
    get("dj_factor", c.dj_factor);
    get("sigma", c.sigma);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Bootstrap

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval for the mean.
inline Interval bootstrap_ci(const std::vector<double>& values, double level = 0.95,
                             int resamples = 1000, std::uint64_t seed = 0) {
  require(!values.empty(), "bootstrap_ci: values must be nonempty");
  require(level > 0 && level < 1, "bootstrap_ci: level must be in (0, 1)");
  require(resamples >= 1, "bootstrap_ci: resamples must be >= 1");
  const std::size_t m = values.size();
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m);
  if (m == 1) return {values[0], values[0]};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& mu : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += values[pick(rng)];
    mu = s / static_cast<double>(m);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(resamples - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, means.size() - 1);
    return means[i] + (pos - static_cast<double>(i)) * (means[j] - means[i]);
  };
  const double a = 0.5 * (1.0 - level);
  return {std::min(quantile(a), mean), std::max(quantile(1.0 - a), mean)};
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  int trial = 0;
  int path_index = 0;
  double reg_value = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double bound_value = 0.0;
  double norm_l1 = 0.0;
  double norm_l2 = 0.0;
  bool converged = true;
};

struct AggregateRow {
  int path_index = 0;
  double reg_value = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double bound_value = 0.0;
  double norm_l1 = 0.0;
  double norm_l2 = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (trial, path_index)
  std::vector<AggregateRow> aggregates;
  std::vector<double> grid;
  double null_risk = 0.0;
  double optimal_risk = 0.0;

  double nonconverged_fraction() const {
    if (rows.empty()) return 0.0;
    const auto bad = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.converged; });
    return static_cast<double>(bad) / static_cast<double>(rows.size());
  }
};

inline std::vector<AggregateRow> aggregate_rows(const std::vector<SweepRow>& rows, int resamples,
                                                std::uint64_t seed) {
  std::map<int, std::vector<const SweepRow*>> by_point;
  for (const auto& r : rows) by_point[r.path_index].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [idx, group] : by_point) {
    AggregateRow a;
    a.path_index = idx;
    a.reg_value = group.front()->reg_value;
    std::vector<double> tests;
    const double m = static_cast<double>(group.size());
    for (const auto* r : group) {
      a.train_loss += r->train_loss / m;
      a.test_loss += r->test_loss / m;
      a.bound_value += r->bound_value / m;
      a.norm_l1 += r->norm_l1 / m;
      a.norm_l2 += r->norm_l2 / m;
      tests.push_back(r->test_loss);
    }
    const auto ci = bootstrap_ci(tests, 0.95, resamples, derive_seed(seed, 0xB0075u, static_cast<std::uint64_t>(idx)));
    a.ci_lo = ci.lo;
    a.ci_hi = ci.hi;
    out.push_back(a);
  }
  return out;
}

namespace detail {

// Everything shared by the trials of one sweep.
struct SweepContext {
  ExperimentConfig cfg;
  DataModel model;
  std::vector<Vector> dirs;  // Sigma-orthonormal index directions
  Matrix SigmaW;             // columns Sigma w_i
  PerpStats perp;
  std::vector<double> grid;
  std::optional<OptimalPredictor> regression_opt;
  std::optional<LogisticReduction> reduction;
  std::optional<TestSetOracle> test_set;
  LossSpec loss = LossSpec::square();

  Vector apply_Q(const Vector& w) const {
    Vector out = w;
    for (std::size_t i = 0; i < dirs.size(); ++i) out -= dirs[i] * SigmaW.col(static_cast<Eigen::Index>(i)).dot(w);
    return out;
  }
  // Rows Q^T x_i, i.e. X Q = X - (X W)(Sigma W)^T.
  Matrix apply_Q_rows(const Matrix& X) const {
    if (dirs.empty()) return X;
    Matrix W(X.cols(), static_cast<Eigen::Index>(dirs.size()));
    for (std::size_t i = 0; i < dirs.size(); ++i) W.col(static_cast<Eigen::Index>(i)) = dirs[i];
    return X - (X * W) * SigmaW.transpose();
  }
};

inline std::vector<double> default_grid(const ExperimentConfig& c, const Dataset& pilot) {
  switch (c.fitter) {
    case FitterKind::Ridge: return default_ridge_grid(pilot.X, pilot.y, c.fit_intercept, c.grid_size);
    case FitterKind::Lasso: return default_lasso_grid(pilot.X, pilot.y, c.fit_intercept, c.grid_size);
    case FitterKind::SqHingeL2:
      return default_sq_hinge_grid(pilot.X, pilot.y, c.fit_intercept, false, c.grid_size);
    case FitterKind::SqHingeL1:
      return default_sq_hinge_grid(pilot.X, pilot.y, c.fit_intercept, true, c.grid_size);
    case FitterKind::ConstrainedL2: {
      // radii from 1% to 150% of the unconstrained least-squares norm, increasing
      const double bmax = min_norm_least_squares(pilot.X, pilot.y, c.fit_intercept).w.norm();
      auto g = log_grid(1.5 * std::max(bmax, 1e-12), 0.01 * std::max(bmax, 1e-12), c.grid_size);
      std::reverse(g.begin(), g.end());
      return g;
    }
  }
  return {};
}

inline SweepContext make_context(const ExperimentConfig& cfg) {
  SweepContext ctx;
  ctx.cfg = cfg;
  ctx.model = make_data_model(cfg);
  const auto mi = to_multi_index(ctx.model.labels, ctx.model.cov);
  ctx.dirs = mi.wstars;
  ctx.SigmaW.resize(cfg.d, static_cast<Eigen::Index>(ctx.dirs.size()));
  for (std::size_t i = 0; i < ctx.dirs.size(); ++i)
    ctx.SigmaW.col(static_cast<Eigen::Index>(i)) = ctx.model.cov.apply(ctx.dirs[i]);
  ctx.perp = perp_stats(ctx.model.cov, ctx.dirs);

  if (!cfg.grid.empty()) {
    ctx.grid = cfg.grid;
  } else {
    const auto pilot = sample_dataset(ctx.model, cfg.n, derive_seed(cfg.seed, 0x9121D));
    ctx.grid = default_grid(cfg, pilot);
  }

  const bool cls = cfg.labels == LabelKind::Logistic;
  ctx.loss = cls ? LossSpec::squared_hinge() : LossSpec::square();
  if (!cls) {
    const auto mt = cached_moment_table(cfg.moment_cache, cfg.features, cfg.moment_mc,
                                        derive_seed(cfg.seed, 0x3003), std::sqrt(ctx.model.cov.eigs(0)),
                                        std::sqrt(ctx.model.cov.eigs(std::min<Eigen::Index>(1, cfg.d - 1))));
    ctx.regression_opt = regression_optimal_predictor(ctx.model, mt);
  } else if (cfg.features == FeatureKind::Gaussian) {
    ctx.reduction.emplace(std::get<LogisticClassification>(ctx.model.labels), ctx.model.cov, cfg.n_mc,
                          derive_seed(cfg.seed, 0x0AC1E));
  } else {
    ctx.test_set.emplace(ctx.model, std::min<long long>(cfg.n_mc, 20000), derive_seed(cfg.seed, 0x7E57));
  }
  return ctx;
}

inline double test_loss(const SweepContext& ctx, const Vector& w, double b) {
  if (ctx.regression_opt) return regression_pop_risk(w, b, *ctx.regression_opt, ctx.model.cov).value;
  const bool zo = ctx.cfg.test_metric == TestMetric::ZeroOne;
  if (ctx.reduction) return zo ? ctx.reduction->zero_one(w, b).value : ctx.reduction->sq_hinge(w, b).value;
  return ctx.test_set->risk(zo ? LossSpec::zero_one() : ctx.loss, w, b).value;
}

inline RegPath fit_path(const SweepContext& ctx, const Dataset& ds) {
  const auto& c = ctx.cfg;
  switch (c.fitter) {
    case FitterKind::Ridge: return ridge_path(ds.X, ds.y, ctx.grid, c.fit_intercept);
    case FitterKind::Lasso: return lasso_path(ds.X, ds.y, ctx.grid, c.fit_intercept);
    case FitterKind::SqHingeL2: return sq_hinge_path(ds.X, ds.y, ctx.grid, false, c.fit_intercept);
    case FitterKind::SqHingeL1: return sq_hinge_path(ds.X, ds.y, ctx.grid, true, c.fit_intercept);
    case FitterKind::ConstrainedL2: {
      RegPath p;
      for (double B : ctx.grid)
        p.push(B, constrained_erm(ds.X, ds.y, ctx.loss, Ball{BallKind::L2, B}, c.fit_intercept));
      return p;
    }
  }
  return {};
}

inline std::vector<SweepRow> run_trial(const SweepContext& ctx, int trial) {
  const auto& c = ctx.cfg;
  const std::uint64_t tseed = derive_seed(c.seed, static_cast<std::uint64_t>(trial));
  const auto ds = sample_dataset(ctx.model, c.n, tseed);
  const auto path = fit_path(ctx, ds);
  const double n = static_cast<double>(c.n);

  Matrix XQ;
  if (c.bound == BoundKind::Rademacher && c.covariance != CovKind::Isotropic) XQ = ctx.apply_Q_rows(ds.X);

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Vector& w = path.coefficients[i];
    const double b = path.intercepts[i];
    SweepRow r;
    r.trial = trial;
    r.path_index = static_cast<int>(i);
    r.reg_value = path.reg_values[i];
    r.train_loss = path.train_losses[i];
    r.norm_l1 = path.norms_l1[i];
    r.norm_l2 = path.norms_l2[i];
    r.converged = path.converged[i];
    r.test_loss = test_loss(ctx, w, b);

    // complexity term, already divided by sqrt(n)
    double term = 0.0;
    switch (c.bound) {
      case BoundKind::Simple: term = c_simple(r.norm_l2, ctx.perp.trace, n); break;
      case BoundKind::Isotropic: term = c_isotropic(ctx.apply_Q(w).norm(), c.d, n); break;
      case BoundKind::DeltaBall:
        term = c_delta_ball(r.norm_l2, ctx.perp.trace, ctx.perp.op_norm, c.delta) / std::sqrt(n);
        break;
      case BoundKind::Rademacher: {
        const std::uint64_t s = derive_seed(tseed, 0x5167u, i);
        if (c.covariance == CovKind::Isotropic)
          term = ctx.apply_Q(w).lpNorm<1>() * rademacher_linf_mc(ds.X, c.rademacher_reps, s);
        else
          term = r.norm_l1 * rademacher_linf_mc(XQ, c.rademacher_reps, s);
        break;
      }
    }
    r.bound_value = optimistic_bound(r.train_loss, term * std::sqrt(n), n, c.correction);
    rows.push_back(r);
  }
  return rows;
}

inline void reference_lines(const SweepContext& ctx, SweepResult& res) {
  const auto& c = ctx.cfg;
  if (ctx.regression_opt) {
    const auto& op = *ctx.regression_opt;
    const double shift = c.fit_intercept ? op.mean_y * op.mean_y : 0.0;
    res.null_risk = op.second_moment_y - shift;
    res.optimal_risk = op.risk - shift;
    return;
  }
  const auto& lm = std::get<LogisticClassification>(ctx.model.labels);
  const double p = logistic_positive_rate(lm, ctx.model.cov);
  if (c.test_metric == TestMetric::ZeroOne) {
    res.null_risk = std::min(p, 1.0 - p);
    res.optimal_risk = logistic_bayes_zero_one(lm, ctx.model.cov);
    return;
  }
  res.null_risk = c.fit_intercept ? 4.0 * p * (1.0 - p) : 1.0;
  // The optimal linear predictor is aligned with w*, so a 1-D problem in x1 suffices.
  const double s1 = std::sqrt(ctx.model.cov.eigs(0));
  CoordinateSampler zs(c.features);
  auto sampler = [&](Rng& rng) {
    const double x = s1 * zs(rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return std::pair<double, double>{x, u < sigmoid(lm.wstar_coef * x + lm.bstar) ? 1.0 : -1.0};
  };
  const auto opt = one_pass_sgd_1d(sampler, {0.0, 0.0}, 0.1, 1'000'000, derive_seed(c.seed, 0x56D));
  Vector w = Vector::Zero(c.d);
  w(0) = opt.w1;
  res.optimal_risk = test_loss(ctx, w, c.fit_intercept ? opt.b : 0.0);
}

}  // namespace detail

/// Runs every trial (concurrently), then sorts and aggregates. Output depends only on the config.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.preset != "sharpness-l1", "run_sweep: use run_sharpness_l1 for the sharpness preset");
  const auto ctx = detail::make_context(cfg);

  std::vector<std::vector<SweepRow>> per_trial(static_cast<std::size_t>(cfg.trials));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex fail_mtx;
  auto worker = [&] {
    for (int t = next++; t < cfg.trials; t = next++) {
      try {
        per_trial[static_cast<std::size_t>(t)] = detail::run_trial(ctx, t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(fail_mtx);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned nthreads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min<unsigned>(nthreads, static_cast<unsigned>(cfg.trials));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult res;
  res.grid = ctx.grid;
  for (auto& v : per_trial) res.rows.insert(res.rows.end(), v.begin(), v.end());
  std::sort(res.rows.begin(), res.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.trial, a.path_index) < std::tie(b.trial, b.path_index);
  });
  res.aggregates = aggregate_rows(res.rows, cfg.bootstrap_resamples, cfg.seed);
  detail::reference_lines(ctx, res);
  return res;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kSweepHeader =
    "trial,path_index,reg_value,train_loss,test_loss,bound_value,norm_l1,norm_l2";
inline constexpr const char* kAggregateHeader =
    "path_index,reg_value,train_loss,test_loss,bound_value,norm_l1,norm_l2,mean_test,ci_lo,ci_hi,mean_bound";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  using detail::fmt;
  os << kSweepHeader << '\n';
  for (const auto& r : rows)
    os << r.trial << ',' << r.path_index << ',' << fmt(r.reg_value) << ',' << fmt(r.train_loss) << ','
       << fmt(r.test_loss) << ',' << fmt(r.bound_value) << ',' << fmt(r.norm_l1) << ','
       << fmt(r.norm_l2) << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& agg) {
  using detail::fmt;
  os << kAggregateHeader << '\n';
  for (const auto& a : agg)
    os << a.path_index << ',' << fmt(a.reg_value) << ',' << fmt(a.train_loss) << ',' << fmt(a.test_loss)
       << ',' << fmt(a.bound_value) << ',' << fmt(a.norm_l1) << ',' << fmt(a.norm_l2) << ','
       << fmt(a.test_loss) << ',' << fmt(a.ci_lo) << ',' << fmt(a.ci_hi) << ',' << fmt(a.bound_value)
       << '\n';
}

inline std::vector<SweepRow> read_sweep_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kSweepHeader, "read_sweep_csv: bad header");
  std::vector<SweepRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 8, "read_sweep_csv: expected 8 columns");
    SweepRow r;
    r.trial = std::stoi(cells[0]);
    r.path_index = std::stoi(cells[1]);
    r.reg_value = std::stod(cells[2]);
    r.train_loss = std::stod(cells[3]);
    r.test_loss = std::stod(cells[4]);
    r.bound_value = std::stod(cells[5]);
    r.norm_l1 = std::stod(cells[6]);
    r.norm_l2 = std::stod(cells[7]);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json sweep_summary_json(const ExperimentConfig& cfg, const SweepResult& res) {
  return {{"config", to_json(cfg)},
          {"null_risk", res.null_risk},
          {"optimal_risk", res.optimal_risk},
          {"grid", res.grid},
          {"nonconverged_fraction", res.nonconverged_fraction()}};
}

// ---------------------------------------------------------------------------
// Sharpness of the Lipschitz bound for the absolute loss

struct SharpnessRecord {
  int n = 0;
  double r = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gap = 0.0;
  double bound = 0.0;  // ||w|| sqrt(Tr(Sigma) / n), the bound on the gap
  double ratio = 0.0;  // gap / bound
};

namespace detail {

// Gap/bound ratio once d_J -> infinity with the training average replaced by its mean.
inline double sharpness_limit_ratio(double r, double n, double dj_factor) {
  const double lam = std::sqrt(n);
  const double s = std::sqrt(1.0 + r * r);  // sd of e = y - r x1 at sigma = 1
  const double t = 1.0 / s;
  const double e_pos = 2.0 * (normal_cdf(t) - 0.5) - 2.0 * s * (normal_pdf(0.0) - normal_pdf(t));
  const double train = s * std::sqrt(2.0 / std::numbers::pi) - 1.0 + 2.0 * e_pos;
  const double test = std::sqrt(2.0 / std::numbers::pi) * std::sqrt(s * s + 1.0 / dj_factor);
  const double bound = std::sqrt(r * r + n / lam) * std::sqrt((1.0 + lam) / n);
  return (test - train) / bound;
}

}  // namespace detail

/// The scale-free choice of r (at sigma = 1) maximizing the limiting ratio.
inline double sharpness_r(int n, double dj_factor) {
  double best_r = 0.0, best = -1e300;
  for (int i = 0; i <= 4000; ++i) {
    const double r = 0.005 * i;
    const double v = detail::sharpness_limit_ratio(r, n, dj_factor);
    if (v > best) {
      best = v;
      best_r = r;
    }
  }
  return best_r;
}

/// y ~ N(0, sigma^2) independent of x ~ N(0, diag(1, (sqrt(n)/d_J) I)); w = (r, w~) where
/// w~ is the least-norm solution of <w~, x_i~> = sigma sgn(y_i - r x_i1).
inline SharpnessRecord run_sharpness_l1(int n, double dj_factor, double sigma, std::uint64_t seed,
                                        std::optional<double> r_override = std::nullopt) {
  require(n >= 2, "run_sharpness_l1: n must be >= 2");
  require(dj_factor >= 1, "run_sharpness_l1: dj_factor must be >= 1");
  require(sigma >= 0, "run_sharpness_l1: sigma must be nonnegative");
  const double nd = static_cast<double>(n);
  const double lam = std::sqrt(nd);
  const auto dj = static_cast<Eigen::Index>(std::llround(dj_factor * nd));
  const double r = r_override.value_or(sigma * sharpness_r(n, dj_factor));

  Rng rng(seed);
  std::normal_distribution<double> nrm(0.0, 1.0);
  Vector x1(n), y(n);
  for (int i = 0; i < n; ++i) x1(i) = nrm(rng);
  for (int i = 0; i < n; ++i) y(i) = sigma * nrm(rng);
  const double sj = std::sqrt(lam / static_cast<double>(dj));
  Matrix Xj(n, dj);
  for (Eigen::Index j = 0; j < dj; ++j)
    for (int i = 0; i < n; ++i) Xj(i, j) = sj * nrm(rng);

  const Vector e = y - r * x1;
  const Vector target = e.unaryExpr([&](double v) { return v > 0 ? sigma : (v < 0 ? -sigma : 0.0); });
  const Matrix G = Xj * Xj.transpose();
  const Vector wj = Xj.transpose() * G.ldlt().solve(target);

  SharpnessRecord rec;
  rec.n = n;
  rec.r = r;
  rec.train_loss = (e - Xj * wj).cwiseAbs().mean();
  const double test_sd = std::sqrt(sigma * sigma + r * r + wj.squaredNorm() * lam / static_cast<double>(dj));
  rec.test_loss = std::sqrt(2.0 / std::numbers::pi) * test_sd;
  rec.gap = rec.test_loss - rec.train_loss;
  const double norm_w = std::sqrt(r * r + wj.squaredNorm());
  rec.bound = c_simple(norm_w, 1.0 + lam, nd);
  rec.ratio = rec.bound > 0 ? rec.gap / rec.bound : 0.0;
  return rec;
}

inline std::vector<SharpnessRecord> run_sharpness_trials(const ExperimentConfig& cfg) {
  std::vector<SharpnessRecord> out;
  for (int t = 0; t < cfg.trials; ++t)
    out.push_back(run_sharpness_l1(cfg.n, cfg.dj_factor, cfg.sigma, derive_seed(cfg.seed, static_cast<std::uint64_t>(t))));
  return out;
}

inline void write_sharpness_csv(std::ostream& os, const std::vector<SharpnessRecord>& recs) {
  using detail::fmt;
  os << "trial,n,r,train_loss,test_loss,gap,bound,ratio\n";
  for (std::size_t t = 0; t < recs.size(); ++t) {
    const auto& r = recs[t];
    os << t << ',' << r.n << ',' << fmt(r.r) << ',' << fmt(r.train_loss) << ',' << fmt(r.test_loss) << ','
       << fmt(r.gap) << ',' << fmt(r.bound) << ',' << fmt(r.ratio) << '\n';
  }
}

}  // namespace moreau
