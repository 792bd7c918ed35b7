// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

#include "moreau/moreau.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

using namespace moreau;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Shared random sample for the envelope criteria.
struct EnvelopeCase {
  LossSpec loss;
  double lambda, yhat, y;
};

std::vector<EnvelopeCase> envelope_cases() {
  Rng rng(2024);
  std::uniform_real_distribution<double> u(-10.0, 10.0), loglam(-3.0, 3.0);
  const LossSpec kinds[] = {LossSpec::square(), LossSpec::squared_hinge(), LossSpec::absolute_error(),
                            LossSpec::hinge()};
  std::vector<EnvelopeCase> out;
  for (int i = 0; i < 1000; ++i) {
    const LossSpec& l = kinds[i % 4];
    const double lam = std::pow(10.0, loglam(rng));
    const double yhat = u(rng);
    double y = u(rng);
    if (l.is_margin()) y = y < 0 ? -1.0 : 1.0;
    out.push_back({l, lam, yhat, y});
  }
  return out;
}

Outcome c1_closed_form() {
  double worst = 0.0;
  for (const auto& c : envelope_cases()) {
    const double a = *moreau_closed(c.loss, c.lambda, c.yhat, c.y);
    const double b = moreau_numeric(c.loss, c.lambda, c.yhat, c.y);
    worst = std::max(worst, std::abs(a - b));
  }
  return {worst <= 1e-8, fmt("max |closed - numeric| = %.3g (tol 1e-8)", worst)};
}

Outcome c2_envelope_properties() {
  int bad_mono = 0, bad_range = 0, bad_gap = 0;
  for (const auto& c : envelope_cases()) {
    const double f = loss_value(c.loss, c.yhat, c.y);
    const double lo = moreau_numeric(c.loss, c.lambda, c.yhat, c.y);
    const double hi = moreau_numeric(c.loss, 2.0 * c.lambda, c.yhat, c.y);
    if (lo > hi + 1e-10) ++bad_mono;
    if (lo < -1e-12 || lo > f + 1e-10) ++bad_range;
    const bool lipschitz1 = c.loss.kind == LossKind::AbsoluteError || c.loss.kind == LossKind::Hinge;
    if (lipschitz1 && f - lo > lipschitz_gap_bound(1.0, c.lambda) + 1e-8) ++bad_gap;
  }
  return {bad_mono + bad_range + bad_gap == 0,
          fmt("violations: monotone %d, range %d, gap %d", bad_mono, bad_range, bad_gap)};
}

Outcome c3_lambda_calculus() {
  Rng rng(77);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    // lambda/(1+lambda) a - lambda b is concave in lambda; its maximizer is sqrt(a/b) - 1.
    double best = 0.0;
    const double hi = std::max(1.0, 2.0 * std::sqrt(a / std::max(b, 1e-12)));
    for (int j = 0; j < 10000; ++j) {
      const double lam = hi * j / 9999.0;
      best = std::max(best, lam / (1 + lam) * a - lam * b);
    }
    worst = std::max(worst, std::abs(best - optimize_lambda_square_family(a, b)));
  }
  return {worst <= 1e-6, fmt("max |grid - closed| = %.3g (tol 1e-6)", worst)};
}

Outcome bound_validity(const std::string& preset_name, int trials) {
  auto cfg = preset(preset_name);
  cfg.trials = trials;
  cfg.seed = 4;
  const auto res = run_sweep(cfg);
  std::size_t ok = 0;
  for (const auto& r : res.rows) ok += r.bound_value >= r.test_loss;
  const double frac = static_cast<double>(ok) / res.rows.size();
  return {frac >= 0.95, fmt("bound >= test loss on %.1f%% of %zu (trial, point) pairs (need 95%%)", 100 * frac,
                            res.rows.size())};
}

Outcome c6_benign_flatness() {
  auto ratio_for = [](CovKind kind) {
    auto cfg = preset("junk-ridge");
    cfg.covariance = kind;
    cfg.d = 2000;
    cfg.seed = 6;
    const auto model = make_data_model(cfg);
    const auto mt = gaussian_moments(1.0, 1.0);
    const auto opt = regression_optimal_predictor(model, mt);
    std::vector<double> interp, best;
    for (int t = 0; t < 20; ++t) {
      const auto ds = sample_dataset(model, cfg.n, derive_seed(cfg.seed, t));
      const auto grid = default_ridge_grid(ds.X, ds.y, true, 50);
      const auto path = ridge_path(ds.X, ds.y, grid, true);
      double b = 1e300;
      for (std::size_t i = 0; i < path.size(); ++i)
        b = std::min(b, regression_pop_risk(path.coefficients[i], path.intercepts[i], opt, model.cov).value);
      const auto mn = min_norm_least_squares(ds.X, ds.y, true);
      interp.push_back(regression_pop_risk(mn.w, mn.b, opt, model.cov).value);
      best.push_back(b);
    }
    return mean_of(interp) / mean_of(best);
  };
  const double junk = ratio_for(CovKind::Junk);
  const double harmful = ratio_for(CovKind::Harmful);
  return {junk <= 1.25 && harmful >= 1.5,
          fmt("interpolator / best ridge: junk %.3f (need <= 1.25), harmful %.3f (need >= 1.5)", junk, harmful)};
}

Outcome c7_ols_psi() {
  const int n = 400, d = 100;
  DataModel model;
  model.features = FeatureKind::Gaussian;
  model.cov = CovarianceSpec::isotropic(d);
  Vector ws = Vector::Zero(d);
  ws(0) = 1.0;
  model.labels = WellSpecifiedLinear{ws, 1.0};
  std::vector<double> excess;
  for (int t = 0; t < 50; ++t) {
    const auto ds = sample_dataset(model, n, derive_seed(7, t));
    const auto fit = min_norm_least_squares(ds.X, ds.y, false);
    excess.push_back((fit.w - ws).squaredNorm());  // Sigma = I
  }
  const double target = ols_psi_excess(1.0, d, n);
  const double m = mean_of(excess);
  return {std::abs(m - target) <= 0.15 * target,
          fmt("mean excess %.4f vs predicted %.4f (rel err %.1f%%, tol 15%%)", m, target,
              100 * std::abs(m - target) / target)};
}

Outcome c8_oracle_crosscheck() {
  Rng rng(8);
  std::normal_distribution<double> nrm(0.0, 1.0);
  const FeatureKind dists[] = {FeatureKind::Gaussian, FeatureKind::Uniform, FeatureKind::Laplace,
                               FeatureKind::Rademacher, FeatureKind::PoissonCentered};
  const int d = 20;
  std::map<FeatureKind, MomentTable> tables;
  for (auto dist : dists)
    tables[dist] = dist == FeatureKind::Gaussian ? gaussian_moments(1.0, 1.0)
                                                 : build_moment_table(dist, 10'000'000, 8, 1.0, 1.0);
  double worst_reg = 0.0;
  for (int i = 0; i < 50; ++i) {
    DataModel model;
    model.features = dists[i % 5];
    model.cov = i % 2 ? CovarianceSpec::junk(d, 3) : CovarianceSpec::harmful(d, 3);
    model.labels = MisspecifiedRegression{};
    const auto& mt = tables[model.features];
    Vector w(d);
    for (int j = 0; j < d; ++j) w(j) = 0.5 * nrm(rng);
    const double b = 0.5 * nrm(rng);
    const double closed = regression_pop_risk(w, b, model, mt).value;
    const double mc = mc_pop_risk(LossSpec::square(), w, b, model, 1'000'000, derive_seed(80, i)).value;
    worst_reg = std::max(worst_reg, std::abs(closed - mc) / mc);
  }
  const int dc = 50;
  double worst_cls = 0.0;
  for (int i = 0; i < 20; ++i) {
    DataModel model;
    model.features = FeatureKind::Gaussian;
    model.cov = CovarianceSpec::junk(dc, 1);
    const LogisticClassification lm{};
    model.labels = lm;
    Vector w(dc);
    for (int j = 0; j < dc; ++j) w(j) = (j == 0 ? 1.0 : 0.3) * nrm(rng);
    const double b = 0.5 * nrm(rng);
    const double red = classification_pop_sq_hinge(w, b, lm, model.cov, 1'000'000, derive_seed(81, i)).value;
    const double mc = mc_pop_risk(LossSpec::squared_hinge(), w, b, model, 1'000'000, derive_seed(82, i)).value;
    worst_cls = std::max(worst_cls, std::abs(red - mc) / mc);
  }
  return {worst_reg <= 0.01 && worst_cls <= 0.02,
          fmt("max rel err: regression %.3f%% (tol 1%%), classification %.3f%% (tol 2%%)", 100 * worst_reg,
              100 * worst_cls)};
}

Outcome c9_sharpness() {
  const int ns[] = {100, 200, 400};
  double means[3], lo[3];
  for (int k = 0; k < 3; ++k) {
    std::vector<double> ratios;
    for (int t = 0; t < 20; ++t) ratios.push_back(run_sharpness_l1(ns[k], 20.0, 1.0, derive_seed(9, ns[k], t)).ratio);
    means[k] = mean_of(ratios);
    lo[k] = bootstrap_ci(ratios, 0.95, 1000, derive_seed(90, k)).lo;
  }
  const bool in_range = means[2] >= 0.6 && means[2] <= 1.05;
  const bool monotone = means[1] >= lo[0] && means[2] >= lo[1];
  return {in_range && monotone, fmt("mean gap/bound at n=100,200,400: %.3f, %.3f, %.3f (need [0.6, 1.05] at 400, "
                                    "nondecreasing within CI)",
                                    means[0], means[1], means[2])};
}

Outcome c10_determinism() {
  std::vector<std::string> bad;
  for (const auto& name : preset_names()) {
    auto run = [&](unsigned threads) {
      auto cfg = preset(name);
      cfg.trials = 3;
      cfg.seed = 10;
      cfg.threads = threads;
      std::ostringstream os;
      if (name == "sharpness-l1") {
        cfg.n = 100;
        write_sharpness_csv(os, run_sharpness_trials(cfg));
      } else {
        const auto res = run_sweep(cfg);
        write_sweep_csv(os, res.rows);
        write_aggregate_csv(os, res.aggregates);
      }
      return os.str();
    };
    const auto a = run(4), b = run(4), c = run(1);
    if (a != b || a != c) bad.push_back(name);
  }
  std::string which;
  for (const auto& s : bad) which += " " + s;
  return {bad.empty(), bad.empty() ? fmt("%zu presets byte-identical across runs and thread counts",
                                         preset_names().size())
                                   : "differing presets:" + which};
}

Outcome c11_hypercontractivity() {
  DataModel model;
  model.features = FeatureKind::Gaussian;
  model.cov = CovarianceSpec::isotropic(1);
  Vector ws = Vector::Ones(1);
  model.labels = WellSpecifiedLinear{ws, 1.0};
  const auto h = hypercontractivity_ratio(LossSpec::square(), ws, 0.0, model, 8, 10'000'000, 11);
  const double target = std::pow(105.0, 0.25);
  const double rel = std::abs(h.tau - target) / target;
  return {rel <= 0.03, fmt("tau %.4f vs 105^(1/4) = %.4f (rel err %.2f%%, tol 3%%); raw q=8 ratio %.4f", h.tau,
                           target, 100 * rel, h.ratio)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"envelope closed form", c1_closed_form},
      {"envelope properties", c2_envelope_properties},
      {"lambda calculus", c3_lambda_calculus},
      {"bound validity regression", [] { return bound_validity("fig1-regression", 50); }},
      {"bound validity classification", [] { return bound_validity("fig1-classification", 50); }},
      {"benign overfitting flatness", c6_benign_flatness},
      {"ols psi prediction", c7_ols_psi},
      {"oracle cross-validation", c8_oracle_crosscheck},
      {"l1 sharpness trend", c9_sharpness},
      {"determinism", c10_determinism},
      {"hypercontractivity", c11_hypercontractivity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
