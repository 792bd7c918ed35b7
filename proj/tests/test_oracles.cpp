#include "moreau/oracles.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

using namespace moreau;
using Catch::Approx;

namespace {

DataModel misspecified(FeatureKind f, CovarianceSpec cov) {
  return {f, std::move(cov), MisspecifiedRegression{}};
}

DataModel logistic(Eigen::Index d) {
  return {FeatureKind::Gaussian, CovarianceSpec::junk(d, 1), LogisticClassification{}};
}

double gauss_integral(const std::function<double(double)>& f) {
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  return gauss_kronrod<double, 61>::integrate(
      [&](double z) { return f(z) * std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi); }, -inf, inf, 15,
      1e-13);
}

}  // namespace

TEST_CASE("Gaussian moment table matches quadrature") {
  for (double s : {0.5, 1.0, 2.0}) {
    const auto t = gaussian_moments(s, s);
    CHECK(t.m_abs == Approx(gauss_integral([&](double z) { return std::abs(s * z); })).epsilon(1e-10));
    CHECK(t.m_sgn == Approx(0).margin(1e-12));
    CHECK(t.m_cos == Approx(gauss_integral([&](double z) { return std::cos(s * z); })).epsilon(1e-10));
    CHECK(t.m_zcos == Approx(0).margin(1e-12));
    CHECK(t.m_cos2 == Approx(gauss_integral([&](double z) { return std::pow(std::cos(s * z), 2); })).epsilon(1e-10));
  }
}

TEST_CASE("Monte Carlo moment tables approach the analytic values") {
  // a Gaussian request is always analytic, so sample the uniform law against its closed forms
  const auto t = build_moment_table(FeatureKind::Uniform, 2'000'000, 3);
  const double r3 = std::sqrt(3.0);
  CHECK(t.m_abs == Approx(r3 / 2).margin(2e-3));
  CHECK(t.m_sgn == Approx(0).margin(3e-3));
  CHECK(t.m_cos == Approx(std::sin(r3) / r3).margin(2e-3));
  CHECK(t.m_cos2 == Approx(0.5 + std::sin(2 * r3) / (4 * r3)).margin(2e-3));
  CHECK(t.mc_samples == 2'000'000);
  CHECK(build_moment_table(FeatureKind::Gaussian, 5).mc_samples == 0);
}

TEST_CASE("moment cache stores and reloads tables") {
  const auto path = (std::filesystem::temp_directory_path() / "moreau_test_moment_cache.json").string();
  std::remove(path.c_str());
  const auto a = cached_moment_table(path, FeatureKind::Laplace, 20000, 4);
  CHECK(std::filesystem::exists(path));
  const auto b = cached_moment_table(path, FeatureKind::Laplace, 20000, 4);
  CHECK(a.m_abs == b.m_abs);
  CHECK(a.m_cos2 == b.m_cos2);
  const auto c = cached_moment_table(path, FeatureKind::Laplace, 20000, 5);
  CHECK(c.m_abs != a.m_abs);
  const auto rt = moment_table_from_json(to_json(a));
  CHECK(rt.m_zcos == a.m_zcos);
  CHECK(rt.dist == FeatureKind::Laplace);
  std::remove(path.c_str());
}

TEST_CASE("misspecified Gaussian regression reference values") {
  const auto model = misspecified(FeatureKind::Gaussian, CovarianceSpec::junk(10, 3));
  const auto op = regression_optimal_predictor(model, gaussian_moments());
  const double ec = std::exp(-0.5), m_abs = std::sqrt(2 / std::numbers::pi);
  const double cos2 = 0.5 * (1 + std::exp(-2.0));
  CHECK(op.w_tilde(0) == Approx(1.5));
  CHECK(op.w_tilde(1) == Approx(0).margin(1e-15));
  CHECK(op.mean_y == Approx(m_abs * ec));
  CHECK(op.risk == Approx(cos2 + 0.5));
  CHECK(op.second_moment_y == Approx(2.25 + cos2 + 0.5));
  CHECK(op.second_moment_y - op.mean_y * op.mean_y == Approx(3.083).margin(1e-3));
  CHECK(op.risk - op.mean_y * op.mean_y == Approx(0.833).margin(1e-3));
}

TEST_CASE("closed-form regression risk agrees with Monte Carlo") {
  Rng rng(5);
  std::normal_distribution<double> nrm(0, 1);
  int k = 0;
  for (auto f : {FeatureKind::Gaussian, FeatureKind::Laplace, FeatureKind::Uniform}) {
    for (auto cov : {CovarianceSpec::junk(12, 3), CovarianceSpec::harmful(12, 3)}) {
      const auto model = misspecified(f, cov);
      const auto mt = build_moment_table(f, 4'000'000, 6);
      Vector w(12);
      for (auto& x : w) x = 0.5 * nrm(rng);
      const double b = 0.3 * nrm(rng);
      const auto closed = regression_pop_risk(w, b, model, mt);
      const auto mc = mc_pop_risk(LossSpec::square(), w, b, model, 400000, derive_seed(7, k++));
      INFO(to_string(f));
      CHECK(closed.method == RiskMethod::ClosedForm);
      CHECK(std::abs(closed.value - mc.value) <= 4 * mc.std_error + 2e-3 * closed.value);
    }
  }
}

TEST_CASE("well-specified optimal risk is the noise variance") {
  Vector ws = Vector::Zero(6);
  ws(0) = 1;
  ws(3) = -2;
  const DataModel model{FeatureKind::Rademacher, CovarianceSpec::harmful(6, 2), WellSpecifiedLinear{ws, 0.7}};
  const auto op = regression_optimal_predictor(model, gaussian_moments());
  CHECK(op.risk == Approx(0.7));
  CHECK(regression_pop_risk(ws, 0, model, gaussian_moments()).value == Approx(0.7));
  const auto mc = mc_pop_risk(LossSpec::square(), ws, 0, model, 200000, 8);
  CHECK(mc.value == Approx(0.7).margin(4 * mc.std_error));
}

TEST_CASE("risk grows by the squared Sigma-distance from the optimum") {
  const auto cov = CovarianceSpec::harmful(8, 3);
  const auto model = misspecified(FeatureKind::Gaussian, cov);
  const auto op = regression_optimal_predictor(model, gaussian_moments());
  Vector v = Vector::Zero(8);
  v(5) = 1 / std::sqrt(cov.eigs(5));
  CHECK(regression_pop_risk(op.w_tilde + v, 0, op, cov).value == Approx(op.risk + 1));
  CHECK(regression_pop_risk(op.w_tilde, op.mean_y, op, cov).value == Approx(op.risk - op.mean_y * op.mean_y));
}

TEST_CASE("optimal predictor satisfies the normal equations") {
  for (auto f : {FeatureKind::Gaussian, FeatureKind::StudentT5}) {
    const auto cov = CovarianceSpec::harmful(5, 3);
    const auto model = misspecified(f, cov);
    const auto op = regression_optimal_predictor(model, build_moment_table(f, 4'000'000, 9));
    const auto ds = sample_dataset(model, 1'000'000, 10);
    const Vector resid = ds.y - ds.X * op.w_tilde;
    const Vector g = ds.X.transpose() * resid / static_cast<double>(ds.n());
    INFO(to_string(f));
    CHECK(g.cwiseAbs().maxCoeff() <= 0.01);
  }
}

TEST_CASE("projecting away non-index directions lowers the square-loss risk") {
  const auto cov = CovarianceSpec::junk(20, 3);
  const auto model = misspecified(FeatureKind::Gaussian, cov);
  const auto op = regression_optimal_predictor(model, gaussian_moments());
  Rng rng(11);
  std::normal_distribution<double> nrm(0, 1);
  for (int t = 0; t < 20; ++t) {
    Vector w(20);
    for (auto& x : w) x = nrm(rng);
    Vector proj = Vector::Zero(20);
    proj.head(3) = w.head(3);
    CHECK(regression_pop_risk(proj, 0.1, op, cov).value <= regression_pop_risk(w, 0.1, op, cov).value);
  }
}

TEST_CASE("classification reduction reference points") {
  const auto model = logistic(20);
  const auto& lm = std::get<LogisticClassification>(model.labels);
  const LogisticReduction red(lm, model.cov, 200000, 12);
  CHECK(red.sq_hinge(Vector::Zero(20), 0).value == Approx(1));
  CHECK(red.signal_variance() == Approx(25));
  Vector aligned = Vector::Zero(20);
  aligned(0) = 0.3;
  CHECK(red.reduce(aligned).sigma == Approx(0).margin(1e-12));
  CHECK(red.reduce(aligned).slope == Approx(0.06));
  Vector off = Vector::Zero(20);
  off(7) = 2;
  CHECK(red.reduce(off).sigma == Approx(2 * std::sqrt(0.0025)));

  const double p = logistic_positive_rate(lm, model.cov);
  CHECK(logistic_null_sq_hinge(lm, model.cov) == Approx(4 * p * (1 - p)));
  double best = 1e9;
  for (int i = -200; i <= 200; ++i) best = std::min(best, red.sq_hinge(Vector::Zero(20), i / 200.0).value);
  CHECK(best == Approx(logistic_null_sq_hinge(lm, model.cov)).epsilon(0.01));
}

TEST_CASE("classification reduction agrees with fresh Monte Carlo") {
  const auto model = logistic(15);
  const auto& lm = std::get<LogisticClassification>(model.labels);
  const LogisticReduction red(lm, model.cov, 400000, 13);
  Rng rng(14);
  std::normal_distribution<double> nrm(0, 1);
  for (int t = 0; t < 4; ++t) {
    Vector w(15);
    for (auto& x : w) x = 0.4 * nrm(rng);
    const double b = 0.5 * nrm(rng);
    const auto r = red.sq_hinge(w, b);
    const auto mc = mc_pop_risk(LossSpec::squared_hinge(), w, b, model, 400000, derive_seed(15, t));
    CHECK(std::abs(r.value - mc.value) <= 4 * (mc.std_error + r.std_error));
    const auto z = red.zero_one(w, b);
    const auto zmc = mc_pop_risk(LossSpec::zero_one(), w, b, model, 400000, derive_seed(16, t));
    CHECK(std::abs(z.value - zmc.value) <= 4 * (zmc.std_error + z.std_error));
    CHECK(z.value <= r.value);
  }
}

TEST_CASE("zero-one risk entry point and Bayes risk") {
  const auto model = logistic(10);
  const auto& lm = std::get<LogisticClassification>(model.labels);
  Vector w = Vector::Zero(10);
  w(0) = 5;
  const double bayes = logistic_bayes_zero_one(lm, model.cov);
  CHECK(zero_one_risk(w, 3, model, ZeroOneMethod::TwoDimReduction, 400000, 1).value ==
        Approx(bayes).margin(0.003));
  const double quad = gauss_integral([](double z) {
    const double g = sigmoid(5 * z + 3);
    return std::min(g, 1 - g);
  });
  CHECK(bayes == Approx(quad).epsilon(1e-6));
  const auto reg = misspecified(FeatureKind::Gaussian, CovarianceSpec::junk(5, 3));
  CHECK_THROWS_AS(zero_one_risk(Vector::Zero(5), 0, reg, ZeroOneMethod::MonteCarlo), DomainError);
  const DataModel laplace{FeatureKind::Laplace, CovarianceSpec::junk(10, 1), LogisticClassification{}};
  CHECK_THROWS_AS(zero_one_risk(w, 0, laplace, ZeroOneMethod::TwoDimReduction), DomainError);
}

TEST_CASE("hypercontractivity ratio") {
  Vector ws = Vector::Zero(3);
  ws(0) = 1;
  const DataModel noiseless{FeatureKind::Gaussian, CovarianceSpec::isotropic(3), WellSpecifiedLinear{ws, 0.0}};
  CHECK_THROWS_AS(hypercontractivity_ratio(LossSpec::square(), ws, 0, noiseless, 4, 1000, 1), DomainError);
  // constant loss: y - yhat = 2 on every sample
  const auto c = hypercontractivity_ratio(LossSpec::square(), ws, -2, noiseless, 4, 1000, 1);
  CHECK(c.tau == Approx(1));
  CHECK(c.rel_se == Approx(0).margin(1e-9));

  // residual N(0, 1) gives f = Z^2 with E f^4 = 105
  const DataModel noisy{FeatureKind::Gaussian, CovarianceSpec::isotropic(3), WellSpecifiedLinear{ws, 1.0}};
  const auto g = hypercontractivity_ratio(LossSpec::square(), ws, 0, noisy, 8, 2'000'000, 2);
  CHECK(g.tau == Approx(std::pow(105.0, 0.25)).epsilon(0.05));
  CHECK(g.ratio == Approx(std::sqrt(g.tau)));
  CHECK_THROWS_AS(hypercontractivity_from_moments(1, 1, 1, 10, 6), DomainError);
  CHECK(hypercontractivity_from_moments(10, 10, 10, 10, 4).tau == Approx(1));
}
