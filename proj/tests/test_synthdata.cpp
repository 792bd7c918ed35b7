#include "moreau/synthdata.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <catch_amalgamated.hpp>

#include <sstream>

using namespace moreau;
using Catch::Approx;

namespace {

struct Moments {
  double mean, var, skew;
};

Moments coordinate_moments(FeatureKind kind, int n, std::uint64_t seed) {
  Rng rng(seed);
  CoordinateSampler s(kind);
  std::vector<double> v(n);
  for (auto& x : v) x = s(rng);
  double m = 0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0, m3 = 0;
  for (double x : v) {
    m2 += (x - m) * (x - m);
    m3 += (x - m) * (x - m) * (x - m);
  }
  m2 /= n;
  m3 /= n;
  return {m, m2, m3 / std::pow(m2, 1.5)};
}

}  // namespace

TEST_CASE("every coordinate law is standardized") {
  for (auto kind : kAllFeatureKinds) {
    INFO(to_string(kind));
    const auto m = coordinate_moments(kind, 1'000'000, 1);
    CHECK(std::abs(m.mean) <= 0.01);
    CHECK(std::abs(m.var - 1) <= 0.02);
  }
}

TEST_CASE("symmetric laws have no skew, the others skew right") {
  for (auto kind : {FeatureKind::Gaussian, FeatureKind::Uniform, FeatureKind::Laplace, FeatureKind::Rademacher,
                    FeatureKind::StudentT5})
    CHECK(std::abs(coordinate_moments(kind, 1'000'000, 2).skew) <= 0.05);
  for (auto kind : {FeatureKind::PoissonCentered, FeatureKind::WeibullHalf, FeatureKind::LogNormal})
    CHECK(coordinate_moments(kind, 1'000'000, 3).skew > 0.5);
}

TEST_CASE("uniform coordinates live on [-sqrt 3, sqrt 3]") {
  Rng rng(4);
  CoordinateSampler s(FeatureKind::Uniform);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 100000; ++i) {
    const double x = s(rng);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo >= -std::sqrt(3.0));
  CHECK(hi <= std::sqrt(3.0));
  CHECK(hi - lo > 3.4);
}

TEST_CASE("lognormal minimum matches its standardization shift") {
  Rng rng(5);
  CoordinateSampler s(FeatureKind::LogNormal);
  double lo = 1e9;
  for (int i = 0; i < 200000; ++i) lo = std::min(lo, s(rng));
  const double e = std::exp(1.0);
  CHECK(lo >= -std::sqrt(e) / std::sqrt(e * (e - 1)));
}

TEST_CASE("feature names round-trip") {
  for (auto kind : kAllFeatureKinds) CHECK(feature_kind_from_string(to_string(kind)) == kind);
  CHECK_THROWS_AS(feature_kind_from_string("cauchy"), DomainError);
}

TEST_CASE("covariance eigenvalues follow the three regimes") {
  const auto j = CovarianceSpec::junk(10, 3);
  CHECK(j.eigs(2) == 1);
  CHECK(j.eigs(3) == Approx(0.0025));
  const auto h = CovarianceSpec::harmful(6, 3);
  CHECK(h.eigs(2) == 1);
  CHECK(h.eigs(3) == Approx(1.0 / 16));
  CHECK(h.eigs(5) == Approx(1.0 / 36));
  CHECK(CovarianceSpec::isotropic(4).trace() == 4);
  CHECK_THROWS_AS(CovarianceSpec::explicit_diagonal(Vector::Constant(3, -1.0)), DomainError);
}

TEST_CASE("isotropic Gaussian sample covariance converges to identity") {
  const Matrix X = sample_features(FeatureKind::Gaussian, CovarianceSpec::isotropic(5), 100000, 5, 6);
  const Matrix S = X.transpose() * X / 100000.0;
  CHECK((S - Matrix::Identity(5, 5)).norm() <= 0.05);
}

TEST_CASE("features are scaled by the covariance square root") {
  const auto cov = CovarianceSpec::explicit_diagonal((Vector(3) << 4.0, 1.0, 0.25).finished());
  const Matrix X = sample_features(FeatureKind::Laplace, cov, 200000, 3, 7);
  const Vector var = X.colwise().squaredNorm() / 200000.0;
  CHECK(var(0) == Approx(4).epsilon(0.02));
  CHECK(var(1) == Approx(1).epsilon(0.02));
  CHECK(var(2) == Approx(0.25).epsilon(0.02));
}

TEST_CASE("rotated covariance is respected") {
  const double c = std::cos(0.3), s = std::sin(0.3);
  auto cov = CovarianceSpec::explicit_diagonal((Vector(2) << 4.0, 1.0).finished());
  cov.rotation = (Matrix(2, 2) << c, -s, s, c).finished();
  const Matrix X = sample_features(FeatureKind::Gaussian, cov, 200000, 2, 8);
  const Matrix S = X.transpose() * X / 200000.0;
  CHECK((S - cov.dense()).norm() <= 0.05);
}

TEST_CASE("sampling is deterministic in the seed") {
  DataModel m{FeatureKind::StudentT5, CovarianceSpec::junk(20, 3), MisspecifiedRegression{}};
  const auto a = sample_dataset(m, 50, 99), b = sample_dataset(m, 50, 99), c = sample_dataset(m, 50, 100);
  CHECK(a.X == b.X);
  CHECK(a.y == b.y);
  CHECK(a.X != c.X);
}

TEST_CASE("sample_features rejects a dimension mismatch") {
  CHECK_THROWS_AS(sample_features(FeatureKind::Gaussian, CovarianceSpec::isotropic(3), 5, 4, 0), DomainError);
}

TEST_CASE("noiseless well-specified labels are exactly linear") {
  Vector ws(4);
  ws << 1, -2, 0.5, 0;
  DataModel m{FeatureKind::Uniform, CovarianceSpec::isotropic(4), WellSpecifiedLinear{ws, 0.0}};
  const auto ds = sample_dataset(m, 30, 1);
  CHECK((ds.y - ds.X * ws).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("misspecified labels follow the formula") {
  Matrix X = Matrix::Zero(2, 4);
  X(0, 0) = 1.0;
  X(1, 0) = -2.0;
  X(1, 1) = 0.5;
  const Vector y = sample_labels(MisspecifiedRegression{}, X, 3);  // x_3 = 0 silences the noise
  CHECK(y(0) == Approx(2.5));
  CHECK(y(1) == Approx(1.5 * -2 + 2 * std::cos(0.5)));
}

TEST_CASE("logistic labels are signs with the right conditional rate") {
  Matrix X(4000, 2);
  X.col(0).setConstant(-0.4);
  X.col(1).setZero();
  const Vector y = sample_labels(LogisticClassification{}, X, 4);
  CHECK(y.cwiseAbs().minCoeff() == 1.0);
  const double p = (y.array() > 0).cast<double>().mean();
  CHECK(p == Approx(1 / (1 + std::exp(-(5 * -0.4 + 3)))).margin(0.03));

  Matrix far(200, 2);
  far.col(0).setConstant(50.0);
  far.col(1).setZero();
  CHECK(sample_labels(LogisticClassification{}, far, 5).minCoeff() == 1.0);
}

TEST_CASE("surrogate features are standard Gaussian in k + 1 coordinates") {
  const auto cov = CovarianceSpec::junk(10, 3);
  const auto mi = to_multi_index(MisspecifiedRegression{}, cov);
  CHECK(mi.k() == 3);
  const auto ds = sample_surrogate(mi, 100000, 6);
  CHECK(ds.d() == 4);
  const Matrix S = ds.X.transpose() * ds.X / 100000.0;
  CHECK((S - Matrix::Identity(4, 4)).norm() <= 0.05);
}

TEST_CASE("linear surrogate without noise returns its index") {
  Vector ws = Vector::Zero(3);
  ws(0) = 1;
  const auto mi = to_multi_index(WellSpecifiedLinear{ws, 0.0}, CovarianceSpec::isotropic(3));
  const auto ds = sample_surrogate(mi, 50, 7);
  CHECK((ds.y - ds.X.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("logistic surrogate mean label matches quadrature") {
  const auto mi = to_multi_index(LogisticClassification{}, CovarianceSpec::junk(5, 1));
  const auto ds = sample_surrogate(mi, 400000, 8);
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  const double expected = gauss_kronrod<double, 61>::integrate(
      [](double g) { return (2 / (1 + std::exp(-(5 * g + 3))) - 1) * std::exp(-g * g / 2) / std::sqrt(2 * M_PI); },
      -inf, inf, 15, 1e-12);
  CHECK(ds.y.mean() == Approx(expected).margin(0.005));
}

TEST_CASE("surrogate reproduces the label distribution of the full model") {
  const auto cov = CovarianceSpec::junk(30, 3);
  DataModel m{FeatureKind::Gaussian, cov, MisspecifiedRegression{}};
  const auto full = sample_dataset(m, 200000, 9);
  const auto sur = sample_surrogate(to_multi_index(m.labels, cov), 200000, 10);
  CHECK(sur.y.mean() == Approx(full.y.mean()).margin(0.02));
  CHECK(sur.y.squaredNorm() / 200000 == Approx(full.y.squaredNorm() / 200000).epsilon(0.02));
}

TEST_CASE("dataset CSV has the documented header") {
  DataModel m{FeatureKind::Gaussian, CovarianceSpec::isotropic(2), WellSpecifiedLinear{Vector::Ones(2), 1.0}};
  std::ostringstream os;
  write_dataset_csv(os, sample_dataset(m, 3, 1));
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "x_1,x_2,y");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("seed derivation is order independent and distinct") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}
