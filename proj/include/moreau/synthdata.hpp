#pragma once

// Synthetic data: x = Sigma^{1/2} z with i.i.d. standardized coordinates z,
// diagonal (optionally rotated) covariances, and the label models used by
// the regression and classification experiments.

#include "moreau/common.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace moreau {

// ---------------------------------------------------------------------------
// Feature distributions

enum class FeatureKind {
  Gaussian,
  Uniform,
  Laplace,
  Rademacher,
  PoissonCentered,
  StudentT5,
  WeibullHalf,
  LogNormal
};

inline constexpr FeatureKind kAllFeatureKinds[] = {
    FeatureKind::Gaussian,        FeatureKind::Uniform,   FeatureKind::Laplace,
    FeatureKind::Rademacher,      FeatureKind::PoissonCentered, FeatureKind::StudentT5,
    FeatureKind::WeibullHalf,     FeatureKind::LogNormal};

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::Gaussian: return "gaussian";
    case FeatureKind::Uniform: return "uniform";
    case FeatureKind::Laplace: return "laplace";
    case FeatureKind::Rademacher: return "rademacher";
    case FeatureKind::PoissonCentered: return "poisson";
    case FeatureKind::StudentT5: return "student_t5";
    case FeatureKind::WeibullHalf: return "weibull";
    case FeatureKind::LogNormal: return "lognormal";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(std::string_view s) {
  for (auto k : kAllFeatureKinds)
    if (to_string(k) == s) return k;
  throw DomainError("unknown feature distribution: " + std::string(s));
}

/// Draws mean-0, variance-1 coordinates of one kind. Holds distribution
/// state, so one sampler per stream.
class CoordinateSampler {
public:
  explicit CoordinateSampler(FeatureKind kind) : kind_(kind) {}

  double operator()(Rng& rng) {
    switch (kind_) {
      case FeatureKind::Gaussian: return normal_(rng);
      case FeatureKind::Uniform: return kSqrt3 * (2.0 * unit_(rng) - 1.0);
      case FeatureKind::Laplace: {
        // inverse CDF with scale b = 1/sqrt(2)
        const double u = unit_(rng) - 0.5;
        const double mag = -std::log1p(-2.0 * std::abs(u));
        return (u < 0 ? -1.0 : 1.0) * mag / std::numbers::sqrt2;
      }
      case FeatureKind::Rademacher: return unit_(rng) < 0.5 ? -1.0 : 1.0;
      case FeatureKind::PoissonCentered: {
        // Knuth's multiplication method at rate 1
        const double limit = std::exp(-1.0);
        int k = 0;
        double p = 1.0;
        do {
          ++k;
          p *= unit_(rng);
        } while (p > limit);
        return static_cast<double>(k - 1) - 1.0;
      }
      case FeatureKind::StudentT5: return std::sqrt(3.0 / 5.0) * student_(rng);
      case FeatureKind::WeibullHalf: return (weibull_(rng) - 2.0) / std::sqrt(20.0);
      case FeatureKind::LogNormal: {
        const double e = std::numbers::e;
        return (std::exp(normal_(rng)) - std::sqrt(e)) / std::sqrt(e * (e - 1.0));
      }
    }
    return 0.0;
  }

private:
  static constexpr double kSqrt3 = 1.7320508075688772;
  FeatureKind kind_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::student_t_distribution<double> student_{5.0};
  std::weibull_distribution<double> weibull_{0.5, 1.0};
};

// ---------------------------------------------------------------------------
// Covariance

enum class CovKind { Isotropic, Junk, Harmful, ExplicitDiagonal };

struct CovarianceSpec {
  CovKind kind = CovKind::Isotropic;
  Vector eigs;  // diagonal of Sigma in the (possibly rotated) eigenbasis
  int k = 0;    // count of leading unit eigenvalues (Junk / Harmful)
  double eps = 0.05;
  std::optional<Matrix> rotation;  // orthogonal R with Sigma = R diag(eigs) R^T

  Eigen::Index dim() const { return eigs.size(); }
  bool is_diagonal() const { return !rotation.has_value(); }

  static CovarianceSpec isotropic(Eigen::Index d) {
    require(d >= 1, "covariance: d must be >= 1");
    return {CovKind::Isotropic, Vector::Ones(d), 0, 0.0, std::nullopt};
  }
  static CovarianceSpec junk(Eigen::Index d, int k, double eps = 0.05) {
    require(d >= 1 && k >= 0 && k <= d, "covariance: need 0 <= k <= d");
    Vector e = Vector::Constant(d, eps * eps);
    e.head(k).setOnes();
    return {CovKind::Junk, e, k, eps, std::nullopt};
  }
  static CovarianceSpec harmful(Eigen::Index d, int k) {
    require(d >= 1 && k >= 0 && k <= d, "covariance: need 0 <= k <= d");
    Vector e(d);
    for (Eigen::Index j = 0; j < d; ++j)
      e(j) = j < k ? 1.0 : 1.0 / sq(static_cast<double>(j + 1));
    return {CovKind::Harmful, e, k, 0.0, std::nullopt};
  }
  static CovarianceSpec explicit_diagonal(Vector eigs) {
    require(eigs.size() >= 1, "covariance: empty eigenvalue list");
    require((eigs.array() >= 0).all(), "covariance: eigenvalues must be nonnegative");
    return {CovKind::ExplicitDiagonal, std::move(eigs), 0, 0.0, std::nullopt};
  }

  Matrix dense() const {
    if (!rotation) return eigs.asDiagonal();
    return *rotation * eigs.asDiagonal() * rotation->transpose();
  }
  Matrix sqrt_dense() const {
    if (!rotation) return eigs.cwiseSqrt().asDiagonal();
    return *rotation * eigs.cwiseSqrt().asDiagonal() * rotation->transpose();
  }
  /// Sigma v without materializing Sigma when diagonal.
  Vector apply(const Vector& v) const {
    if (!rotation) return eigs.cwiseProduct(v);
    return *rotation * eigs.cwiseProduct(rotation->transpose() * v);
  }
  double trace() const { return eigs.sum(); }
};

inline std::string_view to_string(CovKind k) {
  switch (k) {
    case CovKind::Isotropic: return "isotropic";
    case CovKind::Junk: return "junk";
    case CovKind::Harmful: return "harmful";
    case CovKind::ExplicitDiagonal: return "explicit";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Label models

struct WellSpecifiedLinear {
  Vector wstar;
  double noise_var = 0.5;
};

/// y = scale * x1 + |x1| cos(x2) + x3 * xi, xi ~ N(0, noise_var).
struct MisspecifiedRegression {
  double scale = 1.5;
  double noise_var = 0.5;
  bool noise_is_std = false;  // treat noise_var as a standard deviation instead

  double noise_variance() const { return noise_is_std ? noise_var * noise_var : noise_var; }
};

/// P(y = 1 | x) = sigmoid(wstar_coef * x1 + bstar).
struct LogisticClassification {
  double wstar_coef = 5.0;
  double bstar = 3.0;
};

/// y = link(<w_1*, x>, ..., <w_k*, x>, xi).
struct MultiIndex {
  std::vector<Vector> wstars;
  std::function<double(std::span<const double>, double)> link;
  std::function<double(Rng&)> noise;
  bool classification = false;

  std::size_t k() const { return wstars.size(); }
};

using LabelModel =
    std::variant<WellSpecifiedLinear, MisspecifiedRegression, LogisticClassification, MultiIndex>;

inline bool is_classification(const LabelModel& m) {
  if (std::holds_alternative<LogisticClassification>(m)) return true;
  if (auto* mi = std::get_if<MultiIndex>(&m)) return mi->classification;
  return false;
}

/// Feature distribution + covariance + label model: the full joint law of (x, y).
struct DataModel {
  FeatureKind features = FeatureKind::Gaussian;
  CovarianceSpec cov = CovarianceSpec::isotropic(1);
  LabelModel labels = WellSpecifiedLinear{Vector::Ones(1), 0.0};
};

struct Dataset {
  Matrix X;
  Vector y;
  std::uint64_t seed = 0;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
};

// ---------------------------------------------------------------------------
// Sampling

inline Matrix sample_features(FeatureKind dist, const CovarianceSpec& cov, Eigen::Index n,
                              Eigen::Index d, std::uint64_t seed) {
  require(n >= 1 && d >= 1, "sample_features: n and d must be >= 1");
  require(cov.dim() == d, "sample_features: covariance dimension does not match d");
  Rng rng(seed);
  CoordinateSampler draw(dist);
  Matrix Z(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) Z(i, j) = draw(rng);
  if (cov.is_diagonal()) return Z * cov.eigs.cwiseSqrt().asDiagonal();
  return Z * cov.sqrt_dense();
}

namespace detail {

inline double gaussian_noise(Rng& rng, double variance) {
  std::normal_distribution<double> nd(0.0, std::sqrt(variance));
  return variance > 0 ? nd(rng) : 0.0;
}

}  // namespace detail

inline Vector sample_labels(const LabelModel& model, const Matrix& X, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Rng rng(seed);
  Vector y(n);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, WellSpecifiedLinear>) {
          require(m.wstar.size() == d, "sample_labels: wstar dimension mismatch");
          std::normal_distribution<double> nd(0.0, std::sqrt(m.noise_var));
          y = X * m.wstar;
          if (m.noise_var > 0)
            for (Eigen::Index i = 0; i < n; ++i) y(i) += nd(rng);
        } else if constexpr (std::is_same_v<T, MisspecifiedRegression>) {
          require(d >= 3, "sample_labels: misspecified model needs d >= 3");
          std::normal_distribution<double> nd(0.0, std::sqrt(m.noise_variance()));
          for (Eigen::Index i = 0; i < n; ++i) {
            const double xi = m.noise_variance() > 0 ? nd(rng) : 0.0;
            y(i) = m.scale * X(i, 0) + std::abs(X(i, 0)) * std::cos(X(i, 1)) + X(i, 2) * xi;
          }
        } else if constexpr (std::is_same_v<T, LogisticClassification>) {
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(m.wstar_coef * X(i, 0) + m.bstar);
            y(i) = unit(rng) < p ? 1.0 : -1.0;
          }
        } else {
          std::vector<double> eta(m.k());
          for (std::size_t j = 0; j < m.k(); ++j)
            require(m.wstars[j].size() == d, "sample_labels: index direction dimension mismatch");
          for (Eigen::Index i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m.k(); ++j) eta[j] = X.row(i).dot(m.wstars[j]);
            const double xi = m.noise ? m.noise(rng) : 0.0;
            y(i) = m.link(eta, xi);
          }
        }
      },
      model);
  return y;
}

inline Dataset sample_dataset(const DataModel& model, Eigen::Index n, std::uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  ds.X = sample_features(model.features, model.cov, n, model.cov.dim(), derive_seed(seed, 1));
  ds.y = sample_labels(model.labels, ds.X, derive_seed(seed, 2));
  return ds;
}

/// Expresses a built-in label model as a multi-index model whose directions
/// are orthonormal in the Sigma inner product. Requires diagonal Sigma.
inline MultiIndex to_multi_index(const LabelModel& model, const CovarianceSpec& cov) {
  require(cov.is_diagonal(), "to_multi_index: requires a diagonal covariance");
  const Eigen::Index d = cov.dim();
  auto unit = [&](Eigen::Index j) {
    Vector e = Vector::Zero(d);
    e(j) = 1.0 / std::sqrt(cov.eigs(j));
    return e;
  };
  return std::visit(
      [&](const auto& m) -> MultiIndex {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, WellSpecifiedLinear>) {
          const double norm = std::sqrt(m.wstar.dot(cov.apply(m.wstar)));
          MultiIndex mi;
          if (norm > 0) mi.wstars.push_back(m.wstar / norm);
          const double nv = m.noise_var;
          mi.link = [norm](std::span<const double> eta, double xi) {
            return (eta.empty() ? 0.0 : norm * eta[0]) + xi;
          };
          mi.noise = [nv](Rng& r) { return detail::gaussian_noise(r, nv); };
          return mi;
        } else if constexpr (std::is_same_v<T, MisspecifiedRegression>) {
          require(d >= 3, "to_multi_index: misspecified model needs d >= 3");
          const double s1 = std::sqrt(cov.eigs(0)), s2 = std::sqrt(cov.eigs(1)),
                       s3 = std::sqrt(cov.eigs(2));
          MultiIndex mi;
          mi.wstars = {unit(0), unit(1), unit(2)};
          const double a = m.scale;
          mi.link = [=](std::span<const double> eta, double xi) {
            const double x1 = s1 * eta[0], x2 = s2 * eta[1], x3 = s3 * eta[2];
            return a * x1 + std::abs(x1) * std::cos(x2) + x3 * xi;
          };
          const double nv = m.noise_variance();
          mi.noise = [nv](Rng& r) { return detail::gaussian_noise(r, nv); };
          return mi;
        } else if constexpr (std::is_same_v<T, LogisticClassification>) {
          const double s1 = std::sqrt(cov.eigs(0));
          MultiIndex mi;
          mi.wstars = {unit(0)};
          mi.classification = true;
          const double c = m.wstar_coef * s1, b = m.bstar;
          mi.link = [c, b](std::span<const double> eta, double xi) {
            return xi < sigmoid(c * eta[0] + b) ? 1.0 : -1.0;
          };
          mi.noise = [](Rng& r) { return std::uniform_real_distribution<double>(0.0, 1.0)(r); };
          return mi;
        } else {
          return m;
        }
      },
      model);
}

/// Draws from the (k+1)-dimensional surrogate: x ~ N(0, I_{k+1}),
/// y = link(x_1..x_k, xi).
inline Dataset sample_surrogate(const MultiIndex& model, Eigen::Index n, std::uint64_t seed) {
  require(n >= 1, "sample_surrogate: n must be >= 1");
  const auto k = static_cast<Eigen::Index>(model.k());
  Dataset ds;
  ds.seed = seed;
  ds.X = sample_features(FeatureKind::Gaussian, CovarianceSpec::isotropic(k + 1), n, k + 1,
                         derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  ds.y.resize(n);
  std::vector<double> eta(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) eta[static_cast<std::size_t>(j)] = ds.X(i, j);
    const double xi = model.noise ? model.noise(rng) : 0.0;
    ds.y(i) = model.link(eta, xi);
  }
  return ds;
}

/// Header x_1..x_d,y; values at round-trip precision.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (Eigen::Index j = 0; j < ds.d(); ++j) os << "x_" << (j + 1) << ',';
  os << "y\n";
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.d(); ++j) os << ds.X(i, j) << ',';
    os << ds.y(i) << '\n';
  }
}

}  // namespace moreau
