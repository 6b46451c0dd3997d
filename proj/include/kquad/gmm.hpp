#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kquad/errors.hpp"
#include "kquad/random.hpp"

namespace kquad {

/// One full-covariance Gaussian: the covariance must be symmetric and
/// strictly positive definite (its Cholesky factorization must succeed).
struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Density of N(mean, cov) at x.
inline double mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov) {
  if (x.size() != mean.size() || cov.rows() != x.size() || cov.cols() != x.size()) {
    throw std::invalid_argument("mvn_density: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("mvn_density: covariance is not positive definite");
  }
  const Eigen::MatrixXd lower = llt.matrixL();
  const Eigen::VectorXd y = lower.triangularView<Eigen::Lower>().solve(x - mean);
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) log_det_half += std::log(lower(i, i));
  const double d = static_cast<double>(x.size());
  return std::exp(-0.5 * y.squaredNorm() - log_det_half -
                  0.5 * d * std::log(2.0 * std::numbers::pi));
}

/// A finite mixture of full-covariance Gaussians. Immutable after
/// construction; safe for concurrent reads. Sampling takes an explicit
/// generator handle, so parallel callers partition generators themselves.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<GaussianComponent> components, Eigen::VectorXd weights)
      : components_(std::move(components)), weights_(std::move(weights)) {
    if (components_.empty()) throw std::invalid_argument("GaussianMixture: no components");
    if (weights_.size() != static_cast<Eigen::Index>(components_.size())) {
      throw std::invalid_argument("GaussianMixture: weight/component count mismatch");
    }
    if (std::abs(weights_.sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("GaussianMixture: weights must sum to 1");
    }
    dim_ = components_.front().mean.size();
    cholesky_.reserve(components_.size());
    norm_.reserve(components_.size());
    double cumulative = 0.0;
    cumulative_.resize(weights_.size());
    for (Eigen::Index j = 0; j < weights_.size(); ++j) {
      if (weights_(j) <= 0.0) throw std::invalid_argument("GaussianMixture: weight <= 0");
      const auto& c = components_[static_cast<std::size_t>(j)];
      if (c.mean.size() != dim_ || c.covariance.rows() != dim_ || c.covariance.cols() != dim_) {
        throw std::invalid_argument("GaussianMixture: inconsistent dimensions");
      }
      const double scale = std::max(1.0, c.covariance.cwiseAbs().maxCoeff());
      if ((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("GaussianMixture: covariance not symmetric");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
      if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("GaussianMixture: covariance not positive definite");
      }
      Eigen::MatrixXd lower = llt.matrixL();
      double log_det_half = 0.0;
      for (Eigen::Index i = 0; i < dim_; ++i) log_det_half += std::log(lower(i, i));
      norm_.push_back(std::exp(-log_det_half -
                               0.5 * static_cast<double>(dim_) *
                                   std::log(2.0 * std::numbers::pi)));
      cholesky_.push_back(std::move(lower));
      cumulative += weights_(j);
      cumulative_(j) = cumulative;
    }
    cumulative_(cumulative_.size() - 1) = 1.0;
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t num_components() const { return components_.size(); }
  const GaussianComponent& component(std::size_t j) const { return components_[j]; }
  double weight(std::size_t j) const { return weights_(static_cast<Eigen::Index>(j)); }
  const Eigen::VectorXd& weights() const { return weights_; }

  /// p(x) = sum_j pi_j N(x; mu_j, Sigma_j). Underflows to 0 far from all
  /// means instead of erroring.
  double density(const Eigen::VectorXd& x) const {
    if (x.size() != dim_) throw std::invalid_argument("density: dimension mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < components_.size(); ++j) {
      const Eigen::VectorXd y =
          cholesky_[j].triangularView<Eigen::Lower>().solve(x - components_[j].mean);
      total += weight(j) * norm_[j] * std::exp(-0.5 * y.squaredNorm());
    }
    return total;
  }

  Eigen::VectorXd sample_one(Rng& rng) const {
    const double u = rng.uniform();
    std::size_t j = 0;
    while (j + 1 < components_.size() && u >= cumulative_(static_cast<Eigen::Index>(j))) ++j;
    Eigen::VectorXd xi(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) xi(i) = rng.normal();
    return components_[j].mean + cholesky_[j] * xi;
  }

  /// n i.i.d. draws: categorical component choice by weight, then a
  /// multivariate normal through the cached Cholesky factor. Deterministic
  /// for a given generator state.
  std::vector<Eigen::VectorXd> sample(Rng& rng, int n) const {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(sample_one(rng));
    return out;
  }

  Eigen::VectorXd mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
    for (std::size_t j = 0; j < components_.size(); ++j) m += weight(j) * components_[j].mean;
    return m;
  }

  /// Width of the mixture: the largest per-dimension span of the
  /// two-sigma boxes around the component means (the box holding roughly
  /// 95% of each component's mass). This is the "extent" that default
  /// kernel lengthscales are derived from.
  double extent() const {
    double widest = 0.0;
    for (Eigen::Index d = 0; d < dim_; ++d) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < components_.size(); ++j) {
        const double sigma = std::sqrt(components_[j].covariance(d, d));
        lo = std::min(lo, components_[j].mean(d) - 2.0 * sigma);
        hi = std::max(hi, components_[j].mean(d) + 2.0 * sigma);
      }
      widest = std::max(widest, hi - lo);
    }
    return widest;
  }

 private:
  std::vector<GaussianComponent> components_;
  Eigen::VectorXd weights_;
  Eigen::Index dim_ = 0;
  std::vector<Eigen::MatrixXd> cholesky_;  // lower factors of the covariances
  std::vector<double> norm_;               // 1 / ((2 pi)^{d/2} |Sigma|^{1/2})
  Eigen::VectorXd cumulative_;
};

/// Seed for the canonical 2D target shipped in data/default_gmm.json.
/// Changing it changes every checked-in experiment artifact.
inline constexpr std::uint64_t kDefaultGmmSeed = 12;

/// Canonical experiment target: 20 full-covariance Gaussians in 2D with
/// means uniform in [0,1]^2, covariance eigenvalues uniform in
/// [0.005, 0.05] under a random rotation, and uniform-Dirichlet mixture
/// weights, all drawn from kDefaultGmmSeed.
inline GaussianMixture make_default_gmm() {
  Rng rng(kDefaultGmmSeed);
  constexpr int kComponents = 20;
  std::vector<GaussianComponent> components;
  components.reserve(kComponents);
  for (int j = 0; j < kComponents; ++j) {
    Eigen::VectorXd mean(2);
    mean << rng.uniform(), rng.uniform();
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double l1 = rng.uniform(0.005, 0.05);
    const double l2 = rng.uniform(0.005, 0.05);
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    Eigen::Matrix2d cov = rot * Eigen::Vector2d(l1, l2).asDiagonal() * rot.transpose();
    cov = ((cov + cov.transpose()) / 2.0).eval();  // kill asymmetry roundoff
    components.push_back({mean, cov});
  }
  Eigen::VectorXd weights(kComponents);
  for (int j = 0; j < kComponents; ++j) weights(j) = -std::log(1.0 - rng.uniform());
  weights /= weights.sum();
  // renormalize exactly to the 1e-12 contract
  weights(kComponents - 1) += 1.0 - weights.sum();
  return GaussianMixture(std::move(components), std::move(weights));
}

}  // namespace kquad
