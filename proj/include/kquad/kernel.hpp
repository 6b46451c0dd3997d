#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <concepts>
#include <stdexcept>

#include "kquad/gmm.hpp"

namespace kquad {

/// Isotropic exponentiated-quadratic kernel with unit amplitude:
/// k(x, y) = exp(-|x - y|^2 / (2 l^2)), so k(x, x) = 1 everywhere.
///
/// Besides pointwise evaluation it provides the two closed-form integrals
/// against a Gaussian mixture that the selection criteria need: the mean
/// embedding z(x) = E_{x'~p}[k(x, x')] and the double expectation
/// E_{x,x'~p}[k(x, x')].
class RbfKernel {
 public:
  explicit RbfKernel(double lengthscale) : lengthscale_(lengthscale) {
    if (!(lengthscale > 0.0)) throw std::invalid_argument("RbfKernel: lengthscale must be > 0");
    inv_two_ell2_ = 1.0 / (2.0 * lengthscale * lengthscale);
  }

  double lengthscale() const { return lengthscale_; }

  double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    if (x.size() != y.size()) throw std::invalid_argument("RbfKernel::eval: dimension mismatch");
    return std::exp(-(x - y).squaredNorm() * inv_two_ell2_);
  }

  /// z(x) = E_{x'~p}[k(x, x')]. The RBF is an unnormalized Gaussian of
  /// covariance l^2 I, so each mixture component contributes
  /// (2 pi l^2)^{d/2} N(x; mu_j, Sigma_j + l^2 I).
  double mean_embedding(const GaussianMixture& p, const Eigen::VectorXd& x) const {
    if (x.size() != p.dim()) {
      throw std::invalid_argument("RbfKernel::mean_embedding: dimension mismatch");
    }
    const Eigen::Index d = p.dim();
    const double ell_pow_d = std::pow(lengthscale_, static_cast<double>(d));
    const Eigen::MatrixXd ell2_eye =
        lengthscale_ * lengthscale_ * Eigen::MatrixXd::Identity(d, d);
    double total = 0.0;
    for (std::size_t j = 0; j < p.num_components(); ++j) {
      const auto& c = p.component(j);
      Eigen::LLT<Eigen::MatrixXd> llt(c.covariance + ell2_eye);
      const Eigen::MatrixXd lower = llt.matrixL();
      const Eigen::VectorXd y = lower.triangularView<Eigen::Lower>().solve(x - c.mean);
      double sqrt_det = 1.0;
      for (Eigen::Index i = 0; i < d; ++i) sqrt_det *= lower(i, i);
      total += p.weight(j) * ell_pow_d / sqrt_det * std::exp(-0.5 * y.squaredNorm());
    }
    return total;
  }

  /// E_{x,x'~p}[k(x, x')]: convolving both arguments gives
  /// sum_{i,j} pi_i pi_j (2 pi l^2)^{d/2} N(mu_i; mu_j, Sigma_i + Sigma_j + l^2 I).
  /// This is the BQ posterior variance of the empty sample set.
  double initial_variance(const GaussianMixture& p) const {
    const Eigen::Index d = p.dim();
    const double ell_pow_d = std::pow(lengthscale_, static_cast<double>(d));
    const Eigen::MatrixXd ell2_eye =
        lengthscale_ * lengthscale_ * Eigen::MatrixXd::Identity(d, d);
    double total = 0.0;
    for (std::size_t i = 0; i < p.num_components(); ++i) {
      for (std::size_t j = 0; j < p.num_components(); ++j) {
        const auto& ci = p.component(i);
        const auto& cj = p.component(j);
        Eigen::LLT<Eigen::MatrixXd> llt(ci.covariance + cj.covariance + ell2_eye);
        const Eigen::MatrixXd lower = llt.matrixL();
        const Eigen::VectorXd y =
            lower.triangularView<Eigen::Lower>().solve(ci.mean - cj.mean);
        double sqrt_det = 1.0;
        for (Eigen::Index t = 0; t < d; ++t) sqrt_det *= lower(t, t);
        total += p.weight(i) * p.weight(j) * ell_pow_d / sqrt_det *
                 std::exp(-0.5 * y.squaredNorm());
      }
    }
    return total;
  }

 private:
  double lengthscale_;
  double inv_two_ell2_;
};

/// Contract the selection and objective code is written against. Models
/// must have unit amplitude (k(x, x) = 1) and closed-form expectations
/// against a GaussianMixture.
template <class K>
concept KernelModel = requires(const K& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                               const GaussianMixture& p) {
  { k.eval(x, y) } -> std::convertible_to<double>;
  { k.mean_embedding(p, x) } -> std::convertible_to<double>;
  { k.initial_variance(p) } -> std::convertible_to<double>;
};

/// Experiment default: one twentieth of the target's extent.
inline double default_lengthscale(const GaussianMixture& p) { return p.extent() / 20.0; }

}  // namespace kquad
