#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kquad/errors.hpp"
#include "kquad/gmm.hpp"
#include "kquad/kernel.hpp"
#include "kquad/objectives.hpp"
#include "kquad/random.hpp"

namespace kquad {

/// f(x) = sum_i alpha_i k(x, c_i), normalized to unit RKHS norm:
/// |f|^2 = sum_{i,j} alpha_i alpha_j k(c_i, c_j) = 1.
struct RkhsFunction {
  RbfKernel kernel;
  std::vector<Eigen::VectorXd> centers;
  Eigen::VectorXd coefficients;

  double eval(const Eigen::VectorXd& x) const {
    double value = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      value += coefficients(static_cast<Eigen::Index>(i)) * kernel.eval(x, centers[i]);
    }
    return value;
  }

  double rkhs_norm_squared() const {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      for (std::size_t j = 0; j < centers.size(); ++j) {
        norm2 += coefficients(static_cast<Eigen::Index>(i)) *
                 coefficients(static_cast<Eigen::Index>(j)) * kernel.eval(centers[i], centers[j]);
      }
    }
    return norm2;
  }
};

/// One anisotropic Gaussian bump, amplitude * exp(-1/2 (x-c)^T S^{-1} (x-c)),
/// with the covariance factor cached at construction (and SPD enforced).
class GaussianBump {
 public:
  GaussianBump(double amplitude, Eigen::VectorXd center, Eigen::MatrixXd covariance)
      : amplitude_(amplitude), center_(std::move(center)), covariance_(std::move(covariance)) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("GaussianBump: covariance not positive definite");
    }
    lower_ = llt.matrixL();
  }

  double amplitude() const { return amplitude_; }
  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }

  double eval(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd y = lower_.triangularView<Eigen::Lower>().solve(x - center_);
    return amplitude_ * std::exp(-0.5 * y.squaredNorm());
  }

  double sqrt_det() const {
    double s = 1.0;
    for (Eigen::Index t = 0; t < lower_.rows(); ++t) s *= lower_(t, t);
    return s;
  }

 private:
  double amplitude_;
  Eigen::VectorXd center_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd lower_;
};

/// Out-of-model integrand: a sum of bumps whose widths sit well off the
/// model kernel's lengthscale, so it does not live in the model RKHS.
struct BumpFunction {
  std::vector<GaussianBump> bumps;

  double eval(const Eigen::VectorXd& x) const {
    double value = 0.0;
    for (const auto& b : bumps) value += b.eval(x);
    return value;
  }
};

/// Draws f = sum_{i<10} alpha_i k(., c_i) with centers i.i.d. from p and raw
/// coefficients standard normal, then rescales to exactly unit RKHS norm.
/// Coincident centers (singular Gram) trigger a bounded redraw.
inline RkhsFunction draw_rkhs_function(Rng& rng, const RbfKernel& kernel,
                                       const GaussianMixture& p, int num_centers = 10) {
  if (num_centers < 1) throw std::invalid_argument("draw_rkhs_function: need >= 1 center");
  constexpr int kMaxRetries = 100;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    RkhsFunction f{kernel, p.sample(rng, num_centers), Eigen::VectorXd(num_centers)};
    for (int i = 0; i < num_centers; ++i) f.coefficients(i) = rng.normal();
    bool coincident = false;
    for (std::size_t i = 0; i < f.centers.size() && !coincident; ++i) {
      for (std::size_t j = i + 1; j < f.centers.size(); ++j) {
        if ((f.centers[i] - f.centers[j]).norm() <= 1e-12) {
          coincident = true;
          break;
        }
      }
    }
    if (coincident) continue;
    const double norm2 = f.rkhs_norm_squared();
    if (!(norm2 > 1e-12)) continue;
    f.coefficients /= std::sqrt(norm2);
    return f;
  }
  throw NumericalError("draw_rkhs_function: could not draw a well-posed function");
}

/// Draws 10 bumps: amplitudes uniform in (-2, 2), centers i.i.d. from p,
/// covariances random SPD with eigenvalues log-uniform in
/// [(l/5)^2, (5 l)^2] under a random rotation, so bumps land both much
/// narrower and much wider than the model kernel.
inline BumpFunction draw_bump_function(Rng& rng, const RbfKernel& kernel,
                                       const GaussianMixture& p, int num_bumps = 10) {
  if (num_bumps < 1) throw std::invalid_argument("draw_bump_function: need >= 1 bump");
  const Eigen::Index d = p.dim();
  const double log_lo = 2.0 * std::log(kernel.lengthscale() / 5.0);
  const double log_hi = 2.0 * std::log(kernel.lengthscale() * 5.0);
  BumpFunction f;
  f.bumps.reserve(static_cast<std::size_t>(num_bumps));
  for (int i = 0; i < num_bumps; ++i) {
    const double amplitude = rng.uniform(-2.0, 2.0);
    Eigen::VectorXd center = p.sample_one(rng);
    Eigen::VectorXd eigenvalues(d);
    for (Eigen::Index t = 0; t < d; ++t) {
      eigenvalues(t) = std::exp(rng.uniform(log_lo, log_hi));
    }
    Eigen::MatrixXd gauss(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) gauss(r, c) = rng.normal();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    Eigen::MatrixXd cov = q * eigenvalues.asDiagonal() * q.transpose();
    cov = ((cov + cov.transpose()) / 2.0).eval();
    f.bumps.emplace_back(amplitude, std::move(center), std::move(cov));
  }
  return f;
}

/// Z_{f,p} = int f(x) p(x) dx in closed form: each kernel term integrates
/// to alpha_i z(c_i).
inline double exact_integral(const RkhsFunction& f, const GaussianMixture& p) {
  double z = 0.0;
  for (std::size_t i = 0; i < f.centers.size(); ++i) {
    z += f.coefficients(static_cast<Eigen::Index>(i)) * f.kernel.mean_embedding(p, f.centers[i]);
  }
  return z;
}

/// Closed form for bumps: each bump is alpha_i |2 pi S_i|^{1/2} N(.; c_i, S_i),
/// and the Gaussian-Gaussian overlap gives
/// sum_i alpha_i |2 pi S_i|^{1/2} sum_j pi_j N(c_i; mu_j, S_i + Sigma_j).
inline double exact_integral(const BumpFunction& f, const GaussianMixture& p) {
  double z = 0.0;
  for (const auto& b : f.bumps) {
    const Eigen::Index d = b.center().size();
    const double volume =
        std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d)) * b.sqrt_det();
    double overlap = 0.0;
    for (std::size_t j = 0; j < p.num_components(); ++j) {
      overlap += p.weight(j) * mvn_density(b.center(), p.component(j).mean,
                                           b.covariance() + p.component(j).covariance);
    }
    z += b.amplitude() * volume * overlap;
  }
  return z;
}

/// The quadrature estimate sum_n w_n f(x_n); 0 for the empty set.
template <class F>
double estimate_integral(const F& f, const WeightedSampleSet& s) {
  double z = 0.0;
  for (std::size_t n = 0; n < s.points.size(); ++n) {
    z += s.weights(static_cast<Eigen::Index>(n)) * f.eval(s.points[n]);
  }
  return z;
}

}  // namespace kquad
