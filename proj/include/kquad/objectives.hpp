#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kquad/errors.hpp"
#include "kquad/gmm.hpp"
#include "kquad/kernel.hpp"
#include "kquad/linalg.hpp"

namespace kquad {

/// Sample locations with per-sample real weights. Weights may be negative
/// and need not sum to 1; points must be pairwise distinct.
struct WeightedSampleSet {
  std::vector<Eigen::VectorXd> points;
  Eigen::VectorXd weights;
};

namespace detail {

inline void check_sample_set(const WeightedSampleSet& s) {
  if (s.weights.size() != static_cast<Eigen::Index>(s.points.size())) {
    throw std::invalid_argument("WeightedSampleSet: point/weight count mismatch");
  }
  for (Eigen::Index i = 0; i < s.weights.size(); ++i) {
    if (!std::isfinite(s.weights(i))) {
      throw std::invalid_argument("WeightedSampleSet: non-finite weight");
    }
  }
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    for (std::size_t j = i + 1; j < s.points.size(); ++j) {
      if ((s.points[i] - s.points[j]).squaredNorm() <= 0.0) {
        throw std::invalid_argument("WeightedSampleSet: duplicate points");
      }
    }
  }
}

/// MMD^2 and the BQ variance are nonnegative; tolerate roundoff down to
/// -1e-12 and treat anything below as a logic error.
inline double clamp_nonnegative(double value, const char* what) {
  if (value < -1e-12) {
    throw NumericalError(std::string(what) + " came out negative: " + std::to_string(value));
  }
  return value < 0.0 ? 0.0 : value;
}

}  // namespace detail

/// MMD^2 between p and the weighted empirical measure of s:
///   E_{x,x'~p} k - 2 sum_n w_n z(x_n) + sum_{n,m} w_n w_m k(x_n, x_m).
template <KernelModel K>
double mmd_squared(const GaussianMixture& p, const K& kernel, const WeightedSampleSet& s) {
  detail::check_sample_set(s);
  double value = kernel.initial_variance(p);
  const Eigen::Index n = s.weights.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    value -= 2.0 * s.weights(i) * kernel.mean_embedding(p, s.points[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      value += s.weights(i) * s.weights(j) *
               kernel.eval(s.points[static_cast<std::size_t>(i)],
                           s.points[static_cast<std::size_t>(j)]);
    }
  }
  return detail::clamp_nonnegative(value, "mmd_squared");
}

/// The herding criterion: MMD^2 with uniform 1/N weights. Same code path
/// as mmd_squared by construction.
template <KernelModel K>
double herding_objective(const GaussianMixture& p, const K& kernel,
                         const std::vector<Eigen::VectorXd>& points) {
  if (points.empty()) throw std::invalid_argument("herding_objective: needs N >= 1");
  WeightedSampleSet s{points, Eigen::VectorXd::Constant(
                                  static_cast<Eigen::Index>(points.size()),
                                  1.0 / static_cast<double>(points.size()))};
  return mmd_squared(p, kernel, s);
}

/// Running Bayesian-quadrature state over an ordered point set: the Gram
/// Cholesky factor, the mean embeddings z, and the posterior variance
///   eps^2 = E_{x,x'~p} k - z^T (K + jitter I)^{-1} z,
/// which depends on sample locations only, never on integrand values.
///
/// Appends are O(n^2); a state is a value, so appended() leaves the source
/// untouched and states can be shared read-only across threads.
template <KernelModel K>
class QuadratureState {
 public:
  QuadratureState(const K& kernel, const GaussianMixture& p, double jitter = kDefaultJitter)
      : kernel_(&kernel),
        p_(&p),
        jitter_(jitter),
        chol_(jitter),
        initial_variance_(kernel.initial_variance(p)),
        variance_(initial_variance_) {}

  Eigen::Index size() const { return static_cast<Eigen::Index>(points_.size()); }
  const std::vector<Eigen::VectorXd>& points() const { return points_; }
  const CholFactor& chol() const { return chol_; }
  const Eigen::VectorXd& z() const { return z_; }
  /// L^{-1} z; grows by one entry per append.
  const Eigen::VectorXd& forward_z() const { return b_; }
  double jitter() const { return jitter_; }
  double initial_variance() const { return initial_variance_; }
  const K& kernel() const { return *kernel_; }
  const GaussianMixture& target() const { return *p_; }

  /// eps^2_BQ of the current point set (initial_variance when empty).
  double bq_variance() const { return detail::clamp_nonnegative(variance_, "bq_variance"); }

  /// Optimal weights w = (K + jitter I)^{-1} z. May be negative; need not
  /// sum to 1.
  Eigen::VectorXd bq_weights() const { return chol_.backward(b_); }

  /// Drop in eps^2_BQ from appending candidate c, by Schur complement:
  ///   (z(c) - k(c,X)^T K^{-1} z)^2 / (k(c,c) + jitter - k(c,X)^T K^{-1} k(c,X)).
  /// Nonnegative. Candidates within 1e-12 of an existing point are rejected.
  double variance_reduction(const Eigen::VectorXd& candidate) const {
    const Eigen::Index n = size();
    for (const auto& x : points_) {
      if ((x - candidate).norm() <= 1e-12) {
        throw NotPositiveDefinite("variance_reduction: candidate duplicates an existing point");
      }
    }
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      col(i) = kernel_->eval(points_[static_cast<std::size_t>(i)], candidate);
    }
    const Eigen::VectorXd a = chol_.forward(col);
    const double zc = kernel_->mean_embedding(*p_, candidate);
    const double num = zc - detail::dot_ascending(a.data(), b_.data(), n);
    const double norm2 = detail::dot_ascending(a.data(), a.data(), n);
    const double denom = (kernel_->eval(candidate, candidate) + jitter_) - norm2;
    if (!(denom > 0.0)) {
      throw NotPositiveDefinite("variance_reduction: non-positive Schur complement");
    }
    const double t = num / std::sqrt(denom);
    return t * t;
  }

  /// Value-semantics append.
  QuadratureState appended(const Eigen::VectorXd& x) const {
    QuadratureState next = *this;
    next.append(x);
    return next;
  }

  void append(const Eigen::VectorXd& x) {
    const Eigen::Index n = size();
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      col(i) = kernel_->eval(points_[static_cast<std::size_t>(i)], x);
    }
    chol_ = chol_.append(col, kernel_->eval(x, x) + jitter_);
    const double zx = kernel_->mean_embedding(*p_, x);
    z_.conservativeResize(n + 1);
    z_(n) = zx;
    // forward substitution is incremental: earlier entries of b are final
    double acc = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) acc += chol_.lower()(n, t) * b_(t);
    b_.conservativeResize(n + 1);
    b_(n) = (zx - acc) / chol_.lower()(n, n);
    points_.push_back(x);
    // variance = initial - |L^{-1} z|^2, re-accumulated so it never drifts
    variance_ = initial_variance_ - detail::dot_ascending(b_.data(), b_.data(), n + 1);
  }

 private:
  const K* kernel_;
  const GaussianMixture* p_;
  double jitter_;
  std::vector<Eigen::VectorXd> points_;
  CholFactor chol_;
  Eigen::VectorXd z_;
  Eigen::VectorXd b_;  // L^{-1} z, extended one entry per append
  double initial_variance_;
  double variance_;
};

/// Max normalized kernel similarity over distinct pool pairs; the
/// approximate-submodularity diagnostic. Exhaustive over all pairs.
template <KernelModel K>
double incoherency(const std::vector<Eigen::VectorXd>& pool, const K& kernel) {
  if (pool.size() < 2) throw std::invalid_argument("incoherency: pool must have >= 2 points");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const double r = kernel.eval(pool[i], pool[j]) /
                       std::sqrt(kernel.eval(pool[i], pool[i]) * kernel.eval(pool[j], pool[j]));
      if (r > best) best = r;
    }
  }
  return best;
}

/// RBF shortcut: k is monotone in distance, so the max pairwise similarity
/// is attained at the minimum pairwise distance. Returns the same value as
/// the exhaustive form.
inline double incoherency(const std::vector<Eigen::VectorXd>& pool, const RbfKernel& kernel) {
  if (pool.size() < 2) throw std::invalid_argument("incoherency: pool must have >= 2 points");
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 1;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const double d2 = (pool[i] - pool[j]).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        bi = i;
        bj = j;
      }
    }
  }
  return kernel.eval(pool[bi], pool[bj]);
}

}  // namespace kquad
