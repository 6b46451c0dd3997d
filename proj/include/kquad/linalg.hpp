#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "kquad/errors.hpp"

namespace kquad {

/// Jitter added to every diagonal entry of a Gram matrix before
/// factorization; k(x,x) = 1, so this is 1e-10 * k(x,x).
inline constexpr double kDefaultJitter = 1e-10;

/// Lower-triangular Cholesky factor of K + jitter*I with O(n^2)
/// single-row append. A factor is an immutable value: append returns a new
/// factor, so factors can be shared read-only across threads.
///
/// All inner products accumulate in ascending index order. That makes an
/// append-built factor bitwise identical to a one-shot factorization, which
/// the selection code relies on when cross-checking cached scores against
/// naive rescoring.
class CholFactor {
 public:
  CholFactor() = default;  // empty factor, n = 0, zero jitter

  /// Empty factor that will append jittered diagonals; records the jitter
  /// for bookkeeping only.
  explicit CholFactor(double jitter) : jitter_(jitter) {}

  Eigen::Index size() const { return lower_.rows(); }
  double jitter() const { return jitter_; }
  const Eigen::MatrixXd& lower() const { return lower_; }

  /// Cholesky of K + jitter*I. K must be symmetric within 1e-10; a
  /// non-positive pivot (duplicate points, or jitter too small) throws.
  static CholFactor factor(const Eigen::MatrixXd& K, double jitter) {
    if (K.rows() != K.cols()) throw std::invalid_argument("factor: K must be square");
    if (jitter < 0.0) throw std::invalid_argument("factor: jitter must be >= 0");
    const Eigen::Index n = K.rows();
    if (n > 0) {
      const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
      if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw std::invalid_argument("factor: K is not symmetric");
      }
    }
    Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < j; ++t) acc += lower(i, t) * lower(j, t);
        if (j < i) {
          lower(i, j) = (K(i, j) - acc) / lower(j, j);
        } else {
          const double pivot = (K(i, i) + jitter) - acc;
          if (!(pivot > 0.0)) {
            throw NotPositiveDefinite("factor: non-positive pivot at row " + std::to_string(i));
          }
          lower(i, i) = std::sqrt(pivot);
        }
      }
    }
    return CholFactor(std::move(lower), jitter);
  }

  /// Extends the factor by one row/column. new_col is k(X, x_new) without
  /// jitter; new_diag is k(x_new, x_new) + jitter. Costs one n-sized
  /// triangular solve plus O(n) arithmetic.
  CholFactor append(const Eigen::VectorXd& new_col, double new_diag) const {
    const Eigen::Index n = size();
    if (new_col.size() != n) throw std::invalid_argument("append: column size mismatch");
    Eigen::VectorXd a(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < i; ++t) acc += lower_(i, t) * a(t);
      a(i) = (new_col(i) - acc) / lower_(i, i);
    }
    double norm2 = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) norm2 += a(t) * a(t);
    const double schur = new_diag - norm2;
    if (!(schur > 0.0)) {
      throw NotPositiveDefinite("append: non-positive Schur complement");
    }
    Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(n + 1, n + 1);
    lower.topLeftCorner(n, n) = lower_;
    lower.row(n).head(n) = a.transpose();
    lower(n, n) = std::sqrt(schur);
    return CholFactor(std::move(lower), jitter_);
  }

  /// (K + jitter*I)^{-1} b via forward then backward substitution.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return backward(forward(b)); }

  /// L^{-1} b.
  Eigen::VectorXd forward(const Eigen::VectorXd& b) const {
    const Eigen::Index n = size();
    if (b.size() != n) throw std::invalid_argument("forward: dimension mismatch");
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < i; ++t) acc += lower_(i, t) * y(t);
      y(i) = (b(i) - acc) / lower_(i, i);
    }
    return y;
  }

  /// L^{-T} b.
  Eigen::VectorXd backward(const Eigen::VectorXd& b) const {
    const Eigen::Index n = size();
    if (b.size() != n) throw std::invalid_argument("backward: dimension mismatch");
    Eigen::VectorXd x(n);
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      double acc = 0.0;
      for (Eigen::Index t = i + 1; t < n; ++t) acc += lower_(t, i) * x(t);
      x(i) = (b(i) - acc) / lower_(i, i);
    }
    return x;
  }

  /// L L^T, i.e. K + jitter*I.
  Eigen::MatrixXd reconstruct() const {
    return lower_ * lower_.transpose();
  }

 private:
  CholFactor(Eigen::MatrixXd lower, double jitter) : lower_(std::move(lower)), jitter_(jitter) {}

  Eigen::MatrixXd lower_;  // column-major dense; strict upper part is zero
  double jitter_ = 0.0;
};

namespace detail {

/// Scalar ascending-order dot product. Used wherever bit-reproducibility
/// against the incremental solves matters; Eigen's vectorized dot may
/// associate differently.
inline double dot_ascending(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) s += a[t] * b[t];
  return s;
}

}  // namespace detail

}  // namespace kquad
