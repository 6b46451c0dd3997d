#pragma once

#include <stdexcept>

namespace kquad {

/// A Cholesky pivot (or Schur complement) was not strictly positive.
/// With the default jitter this indicates duplicate sample points or a
/// non-SPD input rather than ordinary ill-conditioning.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A quantity that is nonnegative by construction came out negative past
/// the roundoff allowance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kquad
