#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kquad/gmm.hpp"
#include "kquad/kernel.hpp"

using namespace kquad;

namespace {

GaussianMixture single_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::VectorXd w(1);
  w << 1.0;
  return GaussianMixture({{mean, cov}}, w);
}

}  // namespace

TEST_CASE("kernel is one at zero distance and e^-1 at ell*sqrt(2)", "[kernel]") {
  const RbfKernel k(0.3);
  Eigen::Vector2d x(0.4, -0.2);
  REQUIRE(k.eval(x, x) == 1.0);
  Eigen::Vector2d y = x + Eigen::Vector2d(0.3 * std::sqrt(2.0), 0.0);
  REQUIRE(k.eval(x, y) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("kernel evaluation is bitwise symmetric", "[kernel]") {
  const RbfKernel k(0.17);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Eigen::Vector2d x(rng.normal(), rng.normal());
    Eigen::Vector2d y(rng.normal(), rng.normal());
    REQUIRE(k.eval(x, y) == k.eval(y, x));
  }
}

TEST_CASE("kernel input validation", "[kernel]") {
  REQUIRE_THROWS_AS(RbfKernel(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(RbfKernel(-1.0), std::invalid_argument);
  const RbfKernel k(1.0);
  Eigen::VectorXd x(2), y(3);
  x.setZero();
  y.setZero();
  REQUIRE_THROWS_AS(k.eval(x, y), std::invalid_argument);
  const auto gmm = make_default_gmm();
  REQUIRE_THROWS_AS(k.mean_embedding(gmm, y), std::invalid_argument);
}

TEST_CASE("mean embedding collapses to the kernel in the delta limit", "[kernel]") {
  const Eigen::Vector2d mu(0.3, 0.7);
  const auto gmm = single_gaussian(mu, 1e-12 * Eigen::Matrix2d::Identity());
  const RbfKernel k(0.2);
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    Eigen::Vector2d x(rng.uniform(), rng.uniform());
    REQUIRE(k.mean_embedding(gmm, x) == Catch::Approx(k.eval(x, mu)).margin(1e-6));
  }
}

TEST_CASE("mean embedding inherits the mixture's symmetry", "[kernel]") {
  // components in (mu, Sigma), (-mu, Sigma) pairs give z(x) = z(-x)
  Eigen::Matrix2d cov;
  cov << 0.02, 0.004, 0.004, 0.013;
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  GaussianMixture gmm({{Eigen::Vector2d(0.4, -0.1), cov}, {Eigen::Vector2d(-0.4, 0.1), cov}}, w);
  const RbfKernel k(0.15);
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    Eigen::Vector2d x(rng.normal(), rng.normal());
    REQUIRE(k.mean_embedding(gmm, x) ==
            Catch::Approx(k.mean_embedding(gmm, -x)).epsilon(1e-12));
  }
}

TEST_CASE("mean embedding matches a Monte Carlo oracle", "[kernel][slow]") {
  const auto gmm = make_default_gmm();
  const RbfKernel k(default_lengthscale(gmm));
  Rng rng(2024);
  const int draws = 1000000;
  const auto samples = gmm.sample(rng, draws);
  Rng xr(99);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = gmm.sample_one(xr);
    double acc = 0.0;
    for (const auto& s : samples) acc += k.eval(x, s);
    REQUIRE(k.mean_embedding(gmm, x) == Catch::Approx(acc / draws).margin(3e-3));
  }
}

TEST_CASE("initial variance limits and bounds", "[kernel]") {
  SECTION("delta limit is k(mu, mu) = 1") {
    const auto gmm =
        single_gaussian(Eigen::Vector2d(0.5, 0.5), 1e-12 * Eigen::Matrix2d::Identity());
    const RbfKernel k(0.2);
    REQUIRE(k.initial_variance(gmm) == Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("always in (0, 1]") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<GaussianComponent> comps;
      const int m = 1 + static_cast<int>(rng.uniform() * 4);
      Eigen::VectorXd w(m);
      for (int j = 0; j < m; ++j) {
        Eigen::Vector2d mu(rng.normal(), rng.normal());
        Eigen::Matrix2d cov = Eigen::Matrix2d::Identity() * (0.01 + rng.uniform());
        comps.push_back({mu, cov});
        w(j) = rng.uniform() + 0.1;
      }
      w /= w.sum();
      w(m - 1) += 1.0 - w.sum();
      GaussianMixture gmm(std::move(comps), std::move(w));
      const RbfKernel k(0.05 + rng.uniform());
      const double v = k.initial_variance(gmm);
      REQUIRE(v > 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("initial variance matches a Monte Carlo oracle", "[kernel][slow]") {
  const auto gmm = make_default_gmm();
  const RbfKernel k(default_lengthscale(gmm));
  Rng rng(77);
  const int pairs = 1000000;
  double acc = 0.0;
  for (int i = 0; i < pairs; ++i) {
    acc += k.eval(gmm.sample_one(rng), gmm.sample_one(rng));
  }
  REQUIRE(k.initial_variance(gmm) == Catch::Approx(acc / pairs).margin(3e-3));
}

TEST_CASE("very wide kernels see only constants", "[kernel]") {
  const auto gmm = make_default_gmm();
  const RbfKernel k(1e6);  // 1e6 x the data scale
  Eigen::Vector2d x(0.1, 0.9), y(0.8, 0.2);
  REQUIRE(k.eval(x, y) == Catch::Approx(1.0).margin(1e-6));
  REQUIRE(k.initial_variance(gmm) == Catch::Approx(1.0).margin(1e-6));
  REQUIRE(k.mean_embedding(gmm, x) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("mean embedding stays positive and below one", "[kernel]") {
  const auto gmm = make_default_gmm();
  const RbfKernel k(default_lengthscale(gmm));
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector2d x(rng.uniform(-1.0, 2.0), rng.uniform(-1.0, 2.0));
    const double z = k.mean_embedding(gmm, x);
    REQUIRE(z > 0.0);
    REQUIRE(z <= 1.0);
  }
}
