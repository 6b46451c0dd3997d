#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

#include "kquad/gmm.hpp"
#include "kquad/io.hpp"

using namespace kquad;

namespace {

GaussianMixture single_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::VectorXd w(1);
  w << 1.0;
  return GaussianMixture({{mean, cov}}, w);
}

// composite Simpson over [lo, hi]^d, d in {1, 2}
template <class F>
double simpson_1d(F&& f, double lo, double hi, int intervals) {
  const double h = (hi - lo) / intervals;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

template <class F>
double simpson_2d(F&& f, Eigen::Vector2d lo, Eigen::Vector2d hi, int intervals) {
  auto outer = [&](double x) {
    return simpson_1d([&](double y) { return f(x, y); }, lo(1), hi(1), intervals);
  };
  return simpson_1d(outer, lo(0), hi(0), intervals);
}

}  // namespace

TEST_CASE("standard normal mode in 2D", "[gmm]") {
  const auto gmm = single_gaussian(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
  REQUIRE(gmm.density(Eigen::Vector2d::Zero()) ==
          Catch::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("density underflows to zero far from all means", "[gmm]") {
  const auto gmm = make_default_gmm();
  Eigen::Vector2d far(1e6, -1e6);
  REQUIRE(gmm.density(far) == 0.0);
}

TEST_CASE("two-component 1D mixture at the midpoint", "[gmm]") {
  Eigen::VectorXd mu_plus(1), mu_minus(1), w(2);
  mu_plus << 1.0;
  mu_minus << -1.0;
  w << 0.5, 0.5;
  Eigen::MatrixXd unit(1, 1);
  unit << 1.0;
  GaussianMixture gmm({{mu_plus, unit}, {mu_minus, unit}}, w);
  Eigen::VectorXd x(1);
  x << 0.0;
  // both terms equal N(0; +-1, 1), so the sum is exp(-1/2)/sqrt(2 pi)
  const double expected = std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
  REQUIRE(gmm.density(x) == Catch::Approx(expected).epsilon(1e-12));
  REQUIRE(expected == Catch::Approx(0.24197).epsilon(1e-4));
}

TEST_CASE("density rejects dimension mismatches", "[gmm]") {
  const auto gmm = make_default_gmm();
  Eigen::VectorXd x(3);
  x.setZero();
  REQUIRE_THROWS_AS(gmm.density(x), std::invalid_argument);
}

TEST_CASE("degenerate-width component pins samples to the mean", "[gmm]") {
  const auto gmm =
      single_gaussian(Eigen::Vector2d(3.0, 3.0), 1e-20 * Eigen::Matrix2d::Identity());
  Rng rng(7);
  for (const auto& x : gmm.sample(rng, 200)) {
    REQUIRE((x - Eigen::Vector2d(3.0, 3.0)).norm() < 1e-8);
  }
}

TEST_CASE("sampling is bit-identical for a fixed seed", "[gmm]") {
  const auto gmm = make_default_gmm();
  Rng rng_a(123), rng_b(123);
  const auto a = gmm.sample(rng_a, 100);
  const auto b = gmm.sample(rng_b, 100);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE((a[i].array() == b[i].array()).all());
  }
}

TEST_CASE("component frequencies match the weights", "[gmm][slow]") {
  // means far apart so the drawn component is identifiable
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  GaussianMixture gmm({{Eigen::Vector2d(-100.0, 0.0), Eigen::Matrix2d::Identity()},
                       {Eigen::Vector2d(100.0, 0.0), Eigen::Matrix2d::Identity()}},
                      w);
  Rng rng(42);
  const int n = 1000000;
  int first = 0;
  for (int i = 0; i < n; ++i) {
    if (gmm.sample_one(rng)(0) < 0.0) ++first;
  }
  const double freq = static_cast<double>(first) / n;
  // binomial SE ~ 5e-4; 4-sigma band
  REQUIRE(freq == Catch::Approx(0.5).margin(0.002));
}

TEST_CASE("density integrates to one on a wide grid", "[gmm][slow]") {
  SECTION("d = 1") {
    Eigen::VectorXd mu1(1), mu2(1), w(2);
    mu1 << -0.4;
    mu2 << 0.9;
    w << 0.3, 0.7;
    Eigen::MatrixXd c1(1, 1), c2(1, 1);
    c1 << 0.02;
    c2 << 0.07;
    GaussianMixture gmm({{mu1, c1}, {mu2, c2}}, w);
    const double sigma_max = std::sqrt(0.07);
    auto f = [&](double x) {
      Eigen::VectorXd v(1);
      v << x;
      return gmm.density(v);
    };
    const double z = simpson_1d(f, -0.4 - 10 * sigma_max, 0.9 + 10 * sigma_max, 4000);
    REQUIRE(z == Catch::Approx(1.0).margin(1e-3));
  }
  SECTION("d = 2, default target") {
    const auto gmm = make_default_gmm();
    const double pad = 10.0 * std::sqrt(0.05);
    auto f = [&](double x, double y) { return gmm.density(Eigen::Vector2d(x, y)); };
    const double z = simpson_2d(f, Eigen::Vector2d(-pad, -pad),
                                Eigen::Vector2d(1.0 + pad, 1.0 + pad), 700);
    REQUIRE(z == Catch::Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("empirical mean of many samples matches the mixture mean", "[gmm][slow]") {
  const auto gmm = make_default_gmm();
  Rng rng(5);
  const int n = 1000000;
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) acc += gmm.sample_one(rng);
  const Eigen::Vector2d empirical = acc / n;
  const Eigen::Vector2d mean = gmm.mean();
  // per-dimension variance of the mixture
  for (int d = 0; d < 2; ++d) {
    double second = 0.0;
    for (std::size_t j = 0; j < gmm.num_components(); ++j) {
      second += gmm.weight(j) * (gmm.component(j).covariance(d, d) +
                                 gmm.component(j).mean(d) * gmm.component(j).mean(d));
    }
    const double se = std::sqrt((second - mean(d) * mean(d)) / n);
    REQUIRE(std::abs(empirical(d) - mean(d)) < 5.0 * se);
  }
}

TEST_CASE("mixture construction validates its inputs", "[gmm]") {
  Eigen::VectorXd w1(1);
  w1 << 0.5;  // does not sum to 1
  REQUIRE_THROWS_AS(
      GaussianMixture({{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()}}, w1),
      std::invalid_argument);

  Eigen::VectorXd w2(2);
  w2 << 1.5, -0.5;  // negative weight
  REQUIRE_THROWS_AS(
      GaussianMixture({{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()},
                       {Eigen::Vector2d::Ones(), Eigen::Matrix2d::Identity()}},
                      w2),
      std::invalid_argument);

  Eigen::Matrix2d asym;
  asym << 1.0, 0.5, 0.2, 1.0;
  Eigen::VectorXd w3(1);
  w3 << 1.0;
  REQUIRE_THROWS_AS(GaussianMixture({{Eigen::Vector2d::Zero(), asym}}, w3),
                    std::invalid_argument);

  Eigen::Matrix2d indef;
  indef << 1.0, 2.0, 2.0, 1.0;  // symmetric but not positive definite
  REQUIRE_THROWS_AS(GaussianMixture({{Eigen::Vector2d::Zero(), indef}}, w3),
                    NotPositiveDefinite);

  const auto gmm = make_default_gmm();
  Rng rng(1);
  REQUIRE_THROWS_AS(gmm.sample(rng, 0), std::invalid_argument);
}

TEST_CASE("JSON round trip preserves the mixture exactly", "[gmm]") {
  const auto gmm = make_default_gmm();
  const auto parsed = gmm_from_json(gmm_to_json(gmm));
  REQUIRE(parsed.dim() == gmm.dim());
  REQUIRE(parsed.num_components() == gmm.num_components());
  for (std::size_t j = 0; j < gmm.num_components(); ++j) {
    REQUIRE(parsed.weight(j) == gmm.weight(j));
    REQUIRE((parsed.component(j).mean.array() == gmm.component(j).mean.array()).all());
    REQUIRE(
        (parsed.component(j).covariance.array() == gmm.component(j).covariance.array()).all());
  }
}

TEST_CASE("checked-in default target matches its generator", "[gmm]") {
  const auto from_file =
      load_gmm(std::filesystem::path(KQUAD_SOURCE_DIR) / "data" / "default_gmm.json");
  const auto generated = make_default_gmm();
  REQUIRE(from_file.num_components() == generated.num_components());
  for (std::size_t j = 0; j < generated.num_components(); ++j) {
    REQUIRE(from_file.weight(j) == generated.weight(j));
    REQUIRE((from_file.component(j).mean.array() == generated.component(j).mean.array()).all());
    REQUIRE((from_file.component(j).covariance.array() ==
             generated.component(j).covariance.array())
                .all());
  }
}
