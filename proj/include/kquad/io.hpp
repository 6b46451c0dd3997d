#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kquad/gmm.hpp"
#include "kquad/testfns.hpp"

namespace kquad {

namespace detail {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& a) {
  if (!a.is_array()) throw std::invalid_argument("expected a JSON array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = a[static_cast<std::size_t>(i)].get<double>();
  return v;
}

// row-major nested arrays, full matrix
inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& a) {
  if (!a.is_array() || a.empty()) throw std::invalid_argument("expected a JSON matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(a.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(a[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = a[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument("ragged JSON matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json gmm_to_json(const GaussianMixture& gmm) {
  nlohmann::json components = nlohmann::json::array();
  for (std::size_t j = 0; j < gmm.num_components(); ++j) {
    components.push_back({{"mean", detail::vector_to_json(gmm.component(j).mean)},
                          {"cov", detail::matrix_to_json(gmm.component(j).covariance)}});
  }
  return {{"dim", gmm.dim()},
          {"weights", detail::vector_to_json(gmm.weights())},
          {"components", std::move(components)}};
}

inline GaussianMixture gmm_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("weights") || !j.contains("components")) {
    throw std::invalid_argument("GMM JSON needs keys dim, weights, components");
  }
  const Eigen::Index dim = j.at("dim").get<Eigen::Index>();
  Eigen::VectorXd weights = detail::vector_from_json(j.at("weights"));
  std::vector<GaussianComponent> components;
  for (const auto& c : j.at("components")) {
    GaussianComponent comp{detail::vector_from_json(c.at("mean")),
                           detail::matrix_from_json(c.at("cov"))};
    if (comp.mean.size() != dim) throw std::invalid_argument("GMM JSON: dim mismatch");
    components.push_back(std::move(comp));
  }
  return GaussianMixture(std::move(components), std::move(weights));
}

inline GaussianMixture load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open GMM file: " + path.string());
  nlohmann::json j;
  in >> j;
  return gmm_from_json(j);
}

inline void save_gmm(const GaussianMixture& gmm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write GMM file: " + path.string());
  out << gmm_to_json(gmm).dump(2) << "\n";
}

/// Serializes a drawn function set for experiment reproducibility.
inline nlohmann::json rkhs_set_to_json(const std::vector<RkhsFunction>& functions,
                                       std::uint64_t seed) {
  nlohmann::json fns = nlohmann::json::array();
  for (const auto& f : functions) {
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : f.centers) centers.push_back(detail::vector_to_json(c));
    fns.push_back({{"centers", std::move(centers)},
                   {"coefficients", detail::vector_to_json(f.coefficients)}});
  }
  return {{"type", "rkhs"},
          {"lengthscale", functions.empty() ? 0.0 : functions.front().kernel.lengthscale()},
          {"seed", seed},
          {"functions", std::move(fns)}};
}

inline nlohmann::json bump_set_to_json(const std::vector<BumpFunction>& functions,
                                       std::uint64_t seed) {
  nlohmann::json fns = nlohmann::json::array();
  for (const auto& f : functions) {
    nlohmann::json amplitudes = nlohmann::json::array();
    nlohmann::json centers = nlohmann::json::array();
    nlohmann::json covariances = nlohmann::json::array();
    for (const auto& b : f.bumps) {
      amplitudes.push_back(b.amplitude());
      centers.push_back(detail::vector_to_json(b.center()));
      covariances.push_back(detail::matrix_to_json(b.covariance()));
    }
    fns.push_back({{"amplitudes", std::move(amplitudes)},
                   {"centers", std::move(centers)},
                   {"covariances", std::move(covariances)}});
  }
  return {{"type", "bumps"}, {"seed", seed}, {"functions", std::move(fns)}};
}

}  // namespace kquad
