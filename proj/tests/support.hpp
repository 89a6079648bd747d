#pragma once

#include "dlmc/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

namespace dlmc::test {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(DLMC_SOURCE_DIR) / rel;
}

/// Central finite-difference gradient with step h.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

/// |a - b| / max(|b|, floor), in the Euclidean norm.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

/// Two-sided p-value of a two-sample z statistic.
inline double two_sample_p(double mean_a, double var_a, long n_a, double mean_b, double var_b, long n_b) {
  const double se = std::sqrt(var_a / n_a + var_b / n_b);
  const double z = std::abs(mean_a - mean_b) / se;
  return std::erfc(z / std::sqrt(2.0));
}

/// Fresh temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("dlmc_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag + std::to_string(std::rand()))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace dlmc::test
