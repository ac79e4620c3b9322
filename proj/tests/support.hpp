#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace gds::testing {

inline nlohmann::json load_data(const std::string& name) {
  std::ifstream in(std::string(GDS_TEST_DATA_DIR) + "/" + name);
  if (!in) throw std::runtime_error("cannot open test data " + name);
  return nlohmann::json::parse(in);
}

inline Eigen::VectorXd to_vec(const nlohmann::json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline Eigen::MatrixXd to_mat(const nlohmann::json& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows.at(i).at(j).get<double>();
  return m;
}

/// Minimizes f over a box centred at `center` by repeated grid search, each
/// pass shrinking the box around the best point found so far. Only meant for
/// dimensions up to 4. `keep` is the half-width of the next box in grid steps.
template <class F>
Eigen::VectorXd grid_minimize(F&& f, const Eigen::VectorXd& center, double half_width, int points = 41,
                              int passes = 14, double keep = 4.0) {
  const Eigen::Index d = center.size();
  Eigen::VectorXd best = center;
  double fbest = f(best);
  Eigen::VectorXd mid = center;
  double h = half_width;
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (int pass = 0; pass < passes; ++pass) {
    const double step = 2.0 * h / (points - 1);
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      Eigen::VectorXd x(d);
      for (Eigen::Index i = 0; i < d; ++i) x(i) = mid(i) - h + step * idx[static_cast<std::size_t>(i)];
      const double fx = f(x);
      if (fx < fbest) fbest = fx, best = x;
      std::size_t c = 0;
      while (c < idx.size() && ++idx[c] == points) idx[c++] = 0;
      if (c == idx.size()) break;
    }
    mid = best;
    h = keep * step;
  }
  return best;
}

}  // namespace gds::testing
