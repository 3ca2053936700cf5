#pragma once

#include <filesystem>
#include <string>

#include "spdyn/linalg.hpp"
#include "spdyn/rng.hpp"

namespace testing {

using spdyn::Index;
using spdyn::MatrixXd;
using spdyn::VectorXd;

inline MatrixXd randn(Index r, Index c, spdyn::Rng& rng) {
  MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

inline MatrixXd randu(Index r, Index c, spdyn::Rng& rng) {
  MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.uniform();
  return m;
}

// Nonnegative matrix with zero diagonal.
inline MatrixXd rand_weights(Index n, spdyn::Rng& rng, double density = 0.5) {
  MatrixXd w = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && rng.uniform() < density) w(i, j) = rng.uniform() + 0.1;
  return w;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("spdyn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing
