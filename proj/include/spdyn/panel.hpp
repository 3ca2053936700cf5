#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spdyn/linalg.hpp"

namespace spdyn {

// Balanced N x T panel: one outcome and k covariates per (unit, period).
struct PanelDataset {
  std::vector<std::string> unit_ids;
  std::vector<std::int64_t> time_ids;  // strictly increasing
  std::string outcome_name = "y";
  std::vector<std::string> covariate_names;
  MatrixXd y;                   // N x T levels
  std::vector<MatrixXd> x;      // k matrices, each N x T

  Index n() const { return y.rows(); }
  Index t() const { return y.cols(); }
  Index k() const { return static_cast<Index>(x.size()); }

  // Checks shapes, finiteness, label uniqueness and time ordering.
  void validate() const;
};

enum class Demean { two_way, unit_only, none };

struct IngestConfig {
  std::string unit_column = "unit";
  std::string time_column = "time";
  std::string outcome = "y";
  std::vector<std::string> covariates;  // empty: every remaining column
};

PanelDataset load_panel(const std::filesystem::path& path, const IngestConfig& config = {});
void save_panel(const PanelDataset& panel, const std::filesystem::path& path);

struct TransformOptions {
  Demean demean = Demean::two_way;
  // true: build differences and lags first, then demean on the estimation
  // window. false: demean levels over the full sample, then difference.
  bool difference_first = true;
};

// Estimation-window series. Period s of the window corresponds to level index
// t = s + 2 (0-based), so dy = y_t - y_{t-1}, y_lag = y_{t-1}, x0 = x_t,
// x1 = x_{t-1}, x2 = x_{t-2}; every covariate lag has full support.
struct TransformedPanel {
  std::vector<std::string> unit_ids;
  std::vector<std::int64_t> window_time_ids;
  std::vector<std::string> covariate_names;
  MatrixXd dy;                 // N x t_eff
  MatrixXd y_lag;              // N x t_eff
  std::vector<MatrixXd> x0, x1, x2;  // k matrices, each N x t_eff
  Index t_eff = 0;
  Index first_level_index = 2;  // column of the source panel for window period 0
  Demean demean = Demean::two_way;

  Index n() const { return dy.rows(); }
  Index k() const { return static_cast<Index>(x0.size()); }
  const std::vector<MatrixXd>& x_lag(int tau) const;
};

TransformedPanel build_transformed(const PanelDataset& panel, const TransformOptions& options = {});

// First differences over all T-1 spells with the matching lagged levels.
struct Differences {
  MatrixXd dy;     // N x (T-1)
  MatrixXd y_lag;  // N x (T-1)
};
Differences first_difference(const MatrixXd& y);

MatrixXd demean(const MatrixXd& z, Demean mode);
// Subtracts the cross-sectional mean of every period (time effects only).
MatrixXd demean_time(const MatrixXd& z);

}  // namespace spdyn
