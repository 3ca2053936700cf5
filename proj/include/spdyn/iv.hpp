#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spdyn/factors.hpp"
#include "spdyn/linalg.hpp"
#include "spdyn/panel.hpp"
#include "spdyn/weights.hpp"

namespace spdyn {

// Coefficient layout shared by every estimator: (delta, psi, beta_1..beta_k).
inline constexpr Index kDeltaPos = 0;
inline constexpr Index kPsiPos = 1;
inline constexpr Index kBetaPos = 2;

std::vector<std::string> coefficient_names(const std::vector<std::string>& covariate_names);

// Which of the six defactored blocks enter the instrument matrix.
struct InstrumentSpec {
  std::array<bool, 3> own{true, true, true};      // M_F M_F(-tau) X_i(-tau)
  std::array<bool, 3> spatial{true, true, true};  // M_F M_F(-tau) sum_j w_ij X_j(-tau)

  Index block_count() const;
};

struct InstrumentSet {
  MatrixXd z;                             // T_eff x q
  Index q = 0;
  std::vector<std::string> block_labels;  // one per column, e.g. "own_lag1:x2"
  bool spatial_dropped = false;           // isolated unit: spatial blocks removed
  std::vector<Index> layout;              // column positions within the full q_full layout
  Index q_full = 0;

  // Instrument matrix in the full layout, zero-filling dropped columns.
  MatrixXd expanded() const;
};

std::vector<InstrumentSet> build_instruments(const TransformedPanel& tp, const WeightScheme& w,
                                             const FactorBasis& fb, const InstrumentSpec& spec = {});

// Per-unit regression data: y = dy_i, C = (y_lag_i, sum_j w_ij dy_j, X_i).
struct UnitDesign {
  MatrixXd c;
  VectorXd y;
  bool isolated = false;  // zero weight row
};

std::vector<UnitDesign> build_designs(const TransformedPanel& tp, const WeightScheme& w);

struct UnitEstimate {
  VectorXd theta;          // psi slot is NaN when excluded_spatial
  double sigma_hat = 0.0;  // residual standard error
  double cond = 0.0;       // condition number of B = Z'Z / T
  bool excluded_spatial = false;
  VectorXd residuals;      // y - C theta over present coefficients

  std::optional<double> coef(Index p) const;
};

// theta = (A' B^-1 A)^-1 A' B^-1 c with A = Z'C/T, B = Z'Z/T, c = Z'y/T.
UnitEstimate estimate_unit(const MatrixXd& c, const VectorXd& y, const MatrixXd& z);

// Unit estimate in the model layout. Isolated units drop the spatial-lag
// column and report psi as absent.
UnitEstimate estimate_unit_model(const UnitDesign& design, const InstrumentSet& inst);

struct PooledOptions {
  std::optional<Index> r_y;  // nullopt: eigenvalue-ratio selection on pilot residuals
  Index r_max = 8;
};

struct PooledEstimate {
  VectorXd theta;
  MatrixXd vcov;
  std::optional<double> j_stat;
  Index j_dof = 0;
  std::optional<double> j_pvalue;
  double rho = 0.0;
  Index r_y = 0;
  Index q = 0;
  MatrixXd residuals;  // N x T_eff, y - C theta

  VectorXd se() const { return vcov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

// Two-pass pooled IV with common theta. Pass one: 2SLS on the defactored
// instruments. Residual factors are then extracted (r_y) and projected out of
// the instruments. Pass two: two-step GMM with a unit-clustered weight matrix,
// giving the robust covariance and Hansen's J statistic.
PooledEstimate estimate_pooled(const std::vector<UnitDesign>& designs, const std::vector<InstrumentSet>& inst,
                               const PooledOptions& options = {});

// Share of residual variance captured by r_y principal components:
// 1 - SSR(after projecting them out) / SSR(before).
double compute_rho(const MatrixXd& residuals, Index r_y);

}  // namespace spdyn
