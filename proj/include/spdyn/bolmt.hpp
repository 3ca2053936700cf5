#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spdyn/factors.hpp"
#include "spdyn/linalg.hpp"
#include "spdyn/panel.hpp"
#include "spdyn/weights.hpp"

namespace spdyn {

enum class ThresholdRule { bonferroni, fixed };

// Reference distribution behind the Bonferroni cutoff.
enum class ThresholdReference { normal, student_t };

// own: each selected or candidate outcome is projected on its own covariates.
// joint: every endogenous column is projected on the union of the unit's
// covariates and those of all selected units and the candidate.
enum class FirstStage { own, joint };

struct BolmtConfig {
  double alpha = 0.05;
  std::optional<Index> max_links;  // default N - 1
  ThresholdRule rule = ThresholdRule::bonferroni;
  ThresholdReference reference = ThresholdReference::normal;
  double fixed_c = 0.0;
  FirstStage first_stage = FirstStage::joint;
  bool include_lags = false;          // add lag-1 and lag-2 covariates to both sides
  bool include_lagged_level = true;   // y_{i,t-1} among the unit's own controls
  bool defactor = false;              // project everything off the lag-0 covariate factors
  FactorOptions factors;

  void validate() const;
};

// Outcome and covariate blocks used by the scans, all T_eff rows.
struct BolmtData {
  std::vector<std::string> unit_ids;
  std::vector<VectorXd> y;     // outcome series per unit
  std::vector<MatrixXd> own;   // regressors of unit i in its own equation
  std::vector<MatrixXd> cand;  // first-stage covariates of unit j as a candidate

  Index n() const { return static_cast<Index>(y.size()); }
};

BolmtData bolmt_data(const TransformedPanel& tp, const BolmtConfig& cfg = {});

// Already-selected neighbours of the unit being scanned.
struct SelectedControls {
  MatrixXd actual;       // their outcome series
  MatrixXd fitted;       // first-stage fits of those series
  MatrixXd instruments;  // their stacked first-stage covariates
};

// IV t-statistic for candidate j in the equation of unit i:
//   t = T^-1/2 yhat_j' M y_i / (sigma_i sqrt(T^-1 yhat_j' M yhat_j)),
// yhat_j the first-stage fit of y_j, M the annihilator of (x_i, fitted controls),
// and sigma_i the residual scale of the IV regression of y_i on
// (x_i, selected outcomes, y_j). Throws DegenerateCandidateError when the
// candidate is annihilated by the controls.
double pairwise_t(const VectorXd& yi, const VectorXd& yj, const MatrixXd& xi, const MatrixXd& xj,
                  const SelectedControls& controls, FirstStage first_stage = FirstStage::joint);

struct TraceEntry {
  Index step = 0;
  Index candidate = -1;
  double abs_t = 0.0;
  double threshold = 0.0;
  bool accepted = false;
};

struct RowSelection {
  std::vector<Index> selected;         // in order of acceptance
  std::vector<TraceEntry> trace;       // best candidate of every step
  Index degenerate_candidates = 0;     // skipped scans
};

double bolmt_threshold(const BolmtConfig& cfg, Index n, Index dof);

RowSelection recover_row(Index i, const BolmtData& data, const BolmtConfig& cfg = {});

struct RecoveredNetwork {
  WeightScheme w_hat;  // binary links, then row-standardized
  std::vector<RowSelection> rows;
  NetworkStats stats;
};

RecoveredNetwork recover_network(const BolmtData& data, const BolmtConfig& cfg = {});

// Accepted links as `from,to,abs_t,step`: from is the row unit, to the selected neighbour.
void write_edge_list(const std::filesystem::path& path, const RecoveredNetwork& net);

}  // namespace spdyn
