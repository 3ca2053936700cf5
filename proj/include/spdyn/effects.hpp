#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spdyn/linalg.hpp"
#include "spdyn/weights.hpp"

namespace spdyn {

// (I - psi W)^-1, one matrix per period for time-varying weights.
struct Multiplier {
  std::vector<MatrixXd> s_inv;
  std::vector<double> rcond;  // reciprocal condition estimate of each S
  double psi = 0.0;
  std::optional<VectorXd> psi_units;  // set for unit-specific psi: S = I - diag(psi) W
  bool time_varying = false;

  Index n() const { return s_inv.empty() ? 0 : s_inv.front().rows(); }
  Index periods() const { return static_cast<Index>(s_inv.size()); }
};

// Row-standardized weights require |psi| < 1, others a spectral radius of
// psi W below one (StabilityError). rcond < 1e-12 raises ConditionError.
Multiplier multiplier(const WeightScheme& w, double psi);
Multiplier multiplier(const WeightScheme& w, const VectorXd& psi_units);

struct EffectRow {
  std::string name;
  double direct = 0.0, indirect = 0.0, total = 0.0;
  std::optional<double> se_direct, se_indirect, se_total;
};

struct EffectsTable {
  std::vector<EffectRow> rows;
  bool time_varying = false;  // standard errors are never reported for these
  double mean_diag = 0.0;     // averages of diag(S^-1) and of its row sums
  double mean_row_sum = 0.0;
};

// direct = b mean(diag S^-1), total = direct + indirect with indirect =
// b mean(off-diagonal row sums). Time-varying multipliers average over periods.
// When delta is given a "lagged_level" row comes first.
EffectsTable average_effects(const Multiplier& m, const VectorXd& beta, const std::vector<std::string>& names,
                             std::optional<double> delta = std::nullopt);

double pairwise_effect(const Multiplier& m, double beta_l, Index i, Index j, Index period = 0);

struct SpillResult {
  VectorXd total;  // own + spill
  VectorXd own;    // diagonal contribution
  VectorXd spill;
};

// Response of every unit to a unit shock in each source unit.
SpillResult spill_out(const Multiplier& m, double beta_l, const std::vector<Index>& sources);
// Contribution of every source unit to the response of target.
SpillResult spill_in(const Multiplier& m, double beta_l, Index target);
// Mean response over targets to a unit shock in every source.
double group_effect(const Multiplier& m, double beta_l, const std::vector<Index>& sources,
                    const std::vector<Index>& targets);

enum class SeMethod { none, delta, sim };

struct SeOptions {
  SeMethod method = SeMethod::delta;
  Index draws = 5000;
  std::uint64_t seed = 0;
};

// Fills the se_* fields of table from the joint covariance of (delta, psi, beta)
// in the coefficient layout of theta. Time-varying weights: NotAvailableError.
void effect_standard_errors(EffectsTable& table, const VectorXd& theta, const MatrixXd& vcov,
                            const WeightScheme& w, const SeOptions& options = {});

// Effects table for a full coefficient vector (delta, psi, beta...). Standard
// errors are attached for static weights, and omitted for time-varying ones.
EffectsTable compute_effects(const WeightScheme& w, const VectorXd& theta, const MatrixXd& vcov,
                             const std::vector<std::string>& covariate_names, const SeOptions& options = {});

}  // namespace spdyn
