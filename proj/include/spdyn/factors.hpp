#pragma once

#include <array>
#include <optional>
#include <vector>

#include "spdyn/linalg.hpp"
#include "spdyn/panel.hpp"

namespace spdyn {

// Principal-component factors of one covariate lag.
struct FactorEstimate {
  MatrixXd f_hat;    // T x r, columns satisfy F'F / T = I
  VectorXd eigvals;  // all T eigenvalues of the pooled moment, non-increasing
};

// Top-r eigenvectors (scaled by sqrt(T)) of (NT)^-1 sum_i X_i X_i', with X_i the
// T x k covariate block of unit i. Sign fixed so the first nonzero entry of each
// column is positive. r = 0 yields an empty basis.
FactorEstimate extract_factors(const std::vector<MatrixXd>& x_lag, Index r);

// Same, for a single N x T panel of series (e.g. regression residuals).
FactorEstimate extract_factors(const MatrixXd& series, Index r);

// Eigenvalue-ratio factor count: argmax_{1<=j<=r_max} lambda_j / lambda_{j+1},
// ties broken at the smallest j. r_max is capped by the count of positive
// eigenvalues minus one.
Index select_rank(const VectorXd& eigvals, Index r_max);

// M = I - F (F'F)^-1 F'. An empty basis gives the identity.
class Annihilator {
 public:
  Annihilator() = default;
  explicit Annihilator(MatrixXd basis);

  MatrixXd apply(const MatrixXd& z) const;
  MatrixXd dense() const;
  const MatrixXd& basis() const { return basis_; }
  Index rank() const { return basis_.cols(); }

 private:
  MatrixXd basis_;
  MatrixXd gram_inv_;  // (F'F)^-1
};

MatrixXd project_out(const Annihilator& ann, const MatrixXd& z);

struct FactorOptions {
  std::optional<Index> r_x;  // nullopt: eigenvalue-ratio selection
  Index r_max = 8;
};

struct FactorBasis {
  std::array<FactorEstimate, 3> by_lag;  // tau = 0, 1, 2
  std::array<Annihilator, 3> annihilators;
  Index r_x = 0;
  Index r_y = 0;  // filled in by the estimators
};

// Largest admissible factor count: floor(min(N, T) / 2).
Index max_factor_count(Index n, Index t);

FactorBasis build_factor_basis(const TransformedPanel& tp, const FactorOptions& options = {});

}  // namespace spdyn
