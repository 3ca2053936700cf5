#include "spdyn/factors.hpp"

#include <algorithm>
#include <cmath>

#include "spdyn/errors.hpp"

namespace spdyn {

namespace {

FactorEstimate top_eigenvectors(const MatrixXd& moment, Index r, Index rank_cap) {
  const Index t = moment.rows();
  if (r < 0) throw RankError("factor count must be nonnegative");
  if (r > rank_cap)
    throw RankError("factor count " + std::to_string(r) + " exceeds min(N*k, T) = " + std::to_string(rank_cap));

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(moment);
  if (eig.info() != Eigen::Success) throw NumericError("eigen decomposition failed");
  FactorEstimate out;
  out.eigvals = eig.eigenvalues().reverse().cwiseMax(0.0);
  if (r == 0) {
    out.f_hat = MatrixXd(t, 0);
    return out;
  }
  const double top = out.eigvals(0);
  if (!(top > 0.0) || out.eigvals(r - 1) <= 1e-12 * top)
    throw RankError("moment matrix has fewer than " + std::to_string(r) + " nonzero eigenvalues");

  out.f_hat = eig.eigenvectors().rightCols(r).rowwise().reverse() * std::sqrt(static_cast<double>(t));
  for (Index c = 0; c < r; ++c) {
    auto col = out.f_hat.col(c);
    const double tol = 1e-12 * col.cwiseAbs().maxCoeff();
    for (Index s = 0; s < t; ++s) {
      if (std::fabs(col(s)) > tol) {
        if (col(s) < 0.0) col = -col;
        break;
      }
    }
  }
  return out;
}

}  // namespace

FactorEstimate extract_factors(const std::vector<MatrixXd>& x_lag, Index r) {
  if (x_lag.empty()) throw RankError("no covariates to extract factors from");
  const Index n = x_lag.front().rows();
  const Index t = x_lag.front().cols();
  MatrixXd moment = MatrixXd::Zero(t, t);
  for (const auto& xl : x_lag) {
    if (xl.rows() != n || xl.cols() != t) throw ShapeError("covariate arrays differ in shape");
    if (!xl.allFinite()) throw NumericError("covariates contain non-finite values");
    moment.noalias() += xl.transpose() * xl;
  }
  moment /= static_cast<double>(n * t);
  const Index cap = std::min<Index>(n * static_cast<Index>(x_lag.size()), t);
  return top_eigenvectors(moment, r, cap);
}

FactorEstimate extract_factors(const MatrixXd& series, Index r) {
  if (!series.allFinite()) throw NumericError("series contain non-finite values");
  const Index n = series.rows(), t = series.cols();
  MatrixXd moment = series.transpose() * series / static_cast<double>(n * t);
  return top_eigenvectors(moment, r, std::min(n, t));
}

Index select_rank(const VectorXd& eigvals, Index r_max) {
  if (r_max < 1) throw DomainError("r_max must be at least 1");
  if (eigvals.size() == 0) throw RankError("no eigenvalues supplied");
  const double top = eigvals(0);
  Index positive = 0;
  for (Index j = 0; j < eigvals.size(); ++j)
    if (eigvals(j) > 1e-12 * top && eigvals(j) > 0.0) ++positive;
  if (positive < 2) throw RankError("eigenvalue-ratio rule needs at least two positive eigenvalues");
  const Index cap = std::min(r_max, positive - 1);
  Index best = 1;
  double best_ratio = eigvals(0) / eigvals(1);
  for (Index j = 2; j <= cap; ++j) {
    double ratio = eigvals(j - 1) / eigvals(j);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = j;
    }
  }
  return best;
}

Annihilator::Annihilator(MatrixXd basis) : basis_(std::move(basis)) {
  if (basis_.cols() == 0) return;
  MatrixXd gram = basis_.transpose() * basis_;
  gram_inv_ = linalg::solve_spd(gram, MatrixXd::Identity(gram.rows(), gram.cols()), "factor Gram matrix F'F");
}

MatrixXd Annihilator::apply(const MatrixXd& z) const {
  if (basis_.cols() == 0) return z;
  if (z.rows() != basis_.rows())
    throw ShapeError("projection of " + std::to_string(z.rows()) + " rows onto a basis of " +
                     std::to_string(basis_.rows()) + " rows");
  return z - basis_ * (gram_inv_ * (basis_.transpose() * z));
}

MatrixXd Annihilator::dense() const {
  const Index t = basis_.rows();
  if (basis_.cols() == 0) return MatrixXd::Identity(t, t);
  return MatrixXd::Identity(t, t) - basis_ * gram_inv_ * basis_.transpose();
}

MatrixXd project_out(const Annihilator& ann, const MatrixXd& z) { return ann.apply(z); }

Index max_factor_count(Index n, Index t) { return std::min(n, t) / 2; }

FactorBasis build_factor_basis(const TransformedPanel& tp, const FactorOptions& options) {
  FactorBasis fb;
  const Index cap = max_factor_count(tp.n(), tp.t_eff);
  Index r = 0;
  if (options.r_x) {
    r = *options.r_x;
    if (r < 0 || r > cap)
      throw RankError("r_x = " + std::to_string(r) + " outside [0, " + std::to_string(cap) + "]");
  } else {
    if (cap < 1) throw RankError("panel too small for factor selection");
    auto probe = extract_factors(tp.x0, 0);
    r = select_rank(probe.eigvals, std::min(options.r_max, cap));
  }
  fb.r_x = r;
  for (int tau = 0; tau < 3; ++tau) {
    fb.by_lag[tau] = extract_factors(tp.x_lag(tau), r);
    fb.annihilators[tau] = Annihilator(fb.by_lag[tau].f_hat);
  }
  return fb;
}

}  // namespace spdyn
