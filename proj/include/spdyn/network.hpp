#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spdyn/linalg.hpp"

namespace spdyn {

struct HomophilyResult {
  double l_same = 0.0;    // within-group link weight
  double l_total = 0.0;   // total link weight
  double h_hat = 0.0;     // l_same / l_total
  double h_null_mean = 0.0;
  double rhi = 0.0;       // h_hat / h_null_mean
  double excess = 0.0;    // h_hat - h_null_mean
  double p_value = 0.0;   // #{L_b >= L} / b
  double p_value_plus_one = 0.0;  // (#{L_b >= L} + 1) / (b + 1)
  Index count_same = 0;   // directed same-group links of the binarized network
  Index count_total = 0;
  Index b = 0;
  std::uint64_t seed = 0;
};

double relative_homophily_index(double h_hat, double h_null_mean);
double homophily_excess(double h_hat, double h_null_mean);

// groups[i] labels unit i. Labels are permuted with group sizes preserved;
// permutation b draws from its own stream, so results do not depend on the
// thread count.
HomophilyResult homophily_test(const MatrixXd& w, const std::vector<std::string>& groups, Index b = 10000,
                               std::uint64_t seed = 0);

Index count_same_links(const MatrixXd& w_binary, const std::vector<std::string>& groups);

enum class LogitCorrection { none, firth, king_zeng };

struct LogitOptions {
  LogitCorrection correction = LogitCorrection::firth;
  Index max_iter = 200;
  double tol = 1e-10;  // relative change of the (penalized) log-likelihood
};

struct LinkLogitResult {
  double alpha_hat = 0.0;
  VectorXd pi_hat;
  VectorXd ses;        // intercept first
  VectorXd p_values;   // intercept first
  VectorXd odds_ratios;
  std::vector<std::string> names;
  Index n_links = 0;
  Index n_pairs = 0;   // off-diagonal pairs used
  Index dropped_pairs = 0;
  LogitCorrection correction = LogitCorrection::firth;
  double loglik = 0.0;
  Index iterations = 0;
  std::vector<double> loglik_path;  // objective after every accepted step
};

double odds_ratio(double coefficient);

// Logistic regression of link indicators 1{w_ij != 0} on bilateral covariates,
// stacking every i != j cell. Pairs with a non-finite covariate are dropped.
LinkLogitResult link_logit(const MatrixXd& w_binary, const std::vector<MatrixXd>& bilateral,
                           const std::vector<std::string>& names, const LogitOptions& options = {});

// Generic IRLS fit with optional bias correction; x includes the intercept column.
struct LogitFit {
  VectorXd beta;
  MatrixXd vcov;
  double loglik = 0.0;
  Index iterations = 0;
  std::vector<double> path;
};
LogitFit fit_logit(const MatrixXd& x, const VectorXd& y, const LogitOptions& options = {});

// log(flow); zero flows become NaN unless an offset is given (log(flow + offset)).
MatrixXd log_flows(const MatrixXd& flows, std::optional<double> offset = std::nullopt);

}  // namespace spdyn
