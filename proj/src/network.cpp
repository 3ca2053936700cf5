#include "spdyn/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "spdyn/errors.hpp"
#include "spdyn/parallel.hpp"
#include "spdyn/rng.hpp"
#include "spdyn/stats.hpp"

namespace spdyn {

double relative_homophily_index(double h_hat, double h_null_mean) {
  if (!(h_null_mean > 0.0)) throw DomainError("null homophily share must be positive");
  return h_hat / h_null_mean;
}

double homophily_excess(double h_hat, double h_null_mean) { return h_hat - h_null_mean; }

namespace {

std::vector<int> encode(const std::vector<std::string>& groups) {
  std::map<std::string, int> codes;
  std::vector<int> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(codes.emplace(g, static_cast<int>(codes.size())).first->second);
  return out;
}

double same_weight(const MatrixXd& w, const std::vector<int>& g) {
  double s = 0.0;
  const Index n = w.rows();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && g[static_cast<std::size_t>(i)] == g[static_cast<std::size_t>(j)]) s += w(i, j);
  return s;
}

void check_square(const MatrixXd& w, const std::vector<std::string>& groups) {
  if (w.rows() != w.cols()) throw ShapeError("network matrix must be square");
  if (static_cast<Index>(groups.size()) != w.rows()) throw ShapeError("one group label per unit required");
}

}  // namespace

Index count_same_links(const MatrixXd& w_binary, const std::vector<std::string>& groups) {
  check_square(w_binary, groups);
  auto g = encode(groups);
  Index c = 0;
  for (Index i = 0; i < w_binary.rows(); ++i)
    for (Index j = 0; j < w_binary.cols(); ++j)
      if (i != j && w_binary(i, j) != 0.0 && g[static_cast<std::size_t>(i)] == g[static_cast<std::size_t>(j)]) ++c;
  return c;
}

HomophilyResult homophily_test(const MatrixXd& w, const std::vector<std::string>& groups, Index b,
                               std::uint64_t seed) {
  check_square(w, groups);
  if (b < 100) throw DomainError("at least 100 permutations required");
  if (!w.allFinite() || w.minCoeff() < 0.0) throw DomainError("network weights must be finite and nonnegative");
  auto g = encode(groups);
  if (*std::max_element(g.begin(), g.end()) == 0) throw DegenerateGroupingError("all units share one group");

  HomophilyResult r;
  r.b = b;
  r.seed = seed;
  r.l_total = w.sum() - w.diagonal().sum();
  if (!(r.l_total > 0.0)) throw DomainError("network has no links");
  r.l_same = same_weight(w, g);
  r.h_hat = r.l_same / r.l_total;
  r.count_same = count_same_links(w, groups);
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      if (i != j && w(i, j) != 0.0) ++r.count_total;

  std::vector<double> perm(static_cast<std::size_t>(b));
  parallel::for_each_index(perm.size(), [&](std::size_t k) {
    Rng rng(seed, k + 1);
    std::vector<int> labels = g;
    rng.shuffle(std::span<int>(labels));
    perm[k] = same_weight(w, labels);
  });
  const double edge = r.l_same - 1e-12 * std::max(1.0, std::fabs(r.l_same));
  Index hits = 0;
  double sum = 0.0;
  for (double v : perm) {
    sum += v;
    if (v >= edge) ++hits;
  }
  r.h_null_mean = sum / static_cast<double>(b) / r.l_total;
  r.rhi = relative_homophily_index(r.h_hat, r.h_null_mean);
  r.excess = homophily_excess(r.h_hat, r.h_null_mean);
  r.p_value = static_cast<double>(hits) / static_cast<double>(b);
  r.p_value_plus_one = static_cast<double>(hits + 1) / static_cast<double>(b + 1);
  return r;
}

double odds_ratio(double coefficient) { return std::exp(coefficient); }

namespace {

double log_sigmoid(double eta) { return eta >= 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta)); }

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

struct State {
  VectorXd mu, wts;
  MatrixXd info;
  double loglik = 0.0;
  double objective = 0.0;
  bool ok = true;
};

State evaluate(const MatrixXd& x, const VectorXd& y, const VectorXd& beta, bool firth) {
  State s;
  VectorXd eta = x * beta;
  const Index n = x.rows();
  s.mu.resize(n);
  s.wts.resize(n);
  for (Index i = 0; i < n; ++i) {
    s.mu(i) = sigmoid(eta(i));
    s.wts(i) = s.mu(i) * (1.0 - s.mu(i));
    s.loglik += y(i) * log_sigmoid(eta(i)) + (1.0 - y(i)) * log_sigmoid(-eta(i));
  }
  s.info = x.transpose() * s.wts.asDiagonal() * x;
  s.objective = s.loglik;
  if (firth) {
    Eigen::LDLT<MatrixXd> ldlt(s.info);
    VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || d.minCoeff() <= 0.0) {
      s.ok = false;
      return s;
    }
    s.objective += 0.5 * d.array().log().sum();
  }
  return s;
}

}  // namespace

LogitFit fit_logit(const MatrixXd& x, const VectorXd& y, const LogitOptions& options) {
  const Index n = x.rows(), p = x.cols();
  if (y.size() != n) throw ShapeError("outcome and design differ in length");
  const double ones = y.sum();
  if (ones <= 0.0) throw DomainError("no positive outcomes (zero links)");
  if (ones >= static_cast<double>(n)) throw DomainError("every outcome is positive");
  const bool firth = options.correction == LogitCorrection::firth;

  LogitFit fit;
  VectorXd beta = VectorXd::Zero(p);
  const double ybar = ones / static_cast<double>(n);
  if (p > 0 && (x.col(0).array() == 1.0).all()) beta(0) = std::log(ybar / (1.0 - ybar));
  State cur = evaluate(x, y, beta, firth);
  if (!cur.ok) throw SingularError("logit information matrix is singular");
  fit.path.push_back(cur.objective);

  for (fit.iterations = 1; fit.iterations <= options.max_iter; ++fit.iterations) {
    VectorXd score = x.transpose() * (y - cur.mu);
    if (firth) {
      MatrixXd info_inv_xt = linalg::solve_spd(cur.info, x.transpose(), "logit information");
      VectorXd h(n);
      for (Index i = 0; i < n; ++i) h(i) = cur.wts(i) * x.row(i).dot(info_inv_xt.col(i));
      score += x.transpose() * (h.array() * (0.5 - cur.mu.array())).matrix();
    }
    VectorXd step;
    try {
      step = linalg::solve_spd(cur.info, score, "logit information", 1e-14);
    } catch (const SingularError&) {
      throw SeparationError("information matrix degenerates: outcomes are (quasi-)separated; try the firth correction");
    }
    double scale = 1.0;
    State next;
    VectorXd trial;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      trial = beta + scale * step;
      next = evaluate(x, y, trial, firth);
      if (next.ok && next.objective >= cur.objective) break;
    }
    if (!next.ok || next.objective < cur.objective) break;  // no ascent possible: at the optimum
    const double change = std::fabs(next.objective - cur.objective) / std::max(std::fabs(cur.objective), 1e-300);
    beta = trial;
    cur = next;
    fit.path.push_back(cur.objective);
    if (!firth && beta.cwiseAbs().maxCoeff() > 30.0)
      throw SeparationError("coefficients diverge: outcomes are separated; try the firth correction");
    if (change < options.tol) break;
  }
  fit.iterations = std::min(fit.iterations, options.max_iter);
  fit.vcov = linalg::solve_spd(cur.info, MatrixXd::Identity(p, p), "logit information");
  fit.loglik = cur.loglik;

  if (options.correction == LogitCorrection::king_zeng) {
    // beta - (X'WX)^-1 X'W xi, xi_i = Q_ii (mu_i - 1/2) with Q = X (X'WX)^-1 X'.
    VectorXd xi(n);
    MatrixXd vx = fit.vcov * x.transpose();
    for (Index i = 0; i < n; ++i) xi(i) = x.row(i).dot(vx.col(i)) * (cur.mu(i) - 0.5);
    beta -= fit.vcov * (x.transpose() * (cur.wts.array() * xi.array()).matrix());
    const double shrink = static_cast<double>(n) / static_cast<double>(n + p);
    fit.vcov *= shrink * shrink;
  }
  fit.beta = beta;
  return fit;
}

LinkLogitResult link_logit(const MatrixXd& w_binary, const std::vector<MatrixXd>& bilateral,
                           const std::vector<std::string>& names, const LogitOptions& options) {
  const Index n = w_binary.rows();
  if (w_binary.cols() != n) throw ShapeError("network matrix must be square");
  if (names.size() != bilateral.size()) throw ShapeError("one name per bilateral covariate required");
  for (const auto& m : bilateral)
    if (m.rows() != n || m.cols() != n) throw ShapeError("bilateral covariates must be N x N");
  const Index p = static_cast<Index>(bilateral.size()) + 1;

  std::vector<std::pair<Index, Index>> cells;
  LinkLogitResult r;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      bool finite = true;
      for (const auto& m : bilateral) finite = finite && std::isfinite(m(i, j));
      if (finite)
        cells.emplace_back(i, j);
      else
        ++r.dropped_pairs;
    }
  MatrixXd x(static_cast<Index>(cells.size()), p);
  VectorXd y(x.rows());
  for (Index c = 0; c < x.rows(); ++c) {
    auto [i, j] = cells[static_cast<std::size_t>(c)];
    x(c, 0) = 1.0;
    for (Index l = 0; l + 1 < p; ++l) x(c, l + 1) = bilateral[static_cast<std::size_t>(l)](i, j);
    y(c) = w_binary(i, j) != 0.0 ? 1.0 : 0.0;
  }
  r.n_pairs = x.rows();
  r.n_links = static_cast<Index>(y.sum());
  if (r.n_links == 0) throw DomainError("network has no links");

  LogitFit fit = fit_logit(x, y, options);
  r.correction = options.correction;
  r.names = names;
  r.alpha_hat = fit.beta(0);
  r.pi_hat = fit.beta.tail(p - 1);
  r.ses = fit.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.p_values.resize(p);
  for (Index c = 0; c < p; ++c) r.p_values(c) = stats::two_sided_p(fit.beta(c) / r.ses(c));
  r.odds_ratios = r.pi_hat.unaryExpr([](double v) { return odds_ratio(v); });
  r.loglik = fit.loglik;
  r.iterations = fit.iterations;
  r.loglik_path = fit.path;
  return r;
}

MatrixXd log_flows(const MatrixXd& flows, std::optional<double> offset) {
  if ((flows.array() < 0.0).any()) throw DomainError("flows must be nonnegative");
  return flows.unaryExpr([&](double v) {
    if (offset) return std::log(v + *offset);
    return v > 0.0 ? std::log(v) : std::numeric_limits<double>::quiet_NaN();
  });
}

}  // namespace spdyn
