#include "spdyn/dgp.hpp"

#include <cmath>
#include <cstdio>

#include "spdyn/errors.hpp"
#include "spdyn/rng.hpp"

namespace spdyn {

void DgpSpec::validate() const {
  if (n < 2) throw ConfigError("n must be at least 2");
  if (t < 4) throw ConfigError("t must be at least 4");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (burn_in < 50) throw ConfigError("burn_in must be at least 50");
  if (!beta_mean.empty() && static_cast<Index>(beta_mean.size()) != k)
    throw ConfigError("beta_mean needs k entries");
  if (r_f < 0 || r_g < 0) throw ConfigError("factor counts must be nonnegative");
  if (!(std::fabs(factor_ar) < 1.0)) throw ConfigError("factor_ar must lie in (-1, 1)");
  if (!(std::fabs(loading_correlation) <= 1.0)) throw ConfigError("loading_correlation must lie in [-1, 1]");
  if (w_true) {
    if (w_true->time_varying()) throw ConfigError("the simulator takes a static network");
    if (w_true->n() != n) throw ConfigError("network size differs from n");
    w_true->validate();
    const double psi_max = std::fabs(psi.mean) + std::fabs(psi.spread);
    if (w_true->row_standardized && psi_max >= 1.0) throw StabilityError("sup |psi_i| must be below one");
  }
}

std::vector<std::string> unit_labels(Index n, const std::string& prefix) {
  std::vector<std::string> ids;
  const int width = n > 1 ? static_cast<int>(std::to_string(n - 1).size()) : 1;
  for (Index i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*lld", width, static_cast<long long>(i));
    ids.push_back(prefix + buf);
  }
  return ids;
}

SimulatedPanel simulate(const DgpSpec& spec) {
  spec.validate();
  const Index n = spec.n, t = spec.t, k = spec.k, rf = spec.r_f, rg = spec.r_g;
  auto ids = unit_labels(n);
  Rng prng(spec.seed, 0);  // parameters
  Rng srng(spec.seed, 1);  // shocks

  Truth tr;
  tr.w = spec.w_true ? *spec.w_true : WeightScheme::fixed_matrix(MatrixXd::Zero(n, n), ids);
  tr.w.unit_ids = ids;
  const MatrixXd& w = tr.w.mats.front();

  auto uniform = [&](const UniformDraw& d) { return d.mean + d.spread * (2.0 * prng.uniform() - 1.0); };
  tr.delta.resize(n);
  tr.psi.resize(n);
  tr.beta.resize(n, k);
  tr.alpha.resize(n);
  tr.x_noise_scale.resize(n);
  tr.gamma.assign(static_cast<std::size_t>(n), MatrixXd(rf, k));
  tr.lambda.resize(n, rf);
  tr.phi.resize(n, rg);
  const double rho_l = spec.loading_correlation;
  for (Index i = 0; i < n; ++i) {
    tr.delta(i) = uniform(spec.delta);
    tr.psi(i) = spec.w_true ? uniform(spec.psi) : 0.0;
    double eta0 = 0.0;
    for (Index l = 0; l < k; ++l) {
      const double eta = prng.normal();
      if (l == 0) eta0 = eta;
      const double mean = spec.beta_mean.empty() ? 1.0 : spec.beta_mean[static_cast<std::size_t>(l)];
      tr.beta(i, l) = mean + spec.beta_sd * eta;
    }
    tr.x_noise_scale(i) = std::exp(spec.slope_variance_link * eta0);
    for (Index m = 0; m < rf; ++m) {
      double z_first = 0.0;
      for (Index l = 0; l < k; ++l) {
        const double z = prng.normal();
        if (l == 0) z_first = z;
        tr.gamma[static_cast<std::size_t>(i)](m, l) = spec.gamma_mean + spec.gamma_sd * z;
      }
      const double e = prng.normal();
      tr.lambda(i, m) = spec.lambda_mean + spec.lambda_sd * (rho_l * z_first + std::sqrt(1.0 - rho_l * rho_l) * e);
    }
    for (Index m = 0; m < rg; ++m) tr.phi(i, m) = spec.phi_mean + spec.phi_sd * prng.normal();
    tr.alpha(i) = spec.alpha_sd * prng.normal();
  }
  tr.theta.resize(n, 2 + k);
  tr.theta.col(0) = tr.delta;
  tr.theta.col(1) = tr.psi;
  tr.theta.rightCols(k) = tr.beta;
  tr.theta_mean = tr.theta.colwise().mean().transpose();
  tr.theta_mean(0) = spec.delta.mean;
  tr.theta_mean(1) = spec.w_true ? spec.psi.mean : 0.0;
  for (Index l = 0; l < k; ++l)
    tr.theta_mean(2 + l) = spec.beta_mean.empty() ? 1.0 : spec.beta_mean[static_cast<std::size_t>(l)];

  MatrixXd s = MatrixXd::Identity(n, n) - tr.psi.asDiagonal() * w;
  Eigen::PartialPivLU<MatrixXd> lu(s);
  if (!(lu.rcond() > 1e-12)) throw SingularError("I - diag(psi) W is singular");

  const Index total = spec.burn_in + t;
  const double innov = std::sqrt(1.0 - spec.factor_ar * spec.factor_ar);
  VectorXd f = VectorXd::Zero(rf), g = VectorXd::Zero(rg);
  for (Index m = 0; m < rf; ++m) f(m) = srng.normal();
  for (Index m = 0; m < rg; ++m) g(m) = srng.normal();

  PanelDataset panel;
  panel.unit_ids = ids;
  panel.outcome_name = "y";
  for (Index l = 0; l < k; ++l) panel.covariate_names.push_back("x" + std::to_string(l + 1));
  for (Index s_ = 0; s_ < t; ++s_) panel.time_ids.push_back(s_ + 1);
  panel.y.resize(n, t);
  panel.x.assign(static_cast<std::size_t>(k), MatrixXd(n, t));
  tr.f.resize(t, rf);
  tr.g.resize(t, rg);
  tr.u.resize(n, t);
  tr.eps.resize(n, t);

  VectorXd y = VectorXd::Zero(n);
  MatrixXd x(n, k);
  VectorXd rhs(n), eps(n), u(n);
  for (Index step = 0; step < total; ++step) {
    if (step > 0) {
      for (Index m = 0; m < rf; ++m) f(m) = spec.factor_ar * f(m) + innov * srng.normal();
      for (Index m = 0; m < rg; ++m) g(m) = spec.factor_ar * g(m) + innov * srng.normal();
    }
    for (Index i = 0; i < n; ++i) {
      const auto& gam = tr.gamma[static_cast<std::size_t>(i)];
      for (Index l = 0; l < k; ++l) {
        double common = 0.0;
        for (Index m = 0; m < rf; ++m) common += gam(m, l) * f(m);
        x(i, l) = common + spec.x_noise_sd * tr.x_noise_scale(i) * srng.normal();
      }
      eps(i) = spec.noise_sd * srng.normal();
      double fac = 0.0;
      for (Index m = 0; m < rf; ++m) fac += tr.lambda(i, m) * f(m);
      for (Index m = 0; m < rg; ++m) fac += tr.phi(i, m) * g(m);
      u(i) = fac + eps(i);
      rhs(i) = tr.alpha(i) + tr.delta(i) * y(i) + x.row(i).dot(tr.beta.row(i)) + u(i);
    }
    VectorXd dy = lu.solve(rhs);
    if (!dy.allFinite()) throw NumericError("simulated growth is not finite");
    const Index pos = step - spec.burn_in;
    if (pos == 0) tr.y_before = y;
    y += dy;
    if (pos >= 0) {
      panel.y.col(pos) = y;
      for (Index l = 0; l < k; ++l) panel.x[static_cast<std::size_t>(l)].col(pos) = x.col(l);
      tr.f.row(pos) = f.transpose();
      tr.g.row(pos) = g.transpose();
      tr.u.col(pos) = u;
      tr.eps.col(pos) = eps;
    }
  }
  if (!panel.y.allFinite()) throw StabilityError("simulated levels diverge");
  return {std::move(panel), std::move(tr)};
}

EffectsTable brute_force_effects(const WeightScheme& w, double psi, const VectorXd& beta,
                                 const std::vector<std::string>& names) {
  if (w.time_varying()) throw NotAvailableError("oracle effects need static weights");
  if (w.row_standardized && std::fabs(psi) >= 1.0) throw StabilityError("|psi| >= 1 with row-standardized weights");
  const Index n = w.n();
  MatrixXd s = MatrixXd::Identity(n, n) - psi * w.mats.front();
  Eigen::HouseholderQR<MatrixXd> qr(s);
  double diag = 0.0;
  for (Index j = 0; j < n; ++j) diag += qr.solve(VectorXd::Unit(n, j))(j);
  const double row_sum = qr.solve(VectorXd::Ones(n)).sum();
  const double md = diag / static_cast<double>(n), mr = row_sum / static_cast<double>(n);
  EffectsTable table;
  table.mean_diag = md;
  table.mean_row_sum = mr;
  for (Index l = 0; l < beta.size(); ++l) {
    EffectRow r;
    r.name = names.at(static_cast<std::size_t>(l));
    r.direct = beta(l) * md;
    r.total = beta(l) * mr;
    r.indirect = r.total - r.direct;
    table.rows.push_back(r);
  }
  return table;
}

MatrixXd random_sparse_network(Index n, Index max_links, Rng& rng) {
  if (n < 2 || max_links < 1) throw DomainError("need n >= 2 and max_links >= 1");
  MatrixXd w = MatrixXd::Zero(n, n);
  std::vector<Index> others;
  for (Index i = 0; i < n; ++i) {
    others.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    rng.shuffle(std::span<Index>(others));
    const Index links = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min(max_links, n - 1))));
    for (Index c = 0; c < links; ++c) w(i, others[static_cast<std::size_t>(c)]) = 1.0;
  }
  return w;
}

MatrixXd random_network(Index n, double p, Rng& rng) {
  MatrixXd w = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && rng.uniform() < p) w(i, j) = 1.0;
  return w;
}

}  // namespace spdyn
