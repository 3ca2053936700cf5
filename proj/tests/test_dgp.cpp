#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "spdyn/dgp.hpp"
#include "spdyn/errors.hpp"

using namespace spdyn;
using namespace testing;

namespace {

double correlation(const VectorXd& a, const VectorXd& b) {
  VectorXd da = a.array() - a.mean(), db = b.array() - b.mean();
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

WeightScheme standardized(const MatrixXd& m) {
  return row_standardize(WeightScheme::fixed_matrix(m, unit_labels(m.rows())));
}

}  // namespace

TEST_CASE("null system does not move") {
  DgpSpec spec;
  spec.n = 5;
  spec.t = 20;
  spec.delta = {0, 0};
  spec.beta_mean = {0, 0};
  spec.r_f = 0;
  spec.noise_sd = 0;
  auto sim = simulate(spec);
  MatrixXd dy = sim.panel.y.rightCols(19) - sim.panel.y.leftCols(19);
  CHECK(max_abs(dy) == 0.0);
}

TEST_CASE("two-unit system follows the closed-form inverse") {
  MatrixXd w(2, 2);
  w << 0, 1, 1, 0;
  DgpSpec spec;
  spec.n = 2;
  spec.t = 30;
  spec.psi = {0.5, 0};
  spec.w_true = WeightScheme::fixed_matrix(w, unit_labels(2));
  spec.seed = 3;
  auto sim = simulate(spec);
  const auto& tr = sim.truth;
  MatrixXd s_inv(2, 2);
  s_inv << 1, 0.5, 0.5, 1;
  s_inv /= 0.75;
  for (Index t = 0; t < spec.t; ++t) {
    VectorXd prev = t == 0 ? tr.y_before : VectorXd(sim.panel.y.col(t - 1));
    VectorXd rhs(2);
    for (Index i = 0; i < 2; ++i) {
      rhs(i) = tr.delta(i) * prev(i) + tr.u(i, t);
      for (Index l = 0; l < spec.k; ++l) rhs(i) += tr.beta(i, l) * sim.panel.x[l](i, t);
    }
    VectorXd dy = sim.panel.y.col(t) - prev;
    CHECK(max_abs(dy - s_inv * rhs) < 1e-10);
  }
}

TEST_CASE("structural equation holds residually") {
  Rng rng(61);
  DgpSpec spec;
  spec.n = 12;
  spec.t = 40;
  spec.k = 3;
  spec.r_g = 1;
  spec.alpha_sd = 0.3;
  spec.delta = {-0.2, 0.1};
  spec.psi = {0.3, 0.2};
  spec.beta_sd = 0.5;
  spec.w_true = standardized(rand_weights(12, rng, 0.3));
  spec.seed = 4;
  auto sim = simulate(spec);
  const auto& tr = sim.truth;
  const MatrixXd& w = tr.w.mats[0];
  for (Index t = 0; t < spec.t; ++t) {
    VectorXd prev = t == 0 ? tr.y_before : VectorXd(sim.panel.y.col(t - 1));
    VectorXd dy = sim.panel.y.col(t) - prev;
    VectorXd lag = w * dy;
    for (Index i = 0; i < spec.n; ++i) {
      double fit = tr.alpha(i) + tr.delta(i) * prev(i) + tr.psi(i) * lag(i);
      for (Index l = 0; l < spec.k; ++l) fit += tr.beta(i, l) * sim.panel.x[l](i, t);
      double common = tr.lambda.row(i).dot(tr.f.row(t)) + tr.phi.row(i).dot(tr.g.row(t));
      CHECK(std::fabs(dy(i) - fit - tr.u(i, t)) < 1e-10);
      CHECK(std::fabs(tr.u(i, t) - common - tr.eps(i, t)) < 1e-12);
    }
  }
  // Covariates carry unit-variance noise around Gamma' f.
  double ss = 0.0;
  for (Index l = 0; l < spec.k; ++l)
    for (Index i = 0; i < spec.n; ++i)
      for (Index t = 0; t < spec.t; ++t) ss += std::pow(sim.panel.x[l](i, t) - tr.gamma[i].col(l).dot(tr.f.row(t).transpose()), 2);
  CHECK(std::fabs(ss / (spec.k * spec.n * spec.t) - 1.0) < 0.15);
  CHECK(tr.psi.cwiseAbs().maxCoeff() <= 0.5 + 1e-15);
  CHECK(tr.delta.maxCoeff() <= -0.1 + 1e-15);
}

TEST_CASE("same seed, same panel") {
  DgpSpec spec;
  spec.seed = 99;
  auto a = simulate(spec), b = simulate(spec);
  CHECK(a.panel.y == b.panel.y);
  CHECK(a.panel.x[1] == b.panel.x[1]);
  spec.seed = 100;
  CHECK(simulate(spec).panel.y != a.panel.y);
}

TEST_CASE("loading correlation knob") {
  DgpSpec spec;
  spec.n = 500;
  spec.t = 10;
  spec.burn_in = 50;
  spec.loading_correlation = 0.6;
  spec.seed = 8;
  auto sim = simulate(spec);
  VectorXd g0(spec.n);
  for (Index i = 0; i < spec.n; ++i) g0(i) = sim.truth.gamma[i](0, 0);
  CHECK(std::fabs(correlation(g0, sim.truth.lambda.col(0)) - 0.6) < 0.05);
}

TEST_CASE("slope and regressor variance link") {
  DgpSpec spec;
  spec.n = 400;
  spec.t = 10;
  spec.burn_in = 50;
  spec.beta_sd = 0.5;
  spec.slope_variance_link = 0.5;
  auto sim = simulate(spec);
  VectorXd log_scale = sim.truth.x_noise_scale.array().log();
  CHECK(correlation(sim.truth.beta.col(0), log_scale) > 0.99);
}

TEST_CASE("simulation settings are validated") {
  DgpSpec spec;
  spec.burn_in = 10;
  CHECK_THROWS_AS(simulate(spec), ConfigError);
  spec.burn_in = 100;
  spec.w_true = standardized(MatrixXd::Ones(30, 30) - MatrixXd::Identity(30, 30));
  spec.psi = {0.8, 0.3};
  CHECK_THROWS_AS(simulate(spec), StabilityError);
  spec.psi = {0.3, 0};
  spec.beta_mean = {1.0};
  CHECK_THROWS_AS(simulate(spec), ConfigError);
}

TEST_CASE("brute-force effects") {
  Rng rng(62);
  auto w = standardized(rand_weights(6, rng));
  VectorXd beta(2);
  beta << 0.4, -1.0;
  auto zero = brute_force_effects(w, 0.0, beta, {"a", "b"});
  CHECK(std::fabs(zero.rows[0].direct - 0.4) < 1e-15);
  CHECK(std::fabs(zero.rows[1].indirect) < 1e-15);

  MatrixXd blk = MatrixXd::Zero(4, 4);
  blk(0, 1) = blk(1, 0) = blk(2, 3) = blk(3, 2) = 1.0;
  auto bw = WeightScheme::fixed_matrix(blk, unit_labels(4));
  auto t = brute_force_effects(bw, 0.5, beta, {"a", "b"});
  // Each block is the two-unit system: mean diagonal 1/0.75, mean row sum 1/0.5.
  CHECK(std::fabs(t.mean_diag - 1.0 / 0.75) < 1e-12);
  CHECK(std::fabs(t.mean_row_sum - 2.0) < 1e-12);
  MatrixXd s = MatrixXd::Identity(4, 4) - 0.5 * blk;
  VectorXd col = s.householderQr().solve(VectorXd::Unit(4, 0));
  CHECK(max_abs(col.tail(2)) < 1e-15);
}

TEST_CASE("network generators") {
  Rng rng(63);
  MatrixXd w = random_sparse_network(30, 3, rng);
  for (Index i = 0; i < 30; ++i) {
    CHECK(w(i, i) == 0.0);
    const double links = w.row(i).sum();
    CHECK(links >= 1.0);
    CHECK(links <= 3.0);
  }
  MatrixXd r = random_network(40, 0.25, rng);
  CHECK(r.diagonal().isZero());
  CHECK(std::fabs(r.sum() / (40.0 * 39.0) - 0.25) < 0.03);
  CHECK(unit_labels(12)[3] == "u03");
}
