#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "spdyn/dgp.hpp"
#include "spdyn/effects.hpp"
#include "spdyn/errors.hpp"

using namespace spdyn;
using namespace testing;

namespace {

WeightScheme scheme(const MatrixXd& m, bool standardize = false) {
  auto ids = unit_labels(m.rows());
  auto w = WeightScheme::fixed_matrix(m, ids);
  return standardize ? row_standardize(w) : w;
}

MatrixXd swap2() {
  MatrixXd w(2, 2);
  w << 0, 1, 1, 0;
  return w;
}

}  // namespace

TEST_CASE("zero psi gives the identity multiplier") {
  Rng rng(41);
  auto w = scheme(rand_weights(6, rng), true);
  auto m = multiplier(w, 0.0);
  CHECK(max_abs(m.s_inv[0] - MatrixXd::Identity(6, 6)) == 0.0);
  VectorXd beta(2);
  beta << 0.7, -1.3;
  auto t = average_effects(m, beta, {"a", "b"});
  for (Index l = 0; l < 2; ++l) {
    CHECK(t.rows[l].direct == beta(l));
    CHECK(t.rows[l].indirect == 0.0);
    CHECK(t.rows[l].total == beta(l));
  }
  CHECK(pairwise_effect(m, 0.7, 2, 2) == 0.7);
  CHECK(pairwise_effect(m, 0.7, 2, 3) == 0.0);
  auto in = spill_in(m, 0.7, 4);
  for (Index j = 0; j < 6; ++j)
    if (j != 4) CHECK(in.total(j) == 0.0);
}

TEST_CASE("two-unit closed form") {
  auto m = multiplier(scheme(swap2()), 0.5);
  MatrixXd ref(2, 2);
  ref << 1, 0.5, 0.5, 1;
  ref /= 0.75;
  CHECK(max_abs(m.s_inv[0] - ref) < 1e-14);
  CHECK(pairwise_effect(m, 0.05, 0, 1) == doctest::Approx(0.05 * 0.5 / 0.75).epsilon(1e-14));
  CHECK(std::fabs(pairwise_effect(m, 0.05, 1, 0) - 0.0333333333333333) < 1e-12);
  CHECK_THROWS_AS(pairwise_effect(m, 0.05, 0, 2), IndexError);
  CHECK_THROWS_AS(pairwise_effect(m, 0.05, -1, 0), IndexError);
}

TEST_CASE("stability boundary") {
  auto w = scheme(swap2(), true);
  CHECK_THROWS_AS(multiplier(w, 1.0), StabilityError);
  CHECK_THROWS_AS(multiplier(w, -1.2), StabilityError);
  // Unstandardized weights: spectral radius rule.
  MatrixXd big = 3.0 * swap2();
  CHECK_THROWS_AS(multiplier(scheme(big), 0.5), StabilityError);
  CHECK_NOTHROW(multiplier(scheme(big), 0.3));
}

TEST_CASE("multiplier inverts S") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    auto w = scheme(rand_weights(8, rng), true);
    const double psi = 1.8 * rng.uniform() - 0.9;
    auto m = multiplier(w, psi);
    MatrixXd s = MatrixXd::Identity(8, 8) - psi * w.mats[0];
    CHECK(max_abs(s * m.s_inv[0] - MatrixXd::Identity(8, 8)) < 1e-9);
  }
}

TEST_CASE("decomposition identities") {
  Rng rng(43);
  MatrixXd raw = rand_weights(50, rng, 0.1);
  for (Index i = 0; i < 50; ++i)
    if (raw.row(i).sum() == 0) raw(i, (i + 1) % 50) = 1.0;
  auto w = scheme(raw, true);
  const double psi = 0.4;
  auto m = multiplier(w, psi);
  VectorXd beta(4);
  beta << 0.3, -2.0, 1e-3, 7.5;
  auto t = average_effects(m, beta, {"a", "b", "c", "d"}, -0.05);
  REQUIRE(t.rows.size() == 5);
  CHECK(t.rows[0].name == "lagged_level");
  const double ratio = t.rows[1].indirect / t.rows[1].total;
  for (const auto& r : t.rows) {
    CHECK(r.total == r.direct + r.indirect);
    // Equal up to the rounding of two products and one quotient.
    CHECK(std::fabs(r.indirect / r.total - ratio) <= 4.0 * std::numeric_limits<double>::epsilon());
  }
  CHECK(std::fabs(t.mean_row_sum - 1.0 / (1.0 - psi)) < 1e-9);
  VectorXd rows = m.s_inv[0].rowwise().sum();
  CHECK(max_abs(rows.array() - 1.0 / (1.0 - psi)) < 1e-9);
  CHECK(std::fabs(t.rows[2].total - beta(1) / (1.0 - psi)) < 1e-9);
}

TEST_CASE("average effects agree with the linear-solve oracle") {
  Rng rng(44);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 2 + static_cast<Index>(rng.below(30));
    auto w = scheme(rand_weights(n, rng, rng.uniform() * 0.8 + 0.1), rep % 2 == 0);
    const double psi = w.row_standardized ? 1.6 * rng.uniform() - 0.8 : 0.05 * rng.uniform();
    VectorXd beta = randn(3, 1, rng);
    auto a = average_effects(multiplier(w, psi), beta, {"a", "b", "c"});
    auto b = brute_force_effects(w, psi, beta, {"a", "b", "c"});
    for (int l = 0; l < 3; ++l) {
      CHECK(std::fabs(a.rows[l].direct - b.rows[l].direct) < 1e-9);
      CHECK(std::fabs(a.rows[l].indirect - b.rows[l].indirect) < 1e-9);
      CHECK(std::fabs(a.rows[l].total - b.rows[l].total) < 1e-9);
    }
  }
}

TEST_CASE("Neumann series bound") {
  Rng rng(45);
  for (int rep = 0; rep < 20; ++rep) {
    auto w = scheme(rand_weights(10, rng), true);
    const double psi = 0.9 * rng.uniform();
    auto m = multiplier(w, psi);
    const double a = std::fabs(psi) * w.mats[0].cwiseAbs().rowwise().sum().maxCoeff();
    MatrixXd sum = MatrixXd::Identity(10, 10), power = MatrixXd::Identity(10, 10);
    for (int p = 1; p <= 12; ++p) {
      power = psi * w.mats[0] * power;
      sum += power;
      const double err = (m.s_inv[0] - sum).cwiseAbs().rowwise().sum().maxCoeff();
      CHECK(err <= std::pow(a, p + 1) / (1.0 - a) + 1e-12);
    }
  }
}

TEST_CASE("spill-out and spill-in") {
  Rng rng(46);
  auto w = scheme(rand_weights(7, rng), true);
  auto m = multiplier(w, 0.6);
  std::vector<Index> all{0, 1, 2, 3, 4, 5, 6};
  auto out = spill_out(m, 2.0, all);
  auto tab = average_effects(m, VectorXd::Constant(1, 2.0), {"x"});
  CHECK(std::fabs(out.total.mean() - tab.rows[0].total) < 1e-12);
  CHECK(std::fabs(out.own.mean() - tab.rows[0].direct) < 1e-12);
  CHECK(max_abs(out.total - out.own - out.spill) == 0.0);

  MatrixXd s = MatrixXd::Identity(7, 7) - 0.6 * w.mats[0];
  VectorXd col = s.householderQr().solve(VectorXd::Unit(7, 3));
  auto single = spill_out(m, 2.0, {3});
  CHECK(max_abs(single.total - 2.0 * col) < 1e-12);
  CHECK(single.own(3) == doctest::Approx(2.0 * col(3)));
  CHECK(single.spill(3) == 0.0);

  auto in = spill_in(m, 2.0, 5);
  CHECK(max_abs(in.total - 2.0 * m.s_inv[0].row(5).transpose()) < 1e-15);
  VectorXd row = s.transpose().householderQr().solve(VectorXd::Unit(7, 5));
  CHECK(max_abs(in.total - 2.0 * row) < 1e-12);

  CHECK_THROWS_AS(spill_out(m, 1.0, {}), DomainError);
  CHECK_THROWS_AS(spill_in(m, 1.0, 9), IndexError);
}

TEST_CASE("symmetric weights make spill-in equal spill-out") {
  Rng rng(47);
  MatrixXd a = rand_weights(6, rng);
  MatrixXd sym = a + a.transpose();
  auto m = multiplier(scheme(sym), 0.05);
  auto in = spill_in(m, 1.0, 2);
  auto out = spill_out(m, 1.0, {2});
  CHECK(max_abs(in.total - out.total) < 1e-12);
}

TEST_CASE("block-diagonal weights do not spill across blocks") {
  MatrixXd w = MatrixXd::Zero(6, 6);
  w.topLeftCorner(3, 3) = MatrixXd::Ones(3, 3) - MatrixXd::Identity(3, 3);
  w.bottomRightCorner(3, 3) = MatrixXd::Ones(3, 3) - MatrixXd::Identity(3, 3);
  auto m = multiplier(scheme(w, true), 0.7);
  auto out = spill_out(m, 1.0, {0, 1, 2});
  CHECK(max_abs(out.total.tail(3)) == 0.0);
  CHECK(out.total.head(3).minCoeff() > 0.0);
  CHECK(group_effect(m, 1.0, {0, 1, 2}, {3, 4, 5}) == 0.0);
}

TEST_CASE("time-varying multipliers average periods and suppress errors") {
  Rng rng(48);
  std::vector<MatrixXd> ws;
  for (int t = 0; t < 4; ++t) ws.push_back(rand_weights(5, rng));
  auto w = row_standardize(WeightScheme::per_period(ws, unit_labels(5)));
  auto m = multiplier(w, 0.3);
  REQUIRE(m.periods() == 4);
  CHECK(m.time_varying);
  double md = 0;
  for (int t = 0; t < 4; ++t) md += multiplier(WeightScheme::fixed_matrix(w.mats[t], w.unit_ids), 0.3).s_inv[0].trace() / 5.0 / 4.0;
  auto tab = average_effects(m, VectorXd::Constant(1, 1.0), {"x"});
  CHECK(tab.time_varying);
  CHECK(std::fabs(tab.rows[0].direct - md) < 1e-12);

  VectorXd theta(3);
  theta << -0.1, 0.3, 1.0;
  auto full = compute_effects(w, theta, MatrixXd::Identity(3, 3) * 0.01, {"x"});
  CHECK_FALSE(full.rows[1].se_total.has_value());
  CHECK_THROWS_AS(effect_standard_errors(full, theta, MatrixXd::Identity(3, 3), w), NotAvailableError);
}

TEST_CASE("standard errors: zero covariance and delta versus simulation") {
  Rng rng(49);
  auto w = scheme(rand_weights(20, rng, 0.3), true);
  VectorXd theta(4);
  theta << -0.1, 0.35, 0.8, -0.4;
  auto zero = compute_effects(w, theta, MatrixXd::Zero(4, 4), {"a", "b"});
  for (const auto& r : zero.rows) {
    CHECK(*r.se_direct == 0.0);
    CHECK(*r.se_total == 0.0);
  }

  MatrixXd a = randn(4, 4, rng);
  MatrixXd vcov = 1e-3 * (a * a.transpose() + MatrixXd::Identity(4, 4));
  auto delta = compute_effects(w, theta, vcov, {"a", "b"}, {SeMethod::delta});
  auto sim = compute_effects(w, theta, vcov, {"a", "b"}, {SeMethod::sim, 5000, 7});
  for (std::size_t r = 0; r < delta.rows.size(); ++r) {
    CHECK(std::fabs(*sim.rows[r].se_total / *delta.rows[r].se_total - 1.0) < 0.10);
    CHECK(std::fabs(*sim.rows[r].se_direct / *delta.rows[r].se_direct - 1.0) < 0.10);
    CHECK(std::fabs(*sim.rows[r].se_indirect / *delta.rows[r].se_indirect - 1.0) < 0.10);
  }
  auto again = compute_effects(w, theta, vcov, {"a", "b"}, {SeMethod::sim, 5000, 7});
  CHECK(*again.rows[1].se_total == *sim.rows[1].se_total);
}

TEST_CASE("unit-specific psi") {
  Rng rng(50);
  auto w = scheme(rand_weights(5, rng), true);
  VectorXd psi(5);
  psi << 0.1, 0.2, 0.3, 0.4, 0.5;
  auto m = multiplier(w, psi);
  MatrixXd s = MatrixXd::Identity(5, 5) - psi.asDiagonal() * w.mats[0];
  CHECK(max_abs(s * m.s_inv[0] - MatrixXd::Identity(5, 5)) < 1e-12);
  CHECK(m.psi_units.has_value());
  VectorXd bad = psi;
  bad(2) = 1.0;
  CHECK_THROWS_AS(multiplier(w, bad), StabilityError);
}
