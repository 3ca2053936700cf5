#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "spdyn/dgp.hpp"
#include "spdyn/errors.hpp"
#include "spdyn/network.hpp"

using namespace spdyn;
using namespace testing;

namespace {

std::vector<std::string> blocks(Index n, Index groups) {
  std::vector<std::string> g;
  for (Index i = 0; i < n; ++i) g.push_back("g" + std::to_string(i % groups));
  return g;
}

}  // namespace

TEST_CASE("homophily arithmetic") {
  CHECK(std::fabs(relative_homophily_index(0.245, 0.1085) - 2.259) < 0.001);
  CHECK(std::fabs(homophily_excess(0.245, 0.1085) - 0.1365) < 0.001);
  CHECK_THROWS_AS(relative_homophily_index(0.2, 0.0), DomainError);
}

TEST_CASE("within-group network is maximally homophilous") {
  const Index n = 24;
  auto g = blocks(n, 4);
  MatrixXd w = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && g[i] == g[j]) w(i, j) = 1.0;
  auto r = homophily_test(w, g, 1000, 3);
  CHECK(r.h_hat == 1.0);
  CHECK(r.p_value <= 1.0 / 1000);
  CHECK(r.p_value_plus_one == doctest::Approx((r.p_value * 1000 + 1) / 1001.0));
  CHECK(r.rhi > 1.0);
  CHECK(r.count_same == 4 * 6 * 5);
  CHECK(r.count_total == r.count_same);
}

TEST_CASE("counting same-group links") {
  auto g = blocks(6, 1);
  MatrixXd full = MatrixXd::Ones(6, 6) - MatrixXd::Identity(6, 6);
  CHECK(count_same_links(full, g) == 30);
  CHECK(count_same_links(MatrixXd::Zero(6, 6), g) == 0);
}

TEST_CASE("degenerate inputs") {
  Rng rng(51);
  MatrixXd w = rand_weights(8, rng);
  CHECK_THROWS_AS(homophily_test(w, blocks(8, 1), 200), DegenerateGroupingError);
  CHECK_THROWS_AS(homophily_test(w, blocks(8, 2), 50), DomainError);
  CHECK_THROWS_AS(homophily_test(MatrixXd::Zero(8, 8), blocks(8, 2), 200), DomainError);
}

TEST_CASE("relabeling groups leaves the test unchanged") {
  Rng rng(52);
  MatrixXd w = rand_weights(20, rng, 0.2);
  auto g = blocks(20, 3);
  std::vector<std::string> renamed;
  for (const auto& s : g) renamed.push_back(s == "g0" ? "zeta" : s == "g1" ? "alpha" : "mid");
  auto a = homophily_test(w, g, 500, 9);
  auto b = homophily_test(w, renamed, 500, 9);
  CHECK(a.l_same == b.l_same);
  CHECK(a.p_value == b.p_value);
  CHECK(a.h_null_mean == b.h_null_mean);
}

TEST_CASE("binary and standardized shares agree under equal out-degree") {
  Rng rng(53);
  const Index n = 15;
  MatrixXd bin = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index d = 1; d <= 3; ++d) bin(i, (i + d * 4) % n) = 1.0;
  MatrixXd st = bin / 3.0;
  auto g = blocks(n, 4);
  auto r = homophily_test(st, g, 200, 1);
  CHECK(r.h_hat == doctest::Approx(static_cast<double>(r.count_same) / r.count_total).epsilon(1e-14));
}

TEST_CASE("deterministic for a fixed seed") {
  Rng rng(54);
  MatrixXd w = rand_weights(12, rng, 0.3);
  auto g = blocks(12, 3);
  auto a = homophily_test(w, g, 400, 77), b = homophily_test(w, g, 400, 77);
  CHECK(a.h_null_mean == b.h_null_mean);
  CHECK(a.p_value == b.p_value);
  auto c = homophily_test(w, g, 400, 78);
  CHECK(c.h_null_mean != a.h_null_mean);
}

TEST_CASE("p-values are roughly uniform under independence") {
  Rng rng(55);
  const int nets = 200;
  int reject = 0;
  double mean_p = 0.0;
  for (int s = 0; s < nets; ++s) {
    MatrixXd w = random_network(30, 0.1, rng);
    if (w.sum() == 0) continue;
    auto r = homophily_test(w, blocks(30, 5), 500, 1000 + s);
    reject += r.p_value <= 0.05;
    mean_p += r.p_value / nets;
  }
  CHECK(reject >= 0.02 * nets);
  CHECK(reject <= 0.09 * nets);
  CHECK(std::fabs(mean_p - 0.5) < 0.07);
}

TEST_CASE("odds ratio") {
  CHECK(std::fabs(odds_ratio(0.141) - 1.151) < 0.001);
  CHECK(odds_ratio(0.0) == 1.0);
}

TEST_CASE("logit matches a known small fit and climbs monotonically") {
  Rng rng(56);
  const Index n = 400;
  MatrixXd x(n, 2);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = rng.normal();
    y(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-(-1.0 + 0.8 * x(i, 1)))) ? 1.0 : 0.0;
  }
  for (auto c : {LogitCorrection::none, LogitCorrection::firth}) {
    auto fit = fit_logit(x, y, {c});
    for (std::size_t s = 1; s < fit.path.size(); ++s) CHECK(fit.path[s] >= fit.path[s - 1]);
    CHECK(std::fabs(fit.beta(1) - 0.8) < 0.35);
    VectorXd mu = (x * fit.beta).unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    if (c == LogitCorrection::none) CHECK(max_abs(x.transpose() * (y - mu)) < 1e-6);
  }
  // Firth shrinks towards zero relative to the MLE.
  auto mle = fit_logit(x, y, {LogitCorrection::none});
  auto firth = fit_logit(x, y, {LogitCorrection::firth});
  CHECK(std::fabs(firth.beta(1)) < std::fabs(mle.beta(1)));
}

TEST_CASE("separation") {
  MatrixXd x(20, 2);
  VectorXd y(20);
  for (Index i = 0; i < 20; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = static_cast<double>(i) - 9.5;
    y(i) = i >= 10 ? 1.0 : 0.0;
  }
  CHECK_THROWS_AS(fit_logit(x, y, {LogitCorrection::none}), SeparationError);
  auto f = fit_logit(x, y, {LogitCorrection::firth});
  CHECK(std::isfinite(f.beta(1)));
  CHECK(f.beta(1) > 0.0);
}

TEST_CASE("link logit stacks off-diagonal cells") {
  Rng rng(57);
  const Index n = 20;
  MatrixXd cov = randn(n, n, rng);
  MatrixXd w = random_network(n, 0.2, rng);
  auto r = link_logit(w, {cov}, {"flow"});
  CHECK(r.n_pairs == n * (n - 1));
  CHECK(r.n_links == static_cast<Index>(w.sum()));
  CHECK(r.odds_ratios(0) == doctest::Approx(std::exp(r.pi_hat(0))).epsilon(1e-15));
  CHECK(r.ses.size() == 2);

  MatrixXd flows = randu(n, n, rng);
  flows(0, 1) = 0.0;
  auto logged = log_flows(flows);
  CHECK(std::isnan(logged(0, 1)));
  auto dropped = link_logit(w, {logged}, {"flow"});
  CHECK(dropped.dropped_pairs == 1);
  CHECK(dropped.n_pairs == n * (n - 1) - 1);
  CHECK(std::isfinite(log_flows(flows, 1.0)(0, 1)));

  CHECK_THROWS_AS(link_logit(MatrixXd::Zero(n, n), {cov}, {"flow"}), DomainError);
}

TEST_CASE("independent covariate: coefficient within two SEs of zero") {
  Rng rng(58);
  const int reps = 200;
  int inside = 0;
  for (int rep = 0; rep < reps; ++rep) {
    MatrixXd cov = randn(40, 40, rng);
    MatrixXd w = random_network(40, 0.08, rng);
    auto r = link_logit(w, {cov}, {"c"}, {LogitCorrection::none});
    inside += std::fabs(r.pi_hat(0)) <= 2.0 * r.ses(1);
  }
  CHECK(inside >= 0.93 * reps);
}

TEST_CASE("rare-events correction reduces bias at 1% density") {
  Rng rng(59);
  const int reps = 200;
  const Index n = 50;
  double mae_mle = 0.0, mae_firth = 0.0, mae_kz = 0.0;
  int used = 0;
  for (int rep = 0; rep < reps; ++rep) {
    MatrixXd cov = randn(n, n, rng);
    MatrixXd w = MatrixXd::Zero(n, n);
    const double alpha = std::log(0.01 / 0.99) - 0.125;  // about 1% links at pi = 0.5
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j && rng.uniform() < 1.0 / (1.0 + std::exp(-(alpha + 0.5 * cov(i, j))))) w(i, j) = 1.0;
    if (w.sum() < 3) continue;
    try {
      auto a = link_logit(w, {cov}, {"c"}, {LogitCorrection::none});
      auto b = link_logit(w, {cov}, {"c"}, {LogitCorrection::firth});
      auto c = link_logit(w, {cov}, {"c"}, {LogitCorrection::king_zeng});
      mae_mle += std::fabs(a.pi_hat(0) - 0.5);
      mae_firth += std::fabs(b.pi_hat(0) - 0.5);
      mae_kz += std::fabs(c.pi_hat(0) - 0.5);
      ++used;
    } catch (const SeparationError&) {
    }
  }
  REQUIRE(used > 150);
  MESSAGE("mae mle " << mae_mle / used << " firth " << mae_firth / used << " king-zeng " << mae_kz / used);
  CHECK(mae_firth < mae_mle);
  CHECK(mae_kz < mae_mle);
}
