#include <doctest.h>

#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "spdyn/csv.hpp"
#include "spdyn/errors.hpp"
#include "spdyn/mgiv.hpp"

using namespace spdyn;
using namespace testing;

namespace {

UnitEstimate unit(const VectorXd& theta, bool isolated = false) {
  UnitEstimate u;
  u.theta = theta;
  if (isolated) {
    u.excluded_spatial = true;
    u.theta(kPsiPos) = std::numeric_limits<double>::quiet_NaN();
  }
  return u;
}

std::vector<UnitEstimate> random_units(Index n, Index p, Rng& rng, double sd = 1.0) {
  std::vector<UnitEstimate> out;
  for (Index i = 0; i < n; ++i) out.push_back(unit(sd * randn(p, 1, rng)));
  return out;
}

}  // namespace

TEST_CASE("identical units give zero dispersion") {
  VectorXd th(4);
  th << -0.05, 0.35, 1.0, 2.0;
  std::vector<UnitEstimate> units(7, unit(th));
  auto mg = mean_group(units);
  CHECK(max_abs(mg.theta_bar - th) < 1e-15);
  CHECK(max_abs(mg.vcov) == 0.0);
  CHECK(max_abs(mg.se()) == 0.0);
}

TEST_CASE("covariance equals the sample covariance over N") {
  Rng rng(31);
  auto units = random_units(12, 4, rng);
  auto mg = mean_group(units);
  MatrixXd t(12, 4);
  for (Index i = 0; i < 12; ++i) t.row(i) = units[i].theta.transpose();
  VectorXd mean = t.colwise().mean().transpose();
  MatrixXd d = t.rowwise() - mean.transpose();
  MatrixXd ref = d.transpose() * d / 11.0 / 12.0;
  CHECK(max_abs(mg.theta_bar - mean) < 1e-12);
  CHECK(max_abs(mg.vcov - ref) < 1e-12);
  CHECK(max_abs(mg.vcov - mg.vcov.transpose()) == 0.0);
}

TEST_CASE("isolated unit is skipped for psi only") {
  Rng rng(32);
  auto units = random_units(10, 4, rng);
  units[3] = unit(units[3].theta, true);
  auto mg = mean_group(units);
  CHECK(mg.n_used[kPsiPos] == 9);
  CHECK(mg.n_used[kDeltaPos] == 10);
  CHECK(mg.n_used[kBetaPos] == 10);
  double psi = 0, delta = 0;
  for (Index i = 0; i < 10; ++i) {
    delta += units[i].theta(kDeltaPos) / 10.0;
    if (i != 3) psi += units[i].theta(kPsiPos) / 9.0;
  }
  CHECK(mg.theta_bar(kPsiPos) == doctest::Approx(psi).epsilon(1e-14));
  CHECK(mg.theta_bar(kDeltaPos) == doctest::Approx(delta).epsilon(1e-14));
  CHECK(mg.vcov.allFinite());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(mg.vcov);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-15);
  // The psi variance uses its own subsample.
  double v = 0;
  for (Index i = 0; i < 10; ++i)
    if (i != 3) v += std::pow(units[i].theta(kPsiPos) - psi, 2);
  CHECK(mg.vcov(kPsiPos, kPsiPos) == doctest::Approx(v / 8.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("too few contributors") {
  Rng rng(33);
  auto units = random_units(3, 3, rng);
  units[0] = unit(units[0].theta, true);
  units[1] = unit(units[1].theta, true);
  CHECK_THROWS_AS(mean_group(units), InsufficientUnitsError);
  CHECK_THROWS_AS(mean_group({}), InsufficientUnitsError);
}

TEST_CASE("permutation invariance") {
  Rng rng(34);
  auto units = random_units(9, 3, rng);
  auto a = mean_group(units);
  std::reverse(units.begin(), units.end());
  auto b = mean_group(units);
  // Reordering changes the summation order only.
  CHECK(max_abs(a.theta_bar - b.theta_bar) < 1e-15);
  CHECK(max_abs(a.vcov - b.vcov) < 1e-15);
}

TEST_CASE("coverage of the mean with dispersed unit estimates") {
  Rng rng(35);
  VectorXd truth(4);
  truth << -0.05, 0.35, 0.5, -0.2;
  const int reps = 500;
  const int units_per_rep = 400;
  VectorXd covered = VectorXd::Zero(4);
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<UnitEstimate> units;
    for (int i = 0; i < units_per_rep; ++i) units.push_back(unit(truth + 0.2 * randn(4, 1, rng)));
    auto mg = mean_group(units);
    for (Index p = 0; p < 4; ++p) covered(p) += std::fabs(mg.theta_bar(p) - truth(p)) <= 2.0 * mg.se()(p);
  }
  // Two standard errors cover 95.45% of a normal; allow three binomial SDs.
  const double nominal = 0.9545, sd = std::sqrt(nominal * (1.0 - nominal) / reps);
  for (Index p = 0; p < 4; ++p) CHECK(std::fabs(covered(p) / reps - nominal) <= 3.0 * sd);
}

TEST_CASE("trimming") {
  Rng rng(36);
  auto units = random_units(20, 3, rng);
  auto base = mean_group(units);
  auto t0 = trimmed_mean_group(units, 0.0);
  CHECK(base.theta_bar == t0.theta_bar);
  CHECK(base.vcov == t0.vcov);

  auto with_outlier = units;
  with_outlier[5].theta(1) = 1e6;
  auto a = trimmed_mean_group(with_outlier, 0.1);
  with_outlier[5].theta(1) = 1e9;
  auto b = trimmed_mean_group(with_outlier, 0.1);
  CHECK(a.theta_bar(1) == b.theta_bar(1));
  CHECK(a.n_used[1] == 16);

  CHECK_THROWS_AS(trimmed_mean_group(units, 0.5), DomainError);
  CHECK_THROWS_AS(trimmed_mean_group(units, -0.1), DomainError);

  // Symmetric draws: trimmed and untrimmed means agree within sampling error.
  auto big = random_units(400, 2, rng);
  auto full = mean_group(big), trimmed = trimmed_mean_group(big, 0.1);
  CHECK(std::fabs(full.theta_bar(0) - trimmed.theta_bar(0)) < 3.0 * full.se()(0));
}

TEST_CASE("unit table export") {
  Rng rng(37);
  auto units = random_units(3, 4, rng);
  units[1] = unit(units[1].theta, true);
  auto dir = temp_dir("mgiv_table");
  write_unit_table(dir / "u.csv", {"a", "b", "c"}, units);
  auto t = csv::read(dir / "u.csv");
  CHECK(t.header == std::vector<std::string>{"unit", "delta", "psi", "beta_1", "beta_2", "excluded_spatial"});
  CHECK(t.rows[1][2] == "NA");
  CHECK(t.rows[1][5] == "true");
  CHECK(t.rows[0][5] == "false");
  CHECK(csv::to_double(t.rows[2][3], 0) == units[2].theta(2));
}
