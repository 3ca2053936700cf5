#include "spdyn/effects.hpp"

#include <cmath>

#include "spdyn/errors.hpp"
#include "spdyn/iv.hpp"
#include "spdyn/parallel.hpp"
#include "spdyn/rng.hpp"

namespace spdyn {

namespace {

double spectral_radius(const MatrixXd& a) {
  Eigen::EigenSolver<MatrixXd> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Multiplier build(const WeightScheme& w, const VectorXd& psi) {
  const Index n = w.n();
  if (psi.size() != n) throw ShapeError("psi vector length differs from the unit count");
  if (!psi.allFinite()) throw DomainError("psi must be finite");
  const double max_abs = psi.cwiseAbs().maxCoeff();
  if (w.row_standardized && max_abs >= 1.0)
    throw StabilityError("|psi| >= 1 with row-standardized weights");

  Multiplier m;
  m.time_varying = w.time_varying();
  m.s_inv.resize(static_cast<std::size_t>(w.periods()));
  m.rcond.resize(m.s_inv.size());
  parallel::for_each_index(m.s_inv.size(), [&](std::size_t t) {
    MatrixXd pw = psi.asDiagonal() * w.mats[t];
    if (!w.row_standardized && n > 0 && max_abs > 0.0 && spectral_radius(pw) >= 1.0)
      throw StabilityError("spectral radius of psi W is at least one");
    MatrixXd s = MatrixXd::Identity(n, n) - pw;
    Eigen::PartialPivLU<MatrixXd> lu(s);
    const double rc = lu.rcond();
    if (!(rc >= 1e-12)) throw ConditionError("I - psi W is near singular", rc > 0.0 ? 1.0 / rc : INFINITY);
    m.rcond[t] = rc;
    m.s_inv[t] = lu.inverse();
  });
  return m;
}

// Period-averaged mean(diag S^-1) and mean(row sums of S^-1).
std::pair<double, double> summarize(const std::vector<MatrixXd>& s_inv) {
  double d = 0.0, r = 0.0;
  for (const auto& s : s_inv) {
    const double n = static_cast<double>(s.rows());
    d += s.diagonal().sum() / n;
    r += s.sum() / n;
  }
  const double p = static_cast<double>(s_inv.size());
  return {d / p, r / p};
}

EffectRow make_row(const std::string& name, double b, double md, double mr) {
  EffectRow row;
  row.name = name;
  row.direct = b * md;
  row.indirect = b * (mr - md);
  row.total = row.direct + row.indirect;
  return row;
}

void check_unit(const Multiplier& m, Index i) {
  if (i < 0 || i >= m.n()) throw IndexError("unit index " + std::to_string(i) + " out of range");
}

}  // namespace

Multiplier multiplier(const WeightScheme& w, double psi) {
  Multiplier m = build(w, VectorXd::Constant(w.n(), psi));
  m.psi = psi;
  return m;
}

Multiplier multiplier(const WeightScheme& w, const VectorXd& psi_units) {
  Multiplier m = build(w, psi_units);
  m.psi = psi_units.size() ? psi_units.mean() : 0.0;
  m.psi_units = psi_units;
  return m;
}

EffectsTable average_effects(const Multiplier& m, const VectorXd& beta, const std::vector<std::string>& names,
                             std::optional<double> delta) {
  if (static_cast<Index>(names.size()) != beta.size()) throw ShapeError("one name per coefficient required");
  EffectsTable table;
  table.time_varying = m.time_varying;
  auto [md, mr] = summarize(m.s_inv);
  table.mean_diag = md;
  table.mean_row_sum = mr;
  if (delta) table.rows.push_back(make_row("lagged_level", *delta, md, mr));
  for (Index l = 0; l < beta.size(); ++l)
    table.rows.push_back(make_row(names[static_cast<std::size_t>(l)], beta(l), md, mr));
  return table;
}

double pairwise_effect(const Multiplier& m, double beta_l, Index i, Index j, Index period) {
  check_unit(m, i);
  check_unit(m, j);
  if (period < 0 || period >= m.periods()) throw IndexError("period out of range");
  return beta_l * m.s_inv[static_cast<std::size_t>(period)](i, j);
}

SpillResult spill_out(const Multiplier& m, double beta_l, const std::vector<Index>& sources) {
  if (sources.empty()) throw DomainError("spill-out needs at least one source unit");
  for (Index s : sources) check_unit(m, s);
  const Index n = m.n();
  SpillResult r{VectorXd::Zero(n), VectorXd::Zero(n), VectorXd::Zero(n)};
  const double scale = beta_l / static_cast<double>(m.periods());
  for (const auto& s_inv : m.s_inv)
    for (Index s : sources) {
      r.total += scale * s_inv.col(s);
      r.own(s) += scale * s_inv(s, s);
    }
  r.spill = r.total - r.own;
  return r;
}

SpillResult spill_in(const Multiplier& m, double beta_l, Index target) {
  check_unit(m, target);
  const Index n = m.n();
  SpillResult r{VectorXd::Zero(n), VectorXd::Zero(n), VectorXd::Zero(n)};
  const double scale = beta_l / static_cast<double>(m.periods());
  for (const auto& s_inv : m.s_inv) r.total += scale * s_inv.row(target).transpose();
  r.own(target) = r.total(target);
  r.spill = r.total - r.own;
  return r;
}

double group_effect(const Multiplier& m, double beta_l, const std::vector<Index>& sources,
                    const std::vector<Index>& targets) {
  if (targets.empty()) throw DomainError("group effect needs at least one target unit");
  for (Index t : targets) check_unit(m, t);
  SpillResult out = spill_out(m, beta_l, sources);
  double sum = 0.0;
  for (Index t : targets) sum += out.total(t);
  return sum / static_cast<double>(targets.size());
}

void effect_standard_errors(EffectsTable& table, const VectorXd& theta, const MatrixXd& vcov,
                            const WeightScheme& w, const SeOptions& options) {
  if (w.time_varying()) throw NotAvailableError("standard errors are not computed for time-varying effects");
  const Index p = theta.size();
  if (vcov.rows() != p || vcov.cols() != p) throw ShapeError("covariance does not match the coefficients");
  const bool has_delta = !table.rows.empty() && table.rows.front().name == "lagged_level";
  const Index first_beta = has_delta ? 1 : 0;
  if (static_cast<Index>(table.rows.size()) - first_beta != p - kBetaPos)
    throw ShapeError("effects table does not match the coefficient vector");
  // Coefficient position behind each row.
  auto coef_pos = [&](std::size_t r) {
    return has_delta && r == 0 ? kDeltaPos : kBetaPos + static_cast<Index>(r) - first_beta;
  };

  if (options.method == SeMethod::none) return;
  const double psi = theta(kPsiPos);
  const MatrixXd& wm = w.mats.front();
  const Index n = w.n();

  if (options.method == SeMethod::delta) {
    Multiplier m = multiplier(w, psi);
    const MatrixXd& s = m.s_inv.front();
    MatrixXd ds = s * wm * s;  // derivative of S^-1 with respect to psi
    const double md = s.diagonal().sum() / n, mr = s.sum() / n;
    const double dmd = ds.diagonal().sum() / n, dmr = ds.sum() / n;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const Index c = coef_pos(r);
      const double b = theta(c);
      Eigen::Matrix2d v;
      v << vcov(kPsiPos, kPsiPos), vcov(kPsiPos, c), vcov(c, kPsiPos), vcov(c, c);
      auto se = [&](double dpsi, double db) {
        Eigen::Vector2d g(dpsi, db);
        return std::sqrt(std::max(0.0, g.dot(v * g)));
      };
      table.rows[r].se_direct = se(b * dmd, md);
      table.rows[r].se_total = se(b * dmr, mr);
      table.rows[r].se_indirect = se(b * (dmr - dmd), mr - md);
    }
    return;
  }

  // Simulation: draws from N(theta, vcov), skipping unstable psi.
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (vcov + vcov.transpose()));
  MatrixXd root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Rng rng(options.seed, 0);
  const std::size_t rows = table.rows.size();
  std::vector<double> sum(3 * rows, 0.0), sum_sq(3 * rows, 0.0);
  Index kept = 0;
  VectorXd z(p);
  for (Index d = 0; d < options.draws; ++d) {
    for (Index c = 0; c < p; ++c) z(c) = rng.normal();
    VectorXd draw = theta + root * z;
    Multiplier m;
    try {
      m = multiplier(w, draw(kPsiPos));
    } catch (const StabilityError&) {
      continue;
    } catch (const ConditionError&) {
      continue;
    }
    auto [md, mr] = summarize(m.s_inv);
    for (std::size_t r = 0; r < rows; ++r) {
      EffectRow e = make_row("", draw(coef_pos(r)), md, mr);
      const double vals[3] = {e.direct, e.indirect, e.total};
      for (int q = 0; q < 3; ++q) {
        sum[3 * r + q] += vals[q];
        sum_sq[3 * r + q] += vals[q] * vals[q];
      }
    }
    ++kept;
  }
  if (kept < 2) throw NumericError("fewer than two stable simulation draws");
  auto sd = [&](std::size_t idx) {
    const double k = static_cast<double>(kept);
    const double mean = sum[idx] / k;
    return std::sqrt(std::max(0.0, (sum_sq[idx] - k * mean * mean) / (k - 1.0)));
  };
  for (std::size_t r = 0; r < rows; ++r) {
    table.rows[r].se_direct = sd(3 * r);
    table.rows[r].se_indirect = sd(3 * r + 1);
    table.rows[r].se_total = sd(3 * r + 2);
  }
}

EffectsTable compute_effects(const WeightScheme& w, const VectorXd& theta, const MatrixXd& vcov,
                             const std::vector<std::string>& covariate_names, const SeOptions& options) {
  if (theta.size() != kBetaPos + static_cast<Index>(covariate_names.size()))
    throw ShapeError("coefficient vector does not match the covariate names");
  Multiplier m = multiplier(w, theta(kPsiPos));
  EffectsTable table = average_effects(m, theta.tail(theta.size() - kBetaPos), covariate_names, theta(kDeltaPos));
  if (!w.time_varying()) effect_standard_errors(table, theta, vcov, w, options);
  return table;
}

}  // namespace spdyn
