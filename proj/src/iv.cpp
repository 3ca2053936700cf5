#include "spdyn/iv.hpp"

#include <cmath>
#include <limits>

#include "spdyn/errors.hpp"
#include "spdyn/parallel.hpp"
#include "spdyn/stats.hpp"

namespace spdyn {

std::vector<std::string> coefficient_names(const std::vector<std::string>& covariate_names) {
  std::vector<std::string> names{"lagged_level", "spatial_lag"};
  names.insert(names.end(), covariate_names.begin(), covariate_names.end());
  return names;
}

Index InstrumentSpec::block_count() const {
  Index b = 0;
  for (int tau = 0; tau < 3; ++tau) b += (own[tau] ? 1 : 0) + (spatial[tau] ? 1 : 0);
  return b;
}

MatrixXd InstrumentSet::expanded() const {
  if (q == q_full) return z;
  MatrixXd full = MatrixXd::Zero(z.rows(), q_full);
  for (Index c = 0; c < q; ++c) full.col(layout[c]) = z.col(c);
  return full;
}

std::optional<double> UnitEstimate::coef(Index p) const {
  if (p == kPsiPos && excluded_spatial) return std::nullopt;
  return theta(p);
}

namespace {

bool row_is_zero(const WeightScheme& w, Index i) {
  for (const auto& m : w.mats)
    if (m.row(i).cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

void check_window(const TransformedPanel& tp, const WeightScheme& w) {
  if (w.n() != tp.n())
    throw ShapeError("weights have " + std::to_string(w.n()) + " units, panel has " + std::to_string(tp.n()));
  if (w.time_varying() && w.periods() != tp.t_eff)
    throw ShapeError("time-varying weights have " + std::to_string(w.periods()) +
                     " periods, estimation window has " + std::to_string(tp.t_eff));
}

}  // namespace

std::vector<InstrumentSet> build_instruments(const TransformedPanel& tp, const WeightScheme& w,
                                             const FactorBasis& fb, const InstrumentSpec& spec) {
  check_window(tp, w);
  const Index n = tp.n(), t = tp.t_eff, k = tp.k();
  if (spec.block_count() == 0) throw ConfigError("instrument set selects no blocks");

  // Each block, for every covariate, as a T x N matrix (one column per unit).
  struct Block {
    bool spatial;
    std::string label;
    MatrixXd cols;
  };
  std::vector<Block> blocks;
  const Annihilator& m0 = fb.annihilators[0];
  for (int kind = 0; kind < 2; ++kind) {
    const bool spatial = kind == 1;
    for (int tau = 0; tau < 3; ++tau) {
      if (!(spatial ? spec.spatial[tau] : spec.own[tau])) continue;
      for (Index l = 0; l < k; ++l) {
        const MatrixXd& xl = tp.x_lag(tau)[l];
        MatrixXd series = spatial ? spatial_lag(w, xl) : xl;
        MatrixXd cols = series.transpose();
        if (tau > 0) cols = fb.annihilators[tau].apply(cols);
        cols = m0.apply(cols);
        blocks.push_back({spatial,
                          std::string(spatial ? "spatial" : "own") + "_lag" + std::to_string(tau) + ":" +
                              tp.covariate_names[static_cast<std::size_t>(l)],
                          std::move(cols)});
      }
    }
  }

  const Index q_full = static_cast<Index>(blocks.size());
  std::vector<InstrumentSet> out(static_cast<std::size_t>(n));
  parallel::for_each_index(static_cast<std::size_t>(n), [&](std::size_t iu) {
    const Index i = static_cast<Index>(iu);
    InstrumentSet& s = out[iu];
    s.q_full = q_full;
    s.spatial_dropped = row_is_zero(w, i);
    for (Index b = 0; b < q_full; ++b)
      if (!(s.spatial_dropped && blocks[b].spatial)) s.layout.push_back(b);
    s.q = static_cast<Index>(s.layout.size());
    s.z.resize(t, s.q);
    for (Index c = 0; c < s.q; ++c) {
      s.z.col(c) = blocks[s.layout[c]].cols.col(i);
      s.block_labels.push_back(blocks[s.layout[c]].label);
    }
    if (s.q == 0 || linalg::singular_ratio(s.z) < 1e-10)
      throw WeakInstrumentError("instrument matrix of unit '" + tp.unit_ids[iu] + "' is rank deficient", iu);
  });
  return out;
}

std::vector<UnitDesign> build_designs(const TransformedPanel& tp, const WeightScheme& w) {
  check_window(tp, w);
  const Index n = tp.n(), t = tp.t_eff, k = tp.k();
  MatrixXd sl = spatial_lag(w, tp.dy);
  std::vector<UnitDesign> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    UnitDesign& d = out[static_cast<std::size_t>(i)];
    d.c.resize(t, 2 + k);
    d.c.col(0) = tp.y_lag.row(i).transpose();
    d.c.col(1) = sl.row(i).transpose();
    for (Index l = 0; l < k; ++l) d.c.col(2 + l) = tp.x0[l].row(i).transpose();
    d.y = tp.dy.row(i).transpose();
    d.isolated = row_is_zero(w, i);
  }
  return out;
}

UnitEstimate estimate_unit(const MatrixXd& c, const VectorXd& y, const MatrixXd& z) {
  const Index t = c.rows(), p = c.cols(), q = z.cols();
  if (y.size() != t || z.rows() != t) throw ShapeError("design, outcome and instruments differ in length");
  if (q < p)
    throw UnderIdentifiedError(std::to_string(q) + " instruments for " + std::to_string(p) + " parameters");
  const double inv_t = 1.0 / static_cast<double>(t);
  MatrixXd b = z.transpose() * z * inv_t;
  MatrixXd a = z.transpose() * c * inv_t;
  VectorXd cz = z.transpose() * y * inv_t;

  MatrixXd b_inv_a = linalg::solve_spd(b, a, "instrument moment matrix B");
  VectorXd b_inv_c = linalg::solve_spd(b, cz, "instrument moment matrix B");
  MatrixXd g = a.transpose() * b_inv_a;
  VectorXd h = a.transpose() * b_inv_c;

  UnitEstimate u;
  u.theta = linalg::solve_spd(g, h, "A' B^-1 A (collinear regressors)");
  u.residuals = y - c * u.theta;
  const double dof = static_cast<double>(std::max<Index>(t - p, 1));
  u.sigma_hat = std::sqrt(u.residuals.squaredNorm() / dof);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(b, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  u.cond = ev(0) > 0.0 ? ev(ev.size() - 1) / ev(0) : std::numeric_limits<double>::infinity();
  if (!u.theta.allFinite()) throw NumericError("non-finite unit estimate");
  return u;
}

UnitEstimate estimate_unit_model(const UnitDesign& design, const InstrumentSet& inst) {
  if (!inst.spatial_dropped && !design.isolated) return estimate_unit(design.c, design.y, inst.z);
  const Index p = design.c.cols();
  MatrixXd c(design.c.rows(), p - 1);
  c.col(0) = design.c.col(kDeltaPos);
  c.rightCols(p - 2) = design.c.rightCols(p - 2);
  UnitEstimate sub = estimate_unit(c, design.y, inst.z);
  UnitEstimate u = sub;
  u.excluded_spatial = true;
  u.theta.resize(p);
  u.theta(kDeltaPos) = sub.theta(0);
  u.theta(kPsiPos) = std::numeric_limits<double>::quiet_NaN();
  u.theta.tail(p - 2) = sub.theta.tail(p - 2);
  return u;
}

namespace {

struct Moments {
  MatrixXd a;  // sum Z'C
  MatrixXd b;  // sum Z'Z
  VectorXd c;  // sum Z'y
};

Moments accumulate(const std::vector<UnitDesign>& designs, const std::vector<MatrixXd>& z) {
  Moments m;
  const Index q = z.front().cols(), p = designs.front().c.cols();
  m.a = MatrixXd::Zero(q, p);
  m.b = MatrixXd::Zero(q, q);
  m.c = VectorXd::Zero(q);
  for (std::size_t i = 0; i < designs.size(); ++i) {
    m.a.noalias() += z[i].transpose() * designs[i].c;
    m.b.noalias() += z[i].transpose() * z[i];
    m.c.noalias() += z[i].transpose() * designs[i].y;
  }
  return m;
}

VectorXd gmm_solve(const MatrixXd& a, const VectorXd& c, const MatrixXd& weight_inv_src, const std::string& what) {
  MatrixXd wa = linalg::solve_spd(weight_inv_src, a, what);
  VectorXd wc = linalg::solve_spd(weight_inv_src, c, what);
  return linalg::solve_spd(a.transpose() * wa, a.transpose() * wc, "pooled A' W A");
}

MatrixXd residual_panel(const std::vector<UnitDesign>& designs, const VectorXd& theta) {
  const Index n = static_cast<Index>(designs.size()), t = designs.front().y.size();
  MatrixXd u(n, t);
  for (Index i = 0; i < n; ++i) {
    const auto& d = designs[static_cast<std::size_t>(i)];
    u.row(i) = (d.y - d.c * theta).transpose();
  }
  return u;
}

}  // namespace

PooledEstimate estimate_pooled(const std::vector<UnitDesign>& designs, const std::vector<InstrumentSet>& inst,
                               const PooledOptions& options) {
  if (designs.empty() || designs.size() != inst.size()) throw ShapeError("designs and instruments do not match");
  const Index n = static_cast<Index>(designs.size());
  const Index p = designs.front().c.cols();
  const Index t = designs.front().y.size();

  std::vector<MatrixXd> z(designs.size());
  for (std::size_t i = 0; i < designs.size(); ++i) z[i] = inst[i].expanded();
  const Index q = z.front().cols();
  if (q < p) throw UnderIdentifiedError(std::to_string(q) + " instruments for " + std::to_string(p) + " parameters");

  // Pass one: pooled 2SLS on the defactored instruments.
  Moments m1 = accumulate(designs, z);
  VectorXd theta1 = gmm_solve(m1.a, m1.c, m1.b, "pooled instrument moments");
  MatrixXd pilot = residual_panel(designs, theta1);

  PooledEstimate est;
  est.q = q;
  const Index cap = std::max<Index>(1, std::min(options.r_max, max_factor_count(n, t)));
  if (options.r_y) {
    est.r_y = *options.r_y;
  } else {
    est.r_y = select_rank(extract_factors(pilot, 0).eigvals, cap);
  }
  Annihilator m_y(extract_factors(pilot, est.r_y).f_hat);
  for (auto& zi : z) zi = m_y.apply(zi);

  // Pass two: 2SLS start, then efficient two-step GMM clustered by unit.
  Moments m2 = accumulate(designs, z);
  VectorXd theta_a = gmm_solve(m2.a, m2.c, m2.b, "second-stage instrument moments");
  MatrixXd s = MatrixXd::Zero(q, q);
  for (std::size_t i = 0; i < designs.size(); ++i) {
    VectorXd g = z[i].transpose() * (designs[i].y - designs[i].c * theta_a);
    s.noalias() += g * g.transpose();
  }
  MatrixXd s_inv_a = linalg::solve_spd(s, m2.a, "clustered moment covariance (needs N > q)");
  VectorXd s_inv_c = linalg::solve_spd(s, m2.c, "clustered moment covariance (needs N > q)");
  MatrixXd info = m2.a.transpose() * s_inv_a;
  est.theta = linalg::solve_spd(info, m2.a.transpose() * s_inv_c, "pooled A' S^-1 A");
  est.vcov = linalg::solve_spd(info, MatrixXd::Identity(p, p), "pooled A' S^-1 A");
  est.vcov = 0.5 * (est.vcov + est.vcov.transpose()).eval();

  VectorXd gbar = m2.c - m2.a * est.theta;
  est.j_dof = q - p;
  if (est.j_dof > 0) {
    double j = gbar.dot(VectorXd(linalg::solve_spd(s, gbar, "clustered moment covariance")));
    est.j_stat = j;
    est.j_pvalue = stats::chi2_sf(j, static_cast<double>(est.j_dof));
  }

  est.residuals = residual_panel(designs, est.theta);
  est.rho = est.r_y > 0 ? compute_rho(est.residuals, est.r_y) : 0.0;
  return est;
}

double compute_rho(const MatrixXd& residuals, Index r_y) {
  if (!residuals.allFinite()) throw NumericError("residuals contain non-finite values");
  const double before = residuals.squaredNorm();
  if (!(before > 0.0)) throw DomainError("residuals have zero variance");
  if (r_y == 0) return 0.0;
  Annihilator m(extract_factors(residuals, r_y).f_hat);
  const double after = m.apply(residuals.transpose()).squaredNorm();
  return std::clamp(1.0 - after / before, 0.0, 1.0);
}

}  // namespace spdyn
