#include "spdyn/bolmt.hpp"

#include <cmath>

#include "spdyn/csv.hpp"
#include "spdyn/errors.hpp"
#include "spdyn/parallel.hpp"
#include "spdyn/stats.hpp"

namespace spdyn {

void BolmtConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (max_links && *max_links < 1) throw ConfigError("max_links must be at least 1");
  if (rule == ThresholdRule::fixed && !(fixed_c > 0.0)) throw ConfigError("fixed threshold must be positive");
}

BolmtData bolmt_data(const TransformedPanel& tp, const BolmtConfig& cfg) {
  const Index n = tp.n(), t = tp.t_eff, k = tp.k();
  const int lags = cfg.include_lags ? 3 : 1;
  std::optional<FactorBasis> fb;
  if (cfg.defactor) fb = build_factor_basis(tp, cfg.factors);

  BolmtData d;
  d.unit_ids = tp.unit_ids;
  for (Index i = 0; i < n; ++i) {
    MatrixXd cand(t, k * lags);
    for (int tau = 0; tau < lags; ++tau)
      for (Index l = 0; l < k; ++l) cand.col(tau * k + l) = tp.x_lag(tau)[l].row(i).transpose();
    MatrixXd own(t, cand.cols() + (cfg.include_lagged_level ? 1 : 0));
    own.leftCols(cand.cols()) = cand;
    if (cfg.include_lagged_level) own.rightCols(1) = tp.y_lag.row(i).transpose();
    VectorXd y = tp.dy.row(i).transpose();
    if (fb) {
      const Annihilator& m = fb->annihilators[0];
      y = m.apply(y);
      own = m.apply(own);
      cand = m.apply(cand);
    }
    d.y.push_back(std::move(y));
    d.own.push_back(std::move(own));
    d.cand.push_back(std::move(cand));
  }
  return d;
}

namespace {

MatrixXd hcat(std::initializer_list<const MatrixXd*> parts, Index rows) {
  Index cols = 0;
  for (auto* p : parts) cols += p->cols();
  MatrixXd out(rows, cols);
  Index c = 0;
  for (auto* p : parts) {
    out.middleCols(c, p->cols()) = *p;
    c += p->cols();
  }
  return out;
}

// Residual maker for the column span of q.
struct Residualizer {
  MatrixXd q;
  Eigen::ColPivHouseholderQR<MatrixXd> qr;
  explicit Residualizer(MatrixXd basis) : q(std::move(basis)) {
    if (q.cols() > 0) qr.compute(q);
  }
  MatrixXd operator()(const MatrixXd& v) const {
    if (q.cols() == 0) return v;
    return v - q * qr.solve(v);
  }
};

}  // namespace

double pairwise_t(const VectorXd& yi, const VectorXd& yj, const MatrixXd& xi, const MatrixXd& xj,
                  const SelectedControls& controls, FirstStage first_stage) {
  const Index t = yi.size();
  if (yj.size() != t || xi.rows() != t || xj.rows() != t || controls.actual.rows() != t)
    throw ShapeError("pairwise regression inputs differ in length");
  const Index p_eq = xi.cols() + controls.actual.cols() + 1;
  if (t <= p_eq) throw InsufficientTimeError("too few periods for the pairwise regression");

  VectorXd yhat;
  MatrixXd fitted;
  if (first_stage == FirstStage::own) {
    yhat = linalg::project(xj, yj);
    fitted = controls.fitted;
  } else {
    Residualizer h(hcat({&xi, &controls.instruments, &xj}, t));
    yhat = yj - h(yj);
    fitted = controls.actual - h(controls.actual);
  }

  Residualizer m(hcat({&xi, &fitted}, t));
  const double yhat_ss = yhat.squaredNorm();
  VectorXd m_yhat = m(yhat);
  const double d = m_yhat.squaredNorm();
  if (!(yhat_ss > 0.0) || !(d > 1e-10 * yhat_ss))
    throw DegenerateCandidateError("candidate fit is annihilated by the controls");
  const double yj_ss = yj.squaredNorm();
  if (!(m(yj).squaredNorm() > 1e-12 * yj_ss))
    throw DegenerateCandidateError("candidate series lies in the span of the controls");

  // Just-identified IV of y_i on (x_i, selected, y_j) with (x_i, fitted, yhat_j).
  MatrixXd yj_m = yj, yhat_m = yhat;
  MatrixXd r = hcat({&xi, &controls.actual, &yj_m}, t);
  MatrixXd g = hcat({&xi, &fitted, &yhat_m}, t);
  Eigen::ColPivHouseholderQR<MatrixXd> gr(g.transpose() * r);
  if (gr.rank() < r.cols()) throw DegenerateCandidateError("conditioning IV regression is singular");
  VectorXd b = gr.solve(g.transpose() * yi);
  const double sigma = std::sqrt((yi - r * b).squaredNorm() / static_cast<double>(t - p_eq));
  if (!(sigma > 0.0)) throw DegenerateCandidateError("conditioning IV regression fits exactly");

  return m_yhat.dot(yi) / (sigma * std::sqrt(d));
}

double bolmt_threshold(const BolmtConfig& cfg, Index n, Index dof) {
  if (cfg.rule == ThresholdRule::fixed) return cfg.fixed_c;
  if (n < 2) throw DomainError("threshold needs at least two units");
  const double p = 1.0 - cfg.alpha / (2.0 * static_cast<double>(n - 1));
  if (cfg.reference == ThresholdReference::student_t)
    return stats::student_t_quantile(p, static_cast<double>(std::max<Index>(dof, 1)));
  return stats::normal_quantile(p);
}

RowSelection recover_row(Index i, const BolmtData& data, const BolmtConfig& cfg) {
  cfg.validate();
  const Index n = data.n();
  if (i < 0 || i >= n) throw IndexError("unit index out of range");
  const Index t = data.y[static_cast<std::size_t>(i)].size();
  const Index cap = std::min(cfg.max_links.value_or(n - 1), n - 1);
  const auto& yi = data.y[static_cast<std::size_t>(i)];
  const auto& xi = data.own[static_cast<std::size_t>(i)];

  RowSelection row;
  SelectedControls ctl{MatrixXd(t, 0), MatrixXd(t, 0), MatrixXd(t, 0)};
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[static_cast<std::size_t>(i)] = 1;

  for (Index step = 0; static_cast<Index>(row.selected.size()) < cap; ++step) {
    Index best = -1;
    double best_t = -1.0;
    for (Index j = 0; j < n; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (taken[ju]) continue;
      double a;
      try {
        a = std::fabs(pairwise_t(yi, data.y[ju], xi, data.cand[ju], ctl, cfg.first_stage));
      } catch (const DegenerateCandidateError&) {
        ++row.degenerate_candidates;
        continue;
      }
      if (a > best_t) {
        best_t = a;
        best = j;
      }
    }
    if (best < 0) break;
    const Index dof = t - (xi.cols() + ctl.actual.cols() + 1);
    TraceEntry e{step, best, best_t, bolmt_threshold(cfg, n, dof), false};
    e.accepted = e.abs_t > e.threshold;
    row.trace.push_back(e);
    if (!e.accepted) break;

    const auto bu = static_cast<std::size_t>(best);
    taken[bu] = 1;
    row.selected.push_back(best);
    const Index s = ctl.actual.cols();
    const Index kc = data.cand[bu].cols();
    ctl.actual.conservativeResize(t, s + 1);
    ctl.actual.col(s) = data.y[bu];
    ctl.fitted.conservativeResize(t, s + 1);
    ctl.fitted.col(s) = linalg::project(data.cand[bu], data.y[bu]);
    const Index c0 = ctl.instruments.cols();
    ctl.instruments.conservativeResize(t, c0 + kc);
    ctl.instruments.rightCols(kc) = data.cand[bu];
  }
  return row;
}

RecoveredNetwork recover_network(const BolmtData& data, const BolmtConfig& cfg) {
  cfg.validate();
  const Index n = data.n();
  RecoveredNetwork net;
  net.rows.resize(static_cast<std::size_t>(n));
  parallel::for_each_index(static_cast<std::size_t>(n), [&](std::size_t i) {
    net.rows[i] = recover_row(static_cast<Index>(i), data, cfg);
  });
  MatrixXd w = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j : net.rows[static_cast<std::size_t>(i)].selected) w(i, j) = 1.0;
  net.w_hat = row_standardize(WeightScheme::fixed_matrix(std::move(w), data.unit_ids));
  net.stats = network_stats(net.w_hat);
  return net;
}

void write_edge_list(const std::filesystem::path& path, const RecoveredNetwork& net) {
  std::vector<std::vector<std::string>> rows;
  const auto& ids = net.w_hat.unit_ids;
  for (std::size_t i = 0; i < net.rows.size(); ++i)
    for (const auto& e : net.rows[i].trace)
      if (e.accepted)
        rows.push_back({ids[i], ids[static_cast<std::size_t>(e.candidate)], csv::format_double(e.abs_t),
                        std::to_string(e.step)});
  csv::write(path, {"from", "to", "abs_t", "step"}, rows);
}

}  // namespace spdyn
