#include "spdyn/panel.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include "spdyn/csv.hpp"
#include "spdyn/errors.hpp"

namespace spdyn {

void PanelDataset::validate() const {
  const Index n_units = static_cast<Index>(unit_ids.size());
  const Index n_times = static_cast<Index>(time_ids.size());
  if (n_units < 1 || n_times < 1) throw ShapeError("panel must have at least one unit and period");
  if (y.rows() != n_units || y.cols() != n_times)
    throw ShapeError("outcome matrix does not match unit/time labels");
  if (covariate_names.size() != x.size())
    throw ShapeError("covariate names do not match covariate arrays");
  for (const auto& xl : x)
    if (xl.rows() != n_units || xl.cols() != n_times)
      throw ShapeError("covariate matrix does not match unit/time labels");
  if (!y.allFinite()) throw NumericError("outcome contains non-finite values");
  for (const auto& xl : x)
    if (!xl.allFinite()) throw NumericError("covariates contain non-finite values");
  std::set<std::string> seen(unit_ids.begin(), unit_ids.end());
  if (seen.size() != unit_ids.size()) throw DuplicateError("duplicate unit labels");
  for (std::size_t t = 1; t < time_ids.size(); ++t)
    if (time_ids[t] <= time_ids[t - 1]) throw DuplicateError("time labels must be strictly increasing");
}

PanelDataset load_panel(const std::filesystem::path& path, const IngestConfig& config) {
  if (!std::filesystem::exists(path)) throw IoError("input file not found: " + path.string());
  const csv::Table table = csv::read(path);

  const std::size_t c_unit = table.column(config.unit_column);
  const std::size_t c_time = table.column(config.time_column);
  const std::size_t c_y = table.column(config.outcome);

  std::vector<std::string> names = config.covariates;
  if (names.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (c != c_unit && c != c_time && c != c_y) names.push_back(table.header[c]);
  }
  std::vector<std::size_t> c_x;
  for (const auto& nm : names) c_x.push_back(table.column(nm));

  std::vector<std::string> units;
  std::unordered_map<std::string, Index> unit_pos;
  std::set<std::int64_t> times;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (unit_pos.emplace(row[c_unit], static_cast<Index>(units.size())).second)
      units.push_back(row[c_unit]);
    times.insert(csv::to_int(row[c_time], table.line_numbers[r]));
  }

  PanelDataset panel;
  panel.unit_ids = units;
  panel.time_ids.assign(times.begin(), times.end());
  panel.outcome_name = config.outcome;
  panel.covariate_names = names;
  const Index n = static_cast<Index>(units.size());
  const Index t = static_cast<Index>(times.size());
  std::map<std::int64_t, Index> time_pos;
  for (Index s = 0; s < t; ++s) time_pos[panel.time_ids[s]] = s;

  panel.y = MatrixXd::Zero(n, t);
  panel.x.assign(names.size(), MatrixXd::Zero(n, t));
  std::vector<char> filled(static_cast<std::size_t>(n * t), 0);

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    Index i = unit_pos.at(row[c_unit]);
    Index s = time_pos.at(csv::to_int(row[c_time], line));
    auto& flag = filled[static_cast<std::size_t>(i * t + s)];
    if (flag)
      throw DuplicateError("duplicate (unit, time) = (" + row[c_unit] + ", " +
                           std::to_string(panel.time_ids[s]) + ") at line " + std::to_string(line));
    flag = 1;
    panel.y(i, s) = csv::to_double(row[c_y], line);
    for (std::size_t l = 0; l < c_x.size(); ++l) panel.x[l](i, s) = csv::to_double(row[c_x[l]], line);
  }

  std::vector<BalanceError::Cell> missing;
  for (Index i = 0; i < n; ++i)
    for (Index s = 0; s < t; ++s)
      if (!filled[static_cast<std::size_t>(i * t + s)]) missing.emplace_back(units[i], panel.time_ids[s]);
  if (!missing.empty()) {
    std::string msg = "unbalanced panel, missing (unit, time):";
    for (std::size_t m = 0; m < std::min<std::size_t>(missing.size(), 10); ++m)
      msg += " (" + missing[m].first + ", " + std::to_string(missing[m].second) + ")";
    if (missing.size() > 10) msg += " ... " + std::to_string(missing.size()) + " total";
    throw BalanceError(msg, std::move(missing));
  }

  panel.validate();
  return panel;
}

void save_panel(const PanelDataset& panel, const std::filesystem::path& path) {
  panel.validate();
  std::vector<std::string> header{"unit", "time", panel.outcome_name};
  header.insert(header.end(), panel.covariate_names.begin(), panel.covariate_names.end());
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<std::size_t>(panel.n() * panel.t()));
  for (Index i = 0; i < panel.n(); ++i) {
    for (Index s = 0; s < panel.t(); ++s) {
      std::vector<std::string> rec{panel.unit_ids[i], std::to_string(panel.time_ids[s]),
                                   csv::format_double(panel.y(i, s))};
      for (const auto& xl : panel.x) rec.push_back(csv::format_double(xl(i, s)));
      rows.push_back(std::move(rec));
    }
  }
  csv::write(path, header, rows);
}

MatrixXd demean(const MatrixXd& z, Demean mode) {
  if (mode == Demean::none || z.size() == 0) return z;
  VectorXd unit_mean = z.rowwise().mean();
  MatrixXd out = z.colwise() - unit_mean;
  if (mode == Demean::two_way) {
    Eigen::RowVectorXd time_mean = out.colwise().mean();
    out.rowwise() -= time_mean;
  }
  return out;
}

MatrixXd demean_time(const MatrixXd& z) {
  Eigen::RowVectorXd time_mean = z.colwise().mean();
  return z.rowwise() - time_mean;
}

Differences first_difference(const MatrixXd& y) {
  if (y.cols() < 2) throw InsufficientTimeError("first differences need at least two periods");
  const Index t = y.cols();
  Differences d;
  d.y_lag = y.leftCols(t - 1);
  d.dy = y.rightCols(t - 1) - d.y_lag;
  return d;
}

const std::vector<MatrixXd>& TransformedPanel::x_lag(int tau) const {
  switch (tau) {
    case 0: return x0;
    case 1: return x1;
    case 2: return x2;
    default: throw IndexError("covariate lag must be 0, 1 or 2");
  }
}

TransformedPanel build_transformed(const PanelDataset& panel, const TransformOptions& options) {
  panel.validate();
  if (panel.t() < 4)
    throw InsufficientTimeError("need T >= 4 periods, got " + std::to_string(panel.t()));
  if (panel.n() < 2) throw ShapeError("need at least two units");

  const Index t = panel.t();
  const Index t_eff = t - 2;
  const Demean pre = options.difference_first ? Demean::none : options.demean;
  const Demean post = options.difference_first ? options.demean : Demean::none;

  MatrixXd y = demean(panel.y, pre);
  TransformedPanel tp;
  tp.unit_ids = panel.unit_ids;
  tp.covariate_names = panel.covariate_names;
  tp.window_time_ids.assign(panel.time_ids.begin() + 2, panel.time_ids.end());
  tp.t_eff = t_eff;
  tp.first_level_index = 2;
  tp.demean = options.demean;

  tp.y_lag = demean(y.middleCols(1, t_eff), post);
  tp.dy = demean(y.rightCols(t_eff) - y.middleCols(1, t_eff), post);
  for (const auto& xl_raw : panel.x) {
    MatrixXd xl = demean(xl_raw, pre);
    tp.x0.push_back(demean(xl.rightCols(t_eff), post));
    tp.x1.push_back(demean(xl.middleCols(1, t_eff), post));
    tp.x2.push_back(demean(xl.leftCols(t_eff), post));
  }
  return tp;
}

}  // namespace spdyn
