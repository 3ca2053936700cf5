#include "spdyn/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "spdyn/csv.hpp"
#include "spdyn/errors.hpp"
#include "spdyn/parallel.hpp"

namespace spdyn {

WeightScheme WeightScheme::fixed_matrix(MatrixXd w, std::vector<std::string> ids) {
  WeightScheme s;
  s.kind = WeightKind::fixed;
  s.mats.push_back(std::move(w));
  s.unit_ids = std::move(ids);
  s.validate();
  return s;
}

WeightScheme WeightScheme::per_period(std::vector<MatrixXd> ws, std::vector<std::string> ids) {
  WeightScheme s;
  s.kind = WeightKind::time_varying;
  s.mats = std::move(ws);
  s.unit_ids = std::move(ids);
  s.validate();
  return s;
}

void WeightScheme::validate() const {
  if (mats.empty()) throw ShapeError("weight scheme has no matrices");
  if (kind == WeightKind::fixed && mats.size() != 1) throw ShapeError("static scheme must hold one matrix");
  const Index n_units = n();
  for (const auto& m : mats) {
    if (m.rows() != n_units || m.cols() != n_units)
      throw ShapeError("weight matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(n_units) + "x" + std::to_string(n_units));
    if (!m.allFinite()) throw NumericError("weight matrix has non-finite entries");
    if (m.minCoeff() < 0.0) throw DomainError("weight matrix has negative entries");
    if (m.diagonal().cwiseAbs().maxCoeff() != 0.0) throw DomainError("weight matrix diagonal must be zero");
  }
  std::set<std::string> seen(unit_ids.begin(), unit_ids.end());
  if (seen.size() != unit_ids.size()) throw DuplicateError("duplicate unit labels in weight scheme");
}

NetworkStats network_stats(const WeightScheme& w, double cutoff) {
  const Index n = w.n();
  NetworkStats st;
  st.in_degree.assign(static_cast<std::size_t>(n), 0.0);
  st.out_degree.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<char> ever_linked(static_cast<std::size_t>(n), 0);
  const double periods = static_cast<double>(w.periods());
  double link_sum = 0.0;
  for (const auto& m : w.mats) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        if (m(i, j) > cutoff) {
          st.out_degree[static_cast<std::size_t>(j)] += 1.0 / periods;
          st.in_degree[static_cast<std::size_t>(i)] += 1.0 / periods;
          link_sum += 1.0;
        }
        if (m(i, j) != 0.0) ever_linked[static_cast<std::size_t>(i)] = 1;
      }
    }
  }
  st.links = link_sum / periods;
  st.density = n > 1 ? st.links / static_cast<double>(n * (n - 1)) : 0.0;
  st.avg_out_links = n > 0 ? st.links / static_cast<double>(n) : 0.0;
  for (Index i = 0; i < n; ++i)
    if (!ever_linked[static_cast<std::size_t>(i)]) st.isolated_units.push_back(w.unit_ids[static_cast<std::size_t>(i)]);
  return st;
}

static std::unordered_map<std::string, Index> index_of(const std::vector<std::string>& units) {
  std::unordered_map<std::string, Index> pos;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (!pos.emplace(units[i], static_cast<Index>(i)).second) throw DuplicateError("duplicate unit label " + units[i]);
  return pos;
}

WeightScheme contiguity_weights(std::span<const UnitPair> pairs, const std::vector<std::string>& units,
                                bool standardize) {
  auto pos = index_of(units);
  const Index n = static_cast<Index>(units.size());
  MatrixXd w = MatrixXd::Zero(n, n);
  for (const auto& [a, b] : pairs) {
    auto ia = pos.find(a);
    auto ib = pos.find(b);
    if (ia == pos.end()) throw LabelError("unknown unit label '" + a + "'");
    if (ib == pos.end()) throw LabelError("unknown unit label '" + b + "'");
    if (ia->second == ib->second) throw SelfLoopError("self-pair for unit '" + a + "'");
    w(ia->second, ib->second) = 1.0;
    w(ib->second, ia->second) = 1.0;
  }
  auto s = WeightScheme::fixed_matrix(std::move(w), units);
  return standardize ? row_standardize(s) : s;
}

double haversine_miles(GeoPoint a, GeoPoint b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double phi1 = a.lat * rad, phi2 = b.lat * rad;
  const double dphi = (b.lat - a.lat) * rad;
  const double dlambda = (b.lon - a.lon) * rad;
  const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusMiles * std::asin(std::sqrt(h));
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw DomainError("percentile of an empty set");
  if (!(pct >= 0.0 && pct <= 100.0)) throw DomainError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * pct / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

WeightScheme inverse_distance_weights(const std::vector<std::string>& units, std::span<const GeoPoint> coords,
                                      double percentile_cutoff, bool standardize) {
  const Index n = static_cast<Index>(units.size());
  if (static_cast<Index>(coords.size()) != n) throw ShapeError("coordinate count does not match unit count");
  if (!(percentile_cutoff > 0.0 && percentile_cutoff <= 100.0))
    throw DomainError("percentile cutoff must lie in (0, 100]");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& g = coords[i];
    if (!(g.lat >= -90.0 && g.lat <= 90.0) || !(g.lon >= -180.0 && g.lon <= 180.0))
      throw DomainError("invalid coordinates for unit '" + units[i] + "'");
  }
  MatrixXd d = MatrixXd::Zero(n, n);
  std::vector<double> unique;
  unique.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      double dij = haversine_miles(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
      if (dij == 0.0)
        throw DegenerateDistanceError("coincident coordinates for '" + units[i] + "' and '" + units[j] + "'",
                                      units[i], units[j]);
      d(i, j) = d(j, i) = dij;
      unique.push_back(dij);
    }
  }
  MatrixXd w = MatrixXd::Zero(n, n);
  if (!unique.empty()) {
    const double c = percentile(unique, percentile_cutoff);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j && d(i, j) <= c) w(i, j) = 1.0 / d(i, j);
  }
  auto s = WeightScheme::fixed_matrix(std::move(w), units);
  return standardize ? row_standardize(s) : s;
}

WeightScheme flow_weights(const std::vector<MatrixXd>& flows, const std::vector<std::string>& units,
                          FlowMode mode, FlowTransform transform, bool standardize) {
  if (flows.empty()) throw ShapeError("flow array has no periods");
  const Index n = static_cast<Index>(units.size());
  for (const auto& f : flows) {
    if (f.rows() != n || f.cols() != n) throw ShapeError("flow matrix does not match unit count");
    if (!f.allFinite()) throw NumericError("flow matrix has non-finite entries");
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j && f(i, j) < 0.0) throw DomainError("negative flow from '" + units[j] + "' to '" + units[i] + "'");
  }
  auto to_weight = [&](const MatrixXd& f) {
    MatrixXd w = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        if (i == j || f(i, j) <= 0.0) continue;
        w(i, j) = transform == FlowTransform::proportional ? f(i, j) : 1.0 / f(i, j);
      }
    return w;
  };
  WeightScheme s;
  if (mode == FlowMode::time_averaged) {
    MatrixXd mean = MatrixXd::Zero(n, n);
    for (const auto& f : flows) mean += f;
    mean /= static_cast<double>(flows.size());
    s = WeightScheme::fixed_matrix(to_weight(mean), units);
  } else {
    std::vector<MatrixXd> ws;
    ws.reserve(flows.size());
    for (const auto& f : flows) ws.push_back(to_weight(f));
    s = WeightScheme::per_period(std::move(ws), units);
  }
  return standardize ? row_standardize(s) : s;
}

WeightScheme row_standardize(const WeightScheme& w) {
  WeightScheme out = w;
  for (auto& m : out.mats) {
    for (Index i = 0; i < m.rows(); ++i) {
      double s = m.row(i).sum();
      if (s > 0.0) m.row(i) /= s;
    }
  }
  out.row_standardized = true;
  return out;
}

MatrixXd spatial_lag(const WeightScheme& w, const MatrixXd& series) {
  const Index n = w.n();
  if (series.rows() != n)
    throw ShapeError("series has " + std::to_string(series.rows()) + " rows, weights have " + std::to_string(n));
  if (!w.time_varying()) return w.mats.front() * series;
  if (series.cols() != w.periods())
    throw ShapeError("series has " + std::to_string(series.cols()) + " periods, weights have " +
                     std::to_string(w.periods()));
  MatrixXd out(n, series.cols());
  parallel::for_each_index(static_cast<std::size_t>(series.cols()), [&](std::size_t t) {
    const Index c = static_cast<Index>(t);
    out.col(c) = w.mats[t] * series.col(c);
  });
  return out;
}

WeightScheme align_to(const WeightScheme& w, const std::vector<std::string>& units) {
  if (w.unit_ids == units) return w;
  if (units.size() != w.unit_ids.size())
    throw LabelError("weight scheme has " + std::to_string(w.unit_ids.size()) + " units, panel has " +
                     std::to_string(units.size()));
  auto pos = index_of(w.unit_ids);
  std::vector<Index> perm;
  for (const auto& u : units) {
    auto it = pos.find(u);
    if (it == pos.end()) throw LabelError("unit '" + u + "' missing from weight scheme");
    perm.push_back(it->second);
  }
  WeightScheme out = w;
  out.unit_ids = units;
  const Index n = static_cast<Index>(units.size());
  for (std::size_t k = 0; k < w.mats.size(); ++k) {
    MatrixXd m(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) m(i, j) = w.mats[k](perm[i], perm[j]);
    out.mats[k] = std::move(m);
  }
  return out;
}

WeightScheme restrict_periods(const WeightScheme& w, Index first, Index count) {
  if (!w.time_varying()) return w;
  if (first < 0 || count < 0 || first + count > w.periods())
    throw ShapeError("requested periods exceed the weight scheme");
  WeightScheme out = w;
  out.mats.assign(w.mats.begin() + first, w.mats.begin() + first + count);
  return out;
}

MatrixXd binarize(const MatrixXd& w, double cutoff) {
  return (w.array() > cutoff).cast<double>().matrix();
}

void write_weight_csv(const std::filesystem::path& path, const MatrixXd& w, const std::vector<std::string>& ids) {
  std::vector<std::vector<std::string>> rows;
  for (Index i = 0; i < w.rows(); ++i) {
    std::vector<std::string> rec;
    for (Index j = 0; j < w.cols(); ++j) rec.push_back(csv::format_double(w(i, j)));
    rows.push_back(std::move(rec));
  }
  csv::write(path, ids, rows);
}

MatrixXd read_weight_csv(const std::filesystem::path& path, std::vector<std::string>& ids) {
  auto table = csv::read(path);
  ids = table.header;
  const Index n = static_cast<Index>(ids.size());
  if (static_cast<Index>(table.rows.size()) != n)
    throw ShapeError("weight file '" + path.string() + "' has " + std::to_string(table.rows.size()) +
                     " rows for " + std::to_string(n) + " units");
  MatrixXd w(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) w(i, j) = csv::to_double(table.rows[i][j], table.line_numbers[i]);
  return w;
}

std::filesystem::path write_weights(const WeightScheme& w, const std::filesystem::path& dir, const std::string& stem) {
  if (!w.time_varying()) {
    auto p = dir / (stem + ".csv");
    write_weight_csv(p, w.mats.front(), w.unit_ids);
    return p;
  }
  nlohmann::ordered_json manifest;
  manifest["kind"] = "time_varying";
  manifest["row_standardized"] = w.row_standardized;
  manifest["periods"] = nlohmann::json::array();
  for (std::size_t t = 0; t < w.mats.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "_t%03zu.csv", t);
    std::string file = stem + name;
    write_weight_csv(dir / file, w.mats[t], w.unit_ids);
    manifest["periods"].push_back(file);
  }
  auto p = dir / (stem + ".json");
  std::ofstream out(p);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << manifest.dump(2) << '\n';
  return p;
}

std::vector<MatrixXd> read_matrices(const std::filesystem::path& path, std::vector<std::string>& ids,
                                    bool* row_standardized) {
  if (!std::filesystem::exists(path)) throw IoError("weights file not found: " + path.string());
  std::vector<MatrixXd> mats;
  ids.clear();
  if (row_standardized) *row_standardized = false;
  if (path.extension() != ".json") {
    mats.push_back(read_weight_csv(path, ids));
    return mats;
  }
  std::ifstream in(path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid weights manifest: ") + e.what(), 0);
  }
  if (!manifest.contains("periods") || !manifest["periods"].is_array())
    throw ConfigError("weights manifest lacks a 'periods' array");
  for (const auto& f : manifest["periods"]) {
    std::vector<std::string> these;
    mats.push_back(read_weight_csv(path.parent_path() / f.get<std::string>(), these));
    if (ids.empty())
      ids = these;
    else if (these != ids)
      throw LabelError("period files disagree on unit labels");
  }
  if (mats.empty()) throw ConfigError("weights manifest lists no periods");
  if (row_standardized) *row_standardized = manifest.value("row_standardized", false);
  return mats;
}

WeightScheme read_weights(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  bool standardized = false;
  auto mats = read_matrices(path, ids, &standardized);
  WeightScheme s = path.extension() == ".json" ? WeightScheme::per_period(std::move(mats), std::move(ids))
                                               : WeightScheme::fixed_matrix(std::move(mats.front()), std::move(ids));
  // A dense file whose nonzero rows all sum to one is taken as standardized.
  bool rows_one = true;
  for (const auto& m : s.mats)
    for (Index i = 0; i < m.rows(); ++i) {
      const double r = m.row(i).sum();
      if (r != 0.0 && std::fabs(r - 1.0) > 1e-10) rows_one = false;
    }
  s.row_standardized = standardized || rows_one;
  return s;
}

std::vector<UnitPair> read_pairs(const std::filesystem::path& path) {
  auto table = csv::read(path);
  if (table.header.size() < 2) throw ParseError("adjacency file needs two columns", 1);
  std::vector<UnitPair> pairs;
  for (const auto& r : table.rows) pairs.emplace_back(r[0], r[1]);
  return pairs;
}

std::vector<GeoPoint> read_coordinates(const std::filesystem::path& path, std::vector<std::string>& ids) {
  auto table = csv::read(path);
  const auto cu = table.column("unit"), cla = table.column("lat"), clo = table.column("lon");
  std::vector<GeoPoint> pts;
  ids.clear();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ids.push_back(table.rows[r][cu]);
    pts.push_back({csv::to_double(table.rows[r][cla], table.line_numbers[r]),
                   csv::to_double(table.rows[r][clo], table.line_numbers[r])});
  }
  return pts;
}

}  // namespace spdyn
