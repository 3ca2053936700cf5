#include "spdyn/mgiv.hpp"

#include <algorithm>
#include <cmath>

#include "spdyn/csv.hpp"
#include "spdyn/errors.hpp"

namespace spdyn {

namespace {

MgEstimate aggregate(const std::vector<UnitEstimate>& units, double trim) {
  if (units.empty()) throw InsufficientUnitsError("no unit estimates to average");
  if (!(trim >= 0.0 && trim < 0.5)) throw DomainError("trim fraction must lie in [0, 0.5)");
  const Index n = static_cast<Index>(units.size());
  const Index p = units.front().theta.size();

  // keep(i, c): unit i contributes to coefficient c.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep(n, p);
  MatrixXd theta(n, p);
  for (Index i = 0; i < n; ++i) {
    const auto& u = units[static_cast<std::size_t>(i)];
    if (u.theta.size() != p) throw ShapeError("unit estimates differ in length");
    for (Index c = 0; c < p; ++c) {
      theta(i, c) = u.theta(c);
      keep(i, c) = u.coef(c).has_value() && std::isfinite(u.theta(c));
    }
  }

  MgEstimate mg;
  mg.theta_bar.resize(p);
  mg.n_used.assign(static_cast<std::size_t>(p), 0);
  for (Index c = 0; c < p; ++c) {
    std::vector<Index> idx;
    for (Index i = 0; i < n; ++i)
      if (keep(i, c)) idx.push_back(i);
    const auto drop = static_cast<std::size_t>(std::floor(trim * static_cast<double>(idx.size())));
    if (drop > 0) {
      std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return theta(a, c) < theta(b, c); });
      for (std::size_t r = 0; r < drop; ++r) {
        keep(idx[r], c) = false;
        keep(idx[idx.size() - 1 - r], c) = false;
      }
    }
    Index used = 0;
    double sum = 0.0;
    for (Index i = 0; i < n; ++i)
      if (keep(i, c)) {
        sum += theta(i, c);
        ++used;
      }
    if (used < 2)
      throw InsufficientUnitsError("coefficient " + std::to_string(c) + " has " + std::to_string(used) +
                                   " contributing units");
    mg.n_used[static_cast<std::size_t>(c)] = used;
    // Second pass removes the rounding of the first, so equal inputs average exactly.
    const double first = sum / static_cast<double>(used);
    double resid = 0.0;
    for (Index i = 0; i < n; ++i)
      if (keep(i, c)) resid += theta(i, c) - first;
    mg.theta_bar(c) = first + resid / static_cast<double>(used);
  }

  MatrixXd a = MatrixXd::Zero(n, p);
  for (Index c = 0; c < p; ++c) {
    const double m = static_cast<double>(mg.n_used[static_cast<std::size_t>(c)]);
    const double scale = 1.0 / std::sqrt(m * (m - 1.0));
    for (Index i = 0; i < n; ++i)
      if (keep(i, c)) a(i, c) = (theta(i, c) - mg.theta_bar(c)) * scale;
  }
  mg.vcov = a.transpose() * a;
  return mg;
}

}  // namespace

MgEstimate mean_group(const std::vector<UnitEstimate>& units) { return aggregate(units, 0.0); }

MgEstimate trimmed_mean_group(const std::vector<UnitEstimate>& units, double trim_fraction) {
  return aggregate(units, trim_fraction);
}

void write_unit_table(const std::filesystem::path& path, const std::vector<std::string>& unit_ids,
                      const std::vector<UnitEstimate>& units) {
  if (unit_ids.size() != units.size()) throw ShapeError("unit labels and estimates differ in count");
  const Index p = units.empty() ? 2 : units.front().theta.size();
  std::vector<std::string> header{"unit", "delta", "psi"};
  for (Index l = 1; l <= p - 2; ++l) header.push_back("beta_" + std::to_string(l));
  header.push_back("excluded_spatial");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < units.size(); ++i) {
    std::vector<std::string> rec{unit_ids[i]};
    for (Index c = 0; c < p; ++c) {
      auto v = units[i].coef(c);
      rec.push_back(v ? csv::format_double(*v) : "NA");
    }
    rec.push_back(units[i].excluded_spatial ? "true" : "false");
    rows.push_back(std::move(rec));
  }
  csv::write(path, header, rows);
}

}  // namespace spdyn
