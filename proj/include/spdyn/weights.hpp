#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spdyn/linalg.hpp"

namespace spdyn {

enum class WeightKind { fixed, time_varying };

// Spatial weights with w(i, j) the link from unit j into unit i. Static schemes
// hold one matrix; time-varying schemes hold one matrix per period.
struct WeightScheme {
  WeightKind kind = WeightKind::fixed;
  std::vector<MatrixXd> mats;
  bool row_standardized = false;
  std::vector<std::string> unit_ids;

  static WeightScheme fixed_matrix(MatrixXd w, std::vector<std::string> ids);
  static WeightScheme per_period(std::vector<MatrixXd> ws, std::vector<std::string> ids);

  Index n() const { return static_cast<Index>(unit_ids.size()); }
  Index periods() const { return static_cast<Index>(mats.size()); }
  bool time_varying() const { return kind == WeightKind::time_varying; }
  // Matrix in force at period t (the single matrix for static schemes).
  const MatrixXd& at(Index t) const { return time_varying() ? mats.at(static_cast<std::size_t>(t)) : mats.front(); }

  // Zero diagonal, nonnegative finite entries, consistent shapes.
  void validate() const;
};

struct NetworkStats {
  double density = 0.0;         // share of the N(N-1) off-diagonal cells that are links
  double avg_out_links = 0.0;   // links per unit
  std::vector<double> in_degree, out_degree;  // averaged over periods if time-varying
  std::vector<std::string> isolated_units;    // all-zero rows in every period
  double links = 0.0;           // directed links, averaged over periods if time-varying
};

// A cell counts as a link when its weight exceeds cutoff.
NetworkStats network_stats(const WeightScheme& w, double cutoff = 0.0);

using UnitPair = std::pair<std::string, std::string>;

WeightScheme contiguity_weights(std::span<const UnitPair> pairs, const std::vector<std::string>& units,
                                bool standardize = false);

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

inline constexpr double kEarthRadiusMiles = 3958.8;

// Great-circle distance in miles.
double haversine_miles(GeoPoint a, GeoPoint b);

// Percentile (0..100) with linear interpolation between order statistics.
double percentile(std::vector<double> values, double pct);

// w = 1/d for d <= c, with c the requested percentile of the unique pairwise distances.
WeightScheme inverse_distance_weights(const std::vector<std::string>& units, std::span<const GeoPoint> coords,
                                      double percentile_cutoff, bool standardize = false);

enum class FlowMode { time_averaged, time_varying };
// proportional: w ~ flow. inverse: the literal 1/flow reading (zero flows stay zero).
enum class FlowTransform { proportional, inverse };

// flows[t](i, j) is the inflow from j into i in period t.
WeightScheme flow_weights(const std::vector<MatrixXd>& flows, const std::vector<std::string>& units,
                          FlowMode mode, FlowTransform transform = FlowTransform::proportional,
                          bool standardize = true);

WeightScheme row_standardize(const WeightScheme& w);

// Static: W z_t per period. Time-varying: column t uses W_t.
MatrixXd spatial_lag(const WeightScheme& w, const MatrixXd& series);

// Reorders rows/columns to follow units; throws LabelError on mismatch.
WeightScheme align_to(const WeightScheme& w, const std::vector<std::string>& units);

// Keeps periods [first, first + count) of a time-varying scheme; static schemes pass through.
WeightScheme restrict_periods(const WeightScheme& w, Index first, Index count);

MatrixXd binarize(const MatrixXd& w, double cutoff = 0.0);

// Dense CSV: header of unit labels, N rows of N weights in header order.
void write_weight_csv(const std::filesystem::path& path, const MatrixXd& w, const std::vector<std::string>& ids);
MatrixXd read_weight_csv(const std::filesystem::path& path, std::vector<std::string>& ids);

// Writes <stem>.csv for static schemes, or <stem>_tNNN.csv per period plus a
// JSON manifest <stem>.json for time-varying schemes. Returns the primary file.
std::filesystem::path write_weights(const WeightScheme& w, const std::filesystem::path& dir, const std::string& stem);
// Dense CSV (one matrix) or JSON manifest (one per period), without validation.
std::vector<MatrixXd> read_matrices(const std::filesystem::path& path, std::vector<std::string>& ids,
                                    bool* row_standardized = nullptr);
// Accepts a dense CSV or a time-varying JSON manifest.
WeightScheme read_weights(const std::filesystem::path& path);

// Two-column CSV of unordered unit pairs (adjacency list).
std::vector<UnitPair> read_pairs(const std::filesystem::path& path);
// CSV with columns unit,lat,lon.
std::vector<GeoPoint> read_coordinates(const std::filesystem::path& path, std::vector<std::string>& ids);

}  // namespace spdyn
