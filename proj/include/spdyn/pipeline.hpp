#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spdyn/factors.hpp"
#include "spdyn/iv.hpp"
#include "spdyn/mgiv.hpp"
#include "spdyn/panel.hpp"
#include "spdyn/weights.hpp"

namespace spdyn {

enum class Estimator { pooled, mean_group, both };

struct FitOptions {
  TransformOptions transform;
  FactorOptions factors;
  InstrumentSpec instruments;
  PooledOptions pooled;
  Estimator estimator = Estimator::both;
  double trim_fraction = 0.0;  // mean-group trimming
};

struct FitResult {
  TransformedPanel tp;
  WeightScheme w;  // aligned to the estimation window
  FactorBasis fb;
  std::vector<InstrumentSet> instruments;
  std::vector<UnitDesign> designs;
  std::vector<UnitEstimate> units;  // filled for mean-group fits
  std::optional<PooledEstimate> pooled;
  std::optional<MgEstimate> mg;
  std::vector<std::string> names;  // coefficient names
};

// Time-varying weights may cover either all T periods of the panel or only the
// estimation window.
WeightScheme window_weights(const WeightScheme& w, const PanelDataset& panel, const TransformedPanel& tp);

FitResult fit(const PanelDataset& panel, const WeightScheme& w, const FitOptions& options = {});

}  // namespace spdyn
