#include "spdyn/pipeline.hpp"

#include "spdyn/errors.hpp"
#include "spdyn/parallel.hpp"

namespace spdyn {

WeightScheme window_weights(const WeightScheme& w, const PanelDataset& panel, const TransformedPanel& tp) {
  WeightScheme out = align_to(w, panel.unit_ids);
  if (!out.time_varying()) return out;
  if (out.periods() == tp.t_eff) return out;
  if (out.periods() == panel.t()) return restrict_periods(out, tp.first_level_index, tp.t_eff);
  throw ShapeError("time-varying weights have " + std::to_string(out.periods()) + " periods; expected " +
                   std::to_string(panel.t()) + " or " + std::to_string(tp.t_eff));
}

FitResult fit(const PanelDataset& panel, const WeightScheme& w, const FitOptions& options) {
  FitResult r;
  r.tp = build_transformed(panel, options.transform);
  r.w = window_weights(w, panel, r.tp);
  r.fb = build_factor_basis(r.tp, options.factors);
  r.instruments = build_instruments(r.tp, r.w, r.fb, options.instruments);
  r.designs = build_designs(r.tp, r.w);
  r.names = coefficient_names(r.tp.covariate_names);

  if (options.estimator != Estimator::mean_group) {
    r.pooled = estimate_pooled(r.designs, r.instruments, options.pooled);
    r.fb.r_y = r.pooled->r_y;
  }
  if (options.estimator != Estimator::pooled) {
    r.units.resize(r.designs.size());
    parallel::for_each_index(r.designs.size(), [&](std::size_t i) {
      r.units[i] = estimate_unit_model(r.designs[i], r.instruments[i]);
    });
    r.mg = trimmed_mean_group(r.units, options.trim_fraction);
  }
  return r;
}

}  // namespace spdyn
