#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spdyn/iv.hpp"
#include "spdyn/linalg.hpp"

namespace spdyn {

struct MgEstimate {
  VectorXd theta_bar;
  MatrixXd vcov;               // dispersion of unit estimates over the number of contributors
  std::vector<Index> n_used;   // contributing units per coefficient

  VectorXd se() const { return vcov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

// Coefficient-wise mean over the units that report the coefficient (the
// spatial-lag entry skips isolated units). With d_ip the deviation of unit i
// from the mean of coefficient p (zero when unit i does not contribute), the
// covariance is sum_i a_ip a_iq with a_ip = d_ip / sqrt(n_p (n_p - 1)). Without
// exclusions this is the N - 1 sample covariance divided by N.
MgEstimate mean_group(const std::vector<UnitEstimate>& units);

// Drops floor(trim_fraction * n_p) units from each tail of every coefficient
// before averaging. trim_fraction = 0 reproduces mean_group.
MgEstimate trimmed_mean_group(const std::vector<UnitEstimate>& units, double trim_fraction);

// CSV `unit,delta,psi,beta_1..k,excluded_spatial`, NA for an absent psi.
void write_unit_table(const std::filesystem::path& path, const std::vector<std::string>& unit_ids,
                      const std::vector<UnitEstimate>& units);

}  // namespace spdyn
