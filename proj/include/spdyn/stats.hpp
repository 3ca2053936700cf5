#pragma once

namespace spdyn::stats {

double normal_cdf(double x);
double normal_quantile(double p);
double student_t_quantile(double p, double dof);
// Upper tail P(X >= x) of a chi-squared variable with dof degrees of freedom.
double chi2_sf(double x, double dof);
// Two-sided normal p-value for a z statistic.
double two_sided_p(double z);

}  // namespace spdyn::stats
