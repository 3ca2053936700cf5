#include "spdyn/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "spdyn/errors.hpp"

namespace spdyn::stats {

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<>(), x); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile requires p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("t quantile requires p in (0,1)");
  if (!(dof > 0.0)) throw DomainError("t dof must be positive");
  return boost::math::quantile(boost::math::students_t_distribution<>(dof), p);
}

double chi2_sf(double x, double dof) {
  if (!(dof > 0.0)) throw DomainError("chi-squared dof must be positive");
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<>(dof), x));
}

double two_sided_p(double z) {
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(),
                                                        std::fabs(z)));
}

}  // namespace spdyn::stats
