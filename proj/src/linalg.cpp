#include "spdyn/linalg.hpp"

#include <cmath>

#include "spdyn/errors.hpp"

namespace spdyn::linalg {

double singular_ratio(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  double smax = s(0);
  if (smax <= 0.0) return 0.0;
  return s(s.size() - 1) / smax;
}

MatrixXd solve_spd(const MatrixXd& a, const MatrixXd& b, const std::string& what, double rel_tol) {
  Eigen::LDLT<MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SingularError(what + ": factorization failed");
  VectorXd d = ldlt.vectorD();
  double dmax = d.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() <= rel_tol * dmax)
    throw SingularError(what + " is singular or not positive definite");
  return ldlt.solve(b);
}

MatrixXd least_squares(const MatrixXd& x, const MatrixXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

MatrixXd project(const MatrixXd& basis, const MatrixXd& z) {
  if (basis.cols() == 0) return MatrixXd::Zero(z.rows(), z.cols());
  return basis * least_squares(basis, z);
}

bool all_finite(const MatrixXd& a) { return a.allFinite(); }

}  // namespace spdyn::linalg
