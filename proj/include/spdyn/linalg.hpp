#pragma once

#include <Eigen/Dense>
#include <string>

namespace spdyn {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace linalg {

// Ratio of smallest to largest singular value; 0 for an all-zero matrix.
double singular_ratio(const MatrixXd& a);

// Solves a x = b for symmetric positive (semi)definite a. Throws SingularError
// when the smallest pivot is below rel_tol times the largest.
MatrixXd solve_spd(const MatrixXd& a, const MatrixXd& b, const std::string& what,
                   double rel_tol = 1e-12);

// Least-squares coefficients of y on the columns of x (column-pivoting QR).
MatrixXd least_squares(const MatrixXd& x, const MatrixXd& y);

// Orthogonal projection of z onto the column span of basis.
MatrixXd project(const MatrixXd& basis, const MatrixXd& z);

bool all_finite(const MatrixXd& a);

}  // namespace linalg
}  // namespace spdyn
