#pragma once

#include <Eigen/Dense>

namespace specrisk {

// Operator (spectral) norm of a symmetric matrix: max |eigenvalue|.
// Small matrices go straight to the symmetric eigensolver; larger ones use
// power iteration with a deterministic start vector and fall back to the
// eigensolver if the iteration stalls (e.g. near-tied extreme eigenvalues).
double sym_opnorm(const Eigen::MatrixXd& a, double rel_tol = 1e-9, int max_iters = 2000);

}  // namespace specrisk
