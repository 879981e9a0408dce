#include "specrisk/opnorm.hpp"

#include <cmath>
#include <cstdint>

#include "specrisk/rng.hpp"

namespace specrisk {

double sym_opnorm(const Eigen::MatrixXd& a, double rel_tol, int max_iters) {
  const Eigen::Index p = a.rows();
  if (p == 0) return 0.0;
  if (p == 1) return std::abs(a(0, 0));

  if (p <= 32) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  // Deterministic start: hash the index so the vector is unlikely to be
  // orthogonal to the top eigenspace.
  SplitMix64 rng(0x5eedbeefULL);
  Eigen::VectorXd v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = rng.normal();
  v.normalize();

  double est = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = a.selfadjointView<Eigen::Lower>() * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double prev = est;
    est = norm;
    v = w / norm;
    if (it > 0 && std::abs(est - prev) <= rel_tol * std::max(1.0, est)) return est;
  }

  if (p <= 2048) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return est;
}

}  // namespace specrisk
