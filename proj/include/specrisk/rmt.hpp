#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "specrisk/errors.hpp"
#include "specrisk/measure.hpp"
#include "specrisk/stieltjes.hpp"

namespace specrisk {

enum class ColumnDist { StandardGaussian, TruncatedGaussian };

struct RandomMatrixSpec {
  int p = 0;
  int n = 0;
  ColumnDist dist = ColumnDist::StandardGaussian;
  double trunc_bound = 1.0;  // only read for TruncatedGaussian
  Eigen::MatrixXd shift;     // optional symmetric p x p term added to the Gram matrix
  std::uint64_t seed = 0;
};

struct EmpiricalSpectrum {
  std::vector<double> eigenvalues;  // ascending
  int p = 0;
  double min_positive = 0.0;  // smallest eigenvalue above 1e-10, or 0 if none
};

// p x n factor with iid isotropic entries scaled by 1/sqrt(p). Truncated
// entries are divided by their truncated standard deviation first, so the
// entry variance is exactly 1/p for either column law.
Eigen::MatrixXd sample_factor(const RandomMatrixSpec& spec);

// Gram matrix of the factor plus the optional shift: T*T^T + E.
Eigen::MatrixXd sample_matrix(const RandomMatrixSpec& spec);

// Eigen-decomposes a symmetric matrix (relative asymmetry above 1e-10 raises
// NotSymmetric; below that the input is symmetrized before decomposition).
EmpiricalSpectrum empirical_spectrum(const Eigen::MatrixXd& q);

// (1/p) * sum of 1/lambda over eigenvalues with lambda >= cutoff.
double truncated_inverse_trace(const EmpiricalSpectrum& spectrum, double cutoff);

struct MpVerifyReport {
  int p = 0;
  int n = 0;
  int reps = 0;
  double gamma = 0.0;
  double tau_bar = 0.0;
  double mc_mean = 0.0;
  double mc_std = 0.0;  // population std over replicates
  double analytic = 0.0;
  double gap = 0.0;
  double cutoff = 0.0;  // cutoff used in the last replicate (0 unless zero modes are dropped)
  std::vector<double> per_rep;
};

// Monte Carlo check that the truncated inverse trace of
//   Q = T*T^T + (n/p) * tau_bar * diag(xi-quantiles)
// converges to the analytic edge limit. Zero modes are dropped (cutoff at the
// smallest eigenvalue above 1e-8) exactly when tau_bar = 0 and gamma > 1,
// where the Gram matrix is rank deficient.
MpVerifyReport verify_mp_limit(const SpectralMeasure& xi, const AsymptoticRegime& regime, int p,
                               int reps, std::uint64_t seed, int threads = 1,
                               ColumnDist dist = ColumnDist::StandardGaussian,
                               double trunc_bound = 1.0);

}  // namespace specrisk
