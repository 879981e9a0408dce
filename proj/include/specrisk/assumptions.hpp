#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "specrisk/estimators.hpp"
#include "specrisk/models.hpp"

namespace specrisk {

// Cross-term statistic (1/n^2) sum_{i<j} J_i' S J_j with S built from the
// penalized score covariance, S = (F_hat + tau I)^{-1} F* (F_hat + tau I)^{-1}.
struct CrossTermResult {
  double mean = 0.0;
  double stddev = 0.0;               // population convention over the reps
  std::vector<double> values;        // one statistic per repetition
  double mean_unordered = 0.0;       // the i != j variant, exactly twice mean
};

CrossTermResult cross_term(const ModelInstance& model, int n, double tau, int reps,
                           std::uint64_t seed, unsigned threads = 0);

// Same, with the Fisher weight supplied by the caller (callers sweeping many
// sample sizes at one p can freeze F* once instead of re-estimating it).
CrossTermResult cross_term(const ModelInstance& model, int n, double tau, int reps,
                           std::uint64_t seed, unsigned threads, const Eigen::MatrixXd& f_star);

// The statistic on one fixed dataset; cross_term averages this over fresh
// draws. Exposed so tests can check it against the direct O(n^2) double sum.
double cross_term_statistic(const ModelInstance& model, const Dataset& data, double tau,
                            const Eigen::MatrixXd& f_star);

// Fisher-residual concentration: per-rep operator norms of
// W_hat = d2M(theta*) - F_hat next to the matrix Bernstein envelope
// 2p exp(-n t^2/2 / (nu^2 + kappa t/3)).
struct FisherResidualReport {
  std::vector<double> opnorms;     // |W_hat| per repetition
  double nu_sq = 0.0;              // |mean w(z)^2| over the pooled samples
  double kappa = 0.0;              // max |w(z)| over the pooled samples
  Eigen::MatrixXd mean_w;          // pooled sample mean of w(z)
  std::vector<double> t_grid;
  std::vector<double> exceedance;  // empirical frequency of |W_hat| >= t
  std::vector<double> envelope;    // Bernstein bound at the same t
};

FisherResidualReport fisher_residual(const ModelInstance& model, int n, int reps,
                                     std::uint64_t seed, unsigned threads = 0);

// Random-search estimates of the third-derivative envelopes: for each
// parameter index j, beta_j is the largest observed |U^j(theta, z)|_op over
// theta_samples x z_samples draws and alpha_j the largest finite-difference
// Lipschitz quotient at paired theta perturbations. Both are lower bounds of
// the defining suprema. Returns (sum of beta_j^2, sum of alpha_j^2); both are
// identically zero for the linear model.
struct DerivativeSums {
  double sum_beta_sq = 0.0;
  double sum_alpha_sq = 0.0;
};

DerivativeSums derivative_sums(const ModelInstance& model, int theta_samples, int z_samples,
                               std::uint64_t seed, unsigned threads = 0);

// Operator norm of the third-derivative slice at index j. For the additive
// family the slice is rank one on its block, so the norm comes out in closed
// form without assembling the p x p matrix; other families fall back to the
// assembled slice.
double third_derivative_opnorm(const ModelInstance& model, int j, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& x, double y);

// s_p = max of the four ratio-scaled components, with the argmax label.
// Order: nu^2 log(p)/p, (kappa log p)^2/p^2, sum alpha^2, sum beta^2.
struct SpResult {
  double value = 0.0;
  int argmax = 0;
  std::string label;
};

SpResult s_p_report(const std::array<double, 4>& components);

// |V2|^2 weighted by F*, from the error expansion of a fitted estimate.
double taylor_residual_norm(const ModelInstance& model, const Dataset& data,
                            const FitResult& fit_result, const Eigen::MatrixXd& f_star);

// One-stop summary used by the CLI: every Assumption quantity for one (p, n).
struct AssumptionReport {
  int p = 0;
  int n = 0;
  int num_submodels = 0;  // 0 unless the model is additive
  double nu_sq = 0.0;
  double kappa = 0.0;
  double sum_beta_sq = 0.0;
  double sum_alpha_sq = 0.0;
  double s_p = 0.0;
  std::string s_p_source;
  double cross_term_mean = 0.0;
  double cross_term_std = 0.0;
  double fisher_residual_opnorm = 0.0;  // mean |W_hat| over the reps
  double bernstein_bound_prob = 0.0;    // envelope evaluated at that mean
};

struct AssumptionConfig {
  double tau = 0.01;
  int reps = 10;
  int derivative_theta_samples = 100;
  int derivative_z_samples = 100;
  unsigned threads = 0;
};

AssumptionReport assumption_report(const ModelInstance& model, int n,
                                   const AssumptionConfig& config, std::uint64_t seed);

}  // namespace specrisk
