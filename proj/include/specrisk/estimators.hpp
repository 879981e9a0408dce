#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "specrisk/models.hpp"

namespace specrisk {

// Output of the ridge-penalized maximum-likelihood fit. The objective is the
// mean negative log-likelihood plus (tau/2)|theta|^2.
struct FitResult {
  Eigen::VectorXd theta_hat;
  double tau = 0.0;
  double objective = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;  // penalized gradient norm at exit
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each accepted step
};

struct FitOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;       // stopping rule on the penalized gradient norm
  bool force_iterative = false;  // bypass the linear closed form (cross-checks)
};

// fit minimizes M_n(theta) + (tau/2)|theta|^2. The linear model is solved in
// closed form, (X'X/n + tau*v*I) theta = X'y/n where v is the effective noise
// variance carried by the log-likelihood scale; the other models run damped
// Newton with an Armijo line search from theta = 0, retrying from five random
// starts only when that fails to converge. tau <= 0 throws SingularSystem.
FitResult fit(const ModelInstance& model, const Dataset& data, double tau,
              const FitOptions& options = {});

// Exact terms of the error expansion
//   theta* - theta_hat = V0 (V1 + V2 + B0),
// with A = F_hat + tau I built from the per-sample scores at theta*:
//   V0 = (d2M(theta*) + tau I)^{-1} A,   V1 = A^{-1} dM(theta*),
//   V2 = A^{-1} R,                       B0 = A^{-1} tau theta*,
// and R the Taylor remainder dM(theta_hat) - dM(theta*) - d2M(theta*) delta.
struct DecompositionTerms {
  Eigen::MatrixXd V0;
  Eigen::VectorXd V1;  // score-driven part
  Eigen::VectorXd V2;  // Taylor-remainder part
  Eigen::VectorXd B0;  // penalty bias part
  Eigen::VectorXd R;   // gradient expansion remainder (identically 0, linear model)
  double reconstruction_error = 0.0;  // | (theta*-theta_hat) - V0(V1+V2+B0) |
  double condition_estimate = 0.0;    // upper estimate of cond(F_hat + tau I)
  double principal_term = 0.0;        // tr((F_hat + tau I)^{-1} F*) / n
};

DecompositionTerms decompose(const ModelInstance& model, const Dataset& data,
                             const FitResult& fit_result, const Eigen::MatrixXd& f_star);

// (theta_hat - theta_star)' F* (theta_hat - theta_star). F* must be symmetric
// positive definite (NotSymmetric / NotPositiveDefinite otherwise).
double weighted_risk(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_star,
                     const Eigen::MatrixXd& f_star);

// Monte Carlo average of (g_theta_hat(x) - g_theta*(x))^2 over fresh covariates.
double prediction_risk(const ModelInstance& model, const Eigen::VectorXd& theta_hat,
                       int mc_samples, std::uint64_t seed);

// The fitted criterion itself, exposed so optimizer behavior can be audited.
double penalized_objective(const ModelInstance& model, const Dataset& data,
                           const Eigen::VectorXd& theta, double tau);

enum class TauSchedule {
  Decaying,    // tau = max(1e-6, p^{-1/2}/10); the limiting penalty is 0
  Fixed,       // constant tau at every grid point
  MatchGamma,  // tau = gamma at every grid point
};

struct SweepOptions {
  TauSchedule schedule = TauSchedule::Decaying;
  double tau_value = 0.0;  // consumed by TauSchedule::Fixed
  int reps = 10;
  int prediction_samples = 2000;
  int fisher_samples = 200000;  // Monte Carlo budget when F* has no closed form
  unsigned threads = 0;         // 0 = hardware default
};

struct RiskRow {
  double gamma = 0.0;
  double tau = 0.0;
  int p = 0;
  int n = 0;
  int rep = 0;
  double weighted_risk = 0.0;
  double variance_part = 0.0;  // |V0 (V1 + V2)|^2 weighted by F*
  double bias_part = 0.0;      // |V0 B0|^2 weighted by F*
  double prediction_risk = 0.0;
  double analytic_h = 0.0;     // limiting transform for this (gamma, tau) point
  double principal_term = 0.0;
};

struct ColumnStat {
  double mean = 0.0;
  double stddev = 0.0;  // population convention
};

// Per-gamma aggregate over the repetitions, with the raw rows retained.
struct RiskReport {
  double gamma = 0.0;
  double tau = 0.0;
  int p = 0;
  int n = 0;
  int reps = 0;
  double analytic_h = 0.0;
  std::vector<RiskRow> rows;
  ColumnStat weighted_risk, variance_part, bias_part, prediction_risk, principal_term;
};

// Risk-vs-gamma sweep at fixed p: for each gamma, n = round(p/gamma), reps
// datasets are generated, fitted and decomposed, and the analytic limit of h
// is attached as overlay. F* is computed once and frozen for the whole sweep;
// the overlay measure is the spectrum of F*^{-1} (a point mass for the linear
// model). With the decaying schedule the grid must exclude gamma = 1.
std::vector<RiskReport> descent_sweep(ModelKind kind, const std::vector<double>& gammas, int p,
                                      const SweepOptions& options, std::uint64_t seed);

}  // namespace specrisk
