#include "specrisk/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "specrisk/errors.hpp"
#include "specrisk/opnorm.hpp"
#include "specrisk/parallel.hpp"
#include "specrisk/rng.hpp"
#include "specrisk/stieltjes.hpp"

namespace specrisk {

namespace {

// Derived-seed streams used inside a sweep. Values are spaced so that the
// additive seed arithmetic cannot alias streams drawn inside the factories.
constexpr std::uint64_t kModelStream = 101;
constexpr std::uint64_t kFisherStream = 211;
constexpr std::uint64_t kDataStreamBase = 1000;
constexpr std::uint64_t kPredictStreamBase = 500000;
constexpr std::uint64_t kRestartStreamBase = 7000000;

// Objective, gradient and reusable batch quantities at one theta.
struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd grad;      // penalized gradient dM + tau theta
  Eigen::VectorXd residual;  // y - g(theta, x_i)
  Eigen::MatrixXd gradients; // n x p rows dg(theta, x_i)
};

ObjectiveEval evaluate(const ModelInstance& model, const Dataset& data,
                       const Eigen::VectorXd& theta, double tau) {
  const auto n = data.x.rows();
  const double v = model.sigma_eff_sq();
  ObjectiveEval out;
  out.residual = data.y - mean_value_batch(model, theta, data.x);
  out.gradients = mean_gradient_batch(model, theta, data.x);
  out.value = out.residual.squaredNorm() / (2.0 * n * v) + 0.5 * tau * theta.squaredNorm();
  out.grad = -(out.gradients.transpose() * out.residual) / (n * v) + tau * theta;
  return out;
}

// d2M(theta) + tau I, reusing the batch gradients from an ObjectiveEval.
Eigen::MatrixXd penalized_hessian(const ModelInstance& model, const Dataset& data,
                                  const Eigen::VectorXd& theta, double tau,
                                  const ObjectiveEval& eval) {
  const auto n = data.x.rows();
  const double v = model.sigma_eff_sq();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(model.p, model.p);
  h.selfadjointView<Eigen::Lower>().rankUpdate(eval.gradients.transpose(), 1.0 / (n * v));
  h = h.selfadjointView<Eigen::Lower>();
  add_weighted_mean_hessians(model, theta, data.x, -eval.residual / (n * v), h);
  h.diagonal().array() += tau;
  return h;
}

FitResult fit_linear_closed_form(const ModelInstance& model, const Dataset& data, double tau) {
  const auto n = data.x.rows();
  const double v = model.sigma_eff_sq();
  const Eigen::MatrixXd gram =
      data.x.transpose() * data.x / static_cast<double>(n) +
      tau * v * Eigen::MatrixXd::Identity(model.p, model.p);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw SingularSystem("ridge normal equations could not be factorized");
  }
  FitResult out;
  out.theta_hat = ldlt.solve(data.x.transpose() * data.y / static_cast<double>(n));
  out.tau = tau;
  out.iterations = 0;
  const ObjectiveEval eval = evaluate(model, data, out.theta_hat, tau);
  out.objective = eval.value;
  out.grad_norm = eval.grad.norm();
  out.converged = true;
  out.objective_trace = {eval.value};
  return out;
}

FitResult fit_newton(const ModelInstance& model, const Dataset& data, double tau,
                     const FitOptions& options, const Eigen::VectorXd& start) {
  FitResult out;
  out.tau = tau;
  Eigen::VectorXd theta = start;
  ObjectiveEval eval = evaluate(model, data, theta, tau);
  out.objective_trace.push_back(eval.value);
  int iters = 0;
  while (iters < options.max_iterations && eval.grad.norm() > options.tolerance) {
    const Eigen::MatrixXd hess = penalized_hessian(model, data, theta, tau, eval);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd direction;
    if (ldlt.info() == Eigen::Success) direction = ldlt.solve(-eval.grad);
    // Fall back to steepest descent when the local curvature is unusable.
    if (ldlt.info() != Eigen::Success || eval.grad.dot(direction) >= 0.0) {
      direction = -eval.grad;
    }
    const double slope = eval.grad.dot(direction);
    double step = 1.0;
    bool accepted = false;
    while (step >= 0x1.0p-60) {
      const Eigen::VectorXd candidate = theta + step * direction;
      const ObjectiveEval trial = evaluate(model, data, candidate, tau);
      if (trial.value <= eval.value + 1e-4 * step * slope) {
        theta = candidate;
        eval = trial;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++iters;
    if (!accepted) break;  // line search stalled at roundoff scale
    out.objective_trace.push_back(eval.value);
  }
  out.theta_hat = theta;
  out.objective = eval.value;
  out.iterations = iters;
  out.grad_norm = eval.grad.norm();
  out.converged = out.grad_norm <= options.tolerance;
  return out;
}

}  // namespace

double penalized_objective(const ModelInstance& model, const Dataset& data,
                           const Eigen::VectorXd& theta, double tau) {
  const auto n = data.x.rows();
  const Eigen::VectorXd residual = data.y - mean_value_batch(model, theta, data.x);
  return residual.squaredNorm() / (2.0 * n * model.sigma_eff_sq()) +
         0.5 * tau * theta.squaredNorm();
}

FitResult fit(const ModelInstance& model, const Dataset& data, double tau,
              const FitOptions& options) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw SingularSystem("penalty must be strictly positive");
  }
  if (data.x.rows() < 1 || data.x.cols() != model.ambient_dim()) {
    throw std::invalid_argument("dataset shape does not match the model");
  }
  if (model.kind == ModelKind::LinearM1 && !options.force_iterative) {
    return fit_linear_closed_form(model, data, tau);
  }
  FitResult best = fit_newton(model, data, tau, options, Eigen::VectorXd::Zero(model.p));
  if (best.converged) return best;
  // Zero start failed: retry from a few random points of growing radius and
  // keep the first convergent run, else the best objective seen.
  for (int attempt = 1; attempt <= 5; ++attempt) {
    SplitMix64 rng(split_seed(data.seed, kRestartStreamBase + attempt));
    Eigen::VectorXd start(model.p);
    for (int i = 0; i < model.p; ++i) start(i) = rng.normal();
    start *= 0.9 * model.radius_r * attempt / (5.0 * start.norm());
    FitResult retry = fit_newton(model, data, tau, options, start);
    if (retry.converged) return retry;
    if (retry.objective < best.objective) best = retry;
  }
  return best;
}

DecompositionTerms decompose(const ModelInstance& model, const Dataset& data,
                             const FitResult& fit_result, const Eigen::MatrixXd& f_star) {
  if (!fit_result.converged) {
    throw std::invalid_argument("decompose requires a converged fit");
  }
  if (f_star.rows() != model.p || f_star.cols() != model.p) {
    throw std::invalid_argument("weight matrix dimension mismatch");
  }
  const auto n = data.x.rows();
  const double v = model.sigma_eff_sq();
  const double tau = fit_result.tau;

  const ObjectiveEval at_star = evaluate(model, data, model.theta_star, 0.0);
  const Eigen::VectorXd grad_m = at_star.grad;  // dM(theta*), tau term disabled above

  // Empirical Fisher from the per-sample scores rho_i dg_i / v.
  Eigen::MatrixXd hat_fisher = Eigen::MatrixXd::Zero(model.p, model.p);
  {
    const Eigen::MatrixXd scaled = at_star.residual.asDiagonal() * at_star.gradients;
    hat_fisher.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(),
                                                          1.0 / (n * v * v));
    hat_fisher = hat_fisher.selfadjointView<Eigen::Lower>();
  }

  const double cond = (sym_opnorm(hat_fisher) + tau) / tau;
  if (cond > 1e12) {
    throw IllConditioned("score covariance plus penalty is numerically singular", cond);
  }

  Eigen::MatrixXd curvature = penalized_hessian(model, data, model.theta_star, tau, at_star);
  Eigen::MatrixXd shifted_fisher = hat_fisher;
  shifted_fisher.diagonal().array() += tau;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu_curv(curvature);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_fisher(shifted_fisher);

  DecompositionTerms out;
  out.condition_estimate = cond;
  out.V0 = lu_curv.solve(shifted_fisher);
  out.V1 = lu_fisher.solve(grad_m);

  const Eigen::VectorXd delta = fit_result.theta_hat - model.theta_star;
  if (model.kind == ModelKind::LinearM1) {
    // Quadratic objective: the expansion remainder vanishes identically, so it
    // is pinned to zero instead of being computed as a roundoff difference.
    out.R = Eigen::VectorXd::Zero(model.p);
  } else {
    const ObjectiveEval at_hat = evaluate(model, data, fit_result.theta_hat, 0.0);
    const Eigen::MatrixXd curvature_m = curvature - tau * Eigen::MatrixXd::Identity(model.p, model.p);
    out.R = at_hat.grad - grad_m - curvature_m * delta;
  }
  out.V2 = lu_fisher.solve(out.R);
  out.B0 = lu_fisher.solve(tau * model.theta_star);
  out.reconstruction_error = (-delta - out.V0 * (out.V1 + out.V2 + out.B0)).norm();
  out.principal_term = lu_fisher.solve(f_star).trace() / static_cast<double>(n);
  return out;
}

double weighted_risk(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_star,
                     const Eigen::MatrixXd& f_star) {
  if (theta_hat.size() != theta_star.size() || f_star.rows() != theta_hat.size() ||
      f_star.cols() != theta_hat.size()) {
    throw std::invalid_argument("weighted_risk dimension mismatch");
  }
  const double scale = std::max(1.0, f_star.cwiseAbs().maxCoeff());
  if ((f_star - f_star.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw NotSymmetric("risk weight matrix is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(f_star);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("risk weight matrix is not positive definite");
  }
  const Eigen::VectorXd delta = theta_hat - theta_star;
  return delta.dot(f_star * delta);
}

double prediction_risk(const ModelInstance& model, const Eigen::VectorXd& theta_hat,
                       int mc_samples, std::uint64_t seed) {
  if (mc_samples < 1) throw std::invalid_argument("mc_samples must be positive");
  SplitMix64 rng(seed);
  Eigen::VectorXd x(model.ambient_dim());
  double acc = 0.0;
  for (int s = 0; s < mc_samples; ++s) {
    for (int i = 0; i < x.size(); ++i) x(i) = rng.truncated_normal(model.covariate_bound, 1.0);
    const double diff = mean_value(model, theta_hat, x) - mean_value(model, model.theta_star, x);
    acc += diff * diff;
  }
  return acc / mc_samples;
}

namespace {

ColumnStat column_stat(const std::vector<RiskRow>& rows, double RiskRow::*field) {
  ColumnStat st;
  for (const auto& row : rows) st.mean += row.*field;
  st.mean /= rows.size();
  for (const auto& row : rows) {
    const double d = row.*field - st.mean;
    st.stddev += d * d;
  }
  st.stddev = std::sqrt(st.stddev / rows.size());
  return st;
}

double schedule_tau(TauSchedule schedule, double tau_value, double gamma, int p) {
  switch (schedule) {
    case TauSchedule::Decaying:
      return std::max(1e-6, 0.1 / std::sqrt(static_cast<double>(p)));
    case TauSchedule::Fixed:
      return tau_value;
    case TauSchedule::MatchGamma:
      return gamma;
  }
  throw std::invalid_argument("unknown tau schedule");
}

}  // namespace

std::vector<RiskReport> descent_sweep(ModelKind kind, const std::vector<double>& gammas, int p,
                                      const SweepOptions& options, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("p must be positive");
  if (gammas.empty()) throw std::invalid_argument("gamma grid is empty");
  if (options.reps < 1) throw std::invalid_argument("reps must be at least 1");
  for (double g : gammas) {
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gamma must be positive");
    if (options.schedule == TauSchedule::Decaying && std::abs(g - 1.0) < 1e-9) {
      throw std::invalid_argument(
          "gamma = 1 is outside the decaying-penalty regime; exclude it from the grid");
    }
  }
  if (options.schedule == TauSchedule::Fixed && !(options.tau_value > 0.0)) {
    throw std::invalid_argument("fixed schedule needs tau_value > 0");
  }

  ModelInstance model;
  const std::uint64_t model_seed = split_seed(seed, kModelStream);
  switch (kind) {
    case ModelKind::LinearM1: model = make_linear_model(p, model_seed); break;
    case ModelKind::ExponentialM2: model = make_exponential_model(p, model_seed); break;
    case ModelKind::Additive: model = make_additive_model(p, 0, model_seed); break;
  }

  const Eigen::MatrixXd f_star =
      kind == ModelKind::LinearM1
          ? fisher_matrix(model, 0, 0)
          : fisher_matrix(model, options.fisher_samples, split_seed(seed, kFisherStream));
  weighted_risk(model.theta_star, model.theta_star, f_star);  // validates F* once

  // Overlay measure: spectrum of F*^{-1}, collapsed to its point mass for the
  // linear model whose Fisher matrix is a multiple of the identity.
  SpectralMeasure overlay = SpectralMeasure::dirac(1.0);
  if (kind == ModelKind::LinearM1) {
    overlay = SpectralMeasure::dirac(1.0 / f_star(0, 0));
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(f_star);
    std::vector<double> inv_spectrum(p);
    for (int i = 0; i < p; ++i) {
      inv_spectrum[i] = 1.0 / std::max(eig.eigenvalues()(i), 1e-12);
    }
    std::sort(inv_spectrum.begin(), inv_spectrum.end());
    overlay = SpectralMeasure::empirical(std::move(inv_spectrum));
  }

  const int num_gammas = static_cast<int>(gammas.size());
  std::vector<RiskReport> reports(num_gammas);
  for (int gi = 0; gi < num_gammas; ++gi) {
    RiskReport& rep = reports[gi];
    rep.gamma = gammas[gi];
    rep.tau = schedule_tau(options.schedule, options.tau_value, rep.gamma, p);
    rep.p = p;
    rep.n = static_cast<int>(std::max<long>(1, std::lround(p / rep.gamma)));
    rep.reps = options.reps;
    const double tau_bar = options.schedule == TauSchedule::Decaying ? 0.0 : rep.tau;
    rep.analytic_h = limit_h_at_zero(overlay, AsymptoticRegime(rep.gamma, tau_bar));
    rep.rows.resize(options.reps);
  }

  const std::size_t total = static_cast<std::size_t>(num_gammas) * options.reps;
  parallel_for(total, options.threads, [&](std::size_t job) {
    const int gi = static_cast<int>(job / options.reps);
    const int rep_index = static_cast<int>(job % options.reps);
    RiskReport& rep = reports[gi];
    const Dataset data = generate(model, rep.n, split_seed(seed, kDataStreamBase + job));
    const FitResult fr = fit(model, data, rep.tau);
    const DecompositionTerms terms = decompose(model, data, fr, f_star);
    RiskRow row;
    row.gamma = rep.gamma;
    row.tau = rep.tau;
    row.p = p;
    row.n = rep.n;
    row.rep = rep_index;
    row.weighted_risk = weighted_risk(fr.theta_hat, model.theta_star, f_star);
    const Eigen::VectorXd noise_error = terms.V0 * (terms.V1 + terms.V2);
    const Eigen::VectorXd bias_error = terms.V0 * terms.B0;
    row.variance_part = noise_error.dot(f_star * noise_error);
    row.bias_part = bias_error.dot(f_star * bias_error);
    row.prediction_risk = prediction_risk(model, fr.theta_hat, options.prediction_samples,
                                          split_seed(seed, kPredictStreamBase + job));
    row.analytic_h = rep.analytic_h;
    row.principal_term = terms.principal_term;
    rep.rows[rep_index] = row;
  });

  for (auto& rep : reports) {
    rep.weighted_risk = column_stat(rep.rows, &RiskRow::weighted_risk);
    rep.variance_part = column_stat(rep.rows, &RiskRow::variance_part);
    rep.bias_part = column_stat(rep.rows, &RiskRow::bias_part);
    rep.prediction_risk = column_stat(rep.rows, &RiskRow::prediction_risk);
    rep.principal_term = column_stat(rep.rows, &RiskRow::principal_term);
  }
  return reports;
}

}  // namespace specrisk
