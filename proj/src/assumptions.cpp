#include "specrisk/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "specrisk/errors.hpp"
#include "specrisk/opnorm.hpp"
#include "specrisk/parallel.hpp"
#include "specrisk/rng.hpp"

namespace specrisk {

namespace {

constexpr std::uint64_t kCrossDataBase = 3000000;
constexpr std::uint64_t kFisherMcStream = 3500000;
constexpr std::uint64_t kResidualDataBase = 4000000;
constexpr std::uint64_t kThetaDrawBase = 4500000;
constexpr std::uint64_t kSampleDrawBase = 4600000;
constexpr std::uint64_t kPerturbDrawBase = 4700000;
constexpr int kFisherBudget = 20000;  // Monte Carlo budget for F* when needed

Eigen::MatrixXd frozen_fisher(const ModelInstance& model, std::uint64_t seed) {
  return model.kind == ModelKind::LinearM1
             ? fisher_matrix(model, 0, 0)
             : fisher_matrix(model, kFisherBudget, split_seed(seed, kFisherMcStream));
}

// Scores at theta*, one row per sample.
Eigen::MatrixXd score_rows(const ModelInstance& model, const Dataset& data) {
  const double v = model.sigma_eff_sq();
  const Eigen::VectorXd residual =
      data.y - mean_value_batch(model, model.theta_star, data.x);
  return residual.asDiagonal() * mean_gradient_batch(model, model.theta_star, data.x) / v;
}

}  // namespace

double cross_term_statistic(const ModelInstance& model, const Dataset& data, double tau,
                            const Eigen::MatrixXd& f_star) {
  const auto n = data.x.rows();
  if (n < 2) return 0.0;  // the off-diagonal sum is empty
  const Eigen::MatrixXd scores = score_rows(model, data);
  Eigen::MatrixXd shifted = Eigen::MatrixXd::Zero(model.p, model.p);
  shifted.selfadjointView<Eigen::Lower>().rankUpdate(scores.transpose(),
                                                     1.0 / static_cast<double>(n));
  shifted = shifted.selfadjointView<Eigen::Lower>();
  const double cond = (sym_opnorm(shifted) + tau) / tau;
  if (cond > 1e12) {
    throw IllConditioned("score covariance plus penalty is numerically singular", cond);
  }
  shifted.diagonal().array() += tau;
  // sum_{i<j} J_i' S J_j = (v' S v - sum_i J_i' S J_i)/2 with v the score sum,
  // computed through K = (F_hat + tau I)^{-1} J' without forming S.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(shifted);
  const Eigen::MatrixXd k = lu.solve(scores.transpose());
  const Eigen::MatrixXd fk = f_star * k;
  const double diagonal_sum = k.cwiseProduct(fk).sum();
  const Eigen::VectorXd u = k.rowwise().sum();
  const double full_sum = u.dot(f_star * u);
  return (full_sum - diagonal_sum) / (2.0 * static_cast<double>(n) * n);
}

CrossTermResult cross_term(const ModelInstance& model, int n, double tau, int reps,
                           std::uint64_t seed, unsigned threads) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (reps < 1) throw std::invalid_argument("reps must be at least 1");
  return cross_term(model, n, tau, reps, seed, threads, frozen_fisher(model, seed));
}

CrossTermResult cross_term(const ModelInstance& model, int n, double tau, int reps,
                           std::uint64_t seed, unsigned threads, const Eigen::MatrixXd& f_star) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (reps < 1) throw std::invalid_argument("reps must be at least 1");
  CrossTermResult out;
  out.values.resize(reps);
  parallel_for(reps, static_cast<int>(threads), [&](int r) {
    const Dataset data =
        generate(model, n, split_seed(seed, kCrossDataBase + static_cast<std::uint64_t>(r)));
    out.values[static_cast<std::size_t>(r)] = cross_term_statistic(model, data, tau, f_star);
  });
  for (double value : out.values) out.mean += value;
  out.mean /= reps;
  for (double value : out.values) out.stddev += (value - out.mean) * (value - out.mean);
  out.stddev = std::sqrt(out.stddev / reps);
  out.mean_unordered = 2.0 * out.mean;
  return out;
}

FisherResidualReport fisher_residual(const ModelInstance& model, int n, int reps,
                                     std::uint64_t seed, unsigned threads) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (reps < 1) throw std::invalid_argument("reps must be at least 1");
  const int p = model.p;

  struct RepAccumulator {
    Eigen::MatrixXd sum_w;
    Eigen::MatrixXd sum_w_sq;
    double max_norm = 0.0;
    double residual_norm = 0.0;
  };
  std::vector<RepAccumulator> partial(reps);

  parallel_for(reps, static_cast<int>(threads), [&](int r) {
    const Dataset data =
        generate(model, n, split_seed(seed, kResidualDataBase + static_cast<std::uint64_t>(r)));
    RepAccumulator acc;
    acc.sum_w = Eigen::MatrixXd::Zero(p, p);
    acc.sum_w_sq = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd mean_w = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
      const Eigen::VectorXd x = data.x.row(i).transpose();
      const Eigen::MatrixXd w = w_matrix(model, model.theta_star, x, data.y(i));
      acc.sum_w += w;
      acc.sum_w_sq += w * w;
      acc.max_norm = std::max(acc.max_norm, sym_opnorm(w));
      mean_w += w;
    }
    acc.residual_norm = sym_opnorm(Eigen::MatrixXd(mean_w / static_cast<double>(n)));
    partial[static_cast<std::size_t>(r)] = std::move(acc);
  });

  FisherResidualReport out;
  out.opnorms.resize(reps);
  Eigen::MatrixXd sum_w = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd sum_w_sq = Eigen::MatrixXd::Zero(p, p);
  for (int r = 0; r < reps; ++r) {
    out.opnorms[r] = partial[r].residual_norm;
    sum_w += partial[r].sum_w;
    sum_w_sq += partial[r].sum_w_sq;
    out.kappa = std::max(out.kappa, partial[r].max_norm);
  }
  const double total = static_cast<double>(n) * reps;
  out.mean_w = sum_w / total;
  out.nu_sq = sym_opnorm(Eigen::MatrixXd(sum_w_sq / total));

  const double t_max = 1.25 * *std::max_element(out.opnorms.begin(), out.opnorms.end());
  const int grid_size = 12;
  for (int k = 1; k <= grid_size; ++k) {
    const double t = t_max * k / grid_size;
    double hits = 0.0;
    for (double norm : out.opnorms) hits += norm >= t ? 1.0 : 0.0;
    out.t_grid.push_back(t);
    out.exceedance.push_back(hits / reps);
    out.envelope.push_back(2.0 * p *
                           std::exp(-n * t * t / 2.0 / (out.nu_sq + out.kappa * t / 3.0)));
  }
  return out;
}

double third_derivative_opnorm(const ModelInstance& model, int j, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& x, double y) {
  if (model.kind != ModelKind::Additive) {
    return sym_opnorm(third_derivative(model, j, theta, x, y));
  }
  // The additive slice is rank one on its block, C * phi phi', so its norm is
  // |C| times the squared feature norm over the block.
  if (j < 0 || j >= model.p) throw IndexOutOfRange("third_derivative_opnorm: bad index");
  const AdditiveLayout& lay = model.additive;
  const int m = lay.block_of[static_cast<std::size_t>(j)];
  const Eigen::VectorXd phi = ((lay.freqs.transpose() * x) + lay.phases).array().cos();
  double mean_tanh = 0.0;
  double s_m = 0.0;
  for (int block = 0; block < lay.num_models; ++block) {
    double s = lay.offsets.col(block).dot(x);
    for (int l : lay.blocks[static_cast<std::size_t>(block)]) s += theta(l) * phi(l);
    if (block == m) s_m = s;
    mean_tanh += std::tanh(s);
  }
  mean_tanh /= lay.num_models;
  const double rho = y - mean_tanh;
  const double t = std::tanh(s_m);
  const double sech_sq = 1.0 - t * t;
  const double inv_m = 1.0 / lay.num_models;
  const double hcoef = -2.0 * t * sech_sq * inv_m;
  const double tcoef = sech_sq * (6.0 * t * t - 2.0) * inv_m;
  const double coefficient =
      phi(j) * (rho * tcoef - 3.0 * inv_m * sech_sq * hcoef) / model.sigma_eff_sq();
  double block_feature_sq = 0.0;
  for (int l : lay.blocks[static_cast<std::size_t>(m)]) block_feature_sq += phi(l) * phi(l);
  return std::abs(coefficient) * block_feature_sq;
}

DerivativeSums derivative_sums(const ModelInstance& model, int theta_samples, int z_samples,
                               std::uint64_t seed, unsigned threads) {
  if (model.kind == ModelKind::LinearM1) return {0.0, 0.0};
  if (model.kind != ModelKind::Additive) {
    throw std::invalid_argument(
        "derivative envelopes are defined for the additive family (the linear model is the "
        "exact-zero reference)");
  }
  if (theta_samples < 100 || z_samples < 100) {
    throw std::invalid_argument("at least 100 theta and z samples are required");
  }
  const AdditiveLayout& lay = model.additive;
  const int p = model.p;
  const int big_m = lay.num_models;
  const double v = model.sigma_eff_sq();
  const double sigma = std::sqrt(model.noise.sigma_sq);

  // Frozen z draws: per sample the features, per-block offsets and response.
  struct SamplePoint {
    Eigen::VectorXd phi;        // p
    Eigen::VectorXd offset_x;   // M entries a_m' x
    Eigen::VectorXd block_sq;   // M entries sum of phi^2 over each block
    double y = 0.0;
  };
  std::vector<SamplePoint> points(z_samples);
  for (int l = 0; l < z_samples; ++l) {
    SplitMix64 rng(split_seed(seed, kSampleDrawBase + l));
    Eigen::VectorXd x(lay.d);
    for (int i = 0; i < lay.d; ++i) x(i) = rng.truncated_normal(model.covariate_bound, 1.0);
    SamplePoint pt;
    pt.phi = ((lay.freqs.transpose() * x) + lay.phases).array().cos();
    pt.offset_x = lay.offsets.transpose() * x;
    pt.block_sq = Eigen::VectorXd::Zero(big_m);
    for (int m = 0; m < big_m; ++m) {
      for (int l2 : lay.blocks[static_cast<std::size_t>(m)]) {
        pt.block_sq(m) += pt.phi(l2) * pt.phi(l2);
      }
    }
    pt.y = mean_value(model, model.theta_star, x) +
           rng.truncated_normal(model.noise.bound, sigma);
    points[l] = std::move(pt);
  }

  // Per-theta maxima; the final reduction over theta draws is an exact max,
  // so the parallel partition cannot change the result.
  std::vector<Eigen::VectorXd> beta_slots(static_cast<std::size_t>(theta_samples)),
      alpha_slots(static_cast<std::size_t>(theta_samples));
  parallel_for(theta_samples, static_cast<int>(threads), [&](int k_index) {
    const auto k = static_cast<std::size_t>(k_index);
    SplitMix64 theta_rng(split_seed(seed, kThetaDrawBase + k));
    Eigen::VectorXd theta(p);
    for (int i = 0; i < p; ++i) theta(i) = theta_rng.normal();
    theta *= model.radius_r * std::pow(theta_rng.uniform01_open(), 1.0 / p) / theta.norm();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
    const double step = 1e-3;

    for (int l = 0; l < z_samples; ++l) {
      const SamplePoint& pt = points[l];
      SplitMix64 pair_rng(
          split_seed(seed, kPerturbDrawBase + k * static_cast<std::size_t>(z_samples) + l));
      Eigen::VectorXd direction(p);
      for (int i = 0; i < p; ++i) direction(i) = pair_rng.normal();
      direction /= direction.norm();
      const Eigen::VectorXd shifted = theta + step * direction;

      // Rank-one coefficients at theta and at the paired perturbation.
      auto block_coefficients = [&](const Eigen::VectorXd& th, Eigen::VectorXd& base) {
        double mean_tanh = 0.0;
        base.resize(big_m);
        Eigen::VectorXd t_values(big_m);
        for (int m = 0; m < big_m; ++m) {
          double s = pt.offset_x(m);
          for (int l2 : lay.blocks[static_cast<std::size_t>(m)]) s += th(l2) * pt.phi(l2);
          t_values(m) = std::tanh(s);
          mean_tanh += t_values(m);
        }
        mean_tanh /= big_m;
        const double rho = pt.y - mean_tanh;
        for (int m = 0; m < big_m; ++m) {
          const double t = t_values(m);
          const double sech_sq = 1.0 - t * t;
          const double hcoef = -2.0 * t * sech_sq / big_m;
          const double tcoef = sech_sq * (6.0 * t * t - 2.0) / big_m;
          base(m) = (rho * tcoef - 3.0 * sech_sq * hcoef / big_m) / v;
        }
      };
      Eigen::VectorXd base, base_shifted;
      block_coefficients(theta, base);
      block_coefficients(shifted, base_shifted);
      for (int j = 0; j < p; ++j) {
        const int m = lay.block_of[static_cast<std::size_t>(j)];
        const double scale = std::abs(pt.phi(j)) * pt.block_sq(m);
        beta(j) = std::max(beta(j), std::abs(base(m)) * scale);
        alpha(j) = std::max(alpha(j), std::abs(base_shifted(m) - base(m)) * scale / step);
      }
    }
    beta_slots[k] = std::move(beta);
    alpha_slots[k] = std::move(alpha);
  });

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
  for (int k = 0; k < theta_samples; ++k) {
    beta = beta.cwiseMax(beta_slots[k]);
    alpha = alpha.cwiseMax(alpha_slots[k]);
  }
  return {beta.squaredNorm(), alpha.squaredNorm()};
}

SpResult s_p_report(const std::array<double, 4>& components) {
  static const char* kLabels[4] = {"nu_sq_term", "kappa_term", "alpha_sum", "beta_sum"};
  for (double c : components) {
    if (!(c >= 0.0)) throw std::invalid_argument("s_p components must be nonnegative");
  }
  SpResult out;
  for (int i = 0; i < 4; ++i) {
    if (components[i] > out.value || i == 0) {
      out.value = components[i];
      out.argmax = i;
    }
  }
  out.label = kLabels[out.argmax];
  return out;
}

double taylor_residual_norm(const ModelInstance& model, const Dataset& data,
                            const FitResult& fit_result, const Eigen::MatrixXd& f_star) {
  const DecompositionTerms terms = decompose(model, data, fit_result, f_star);
  return terms.V2.dot(f_star * terms.V2);
}

AssumptionReport assumption_report(const ModelInstance& model, int n,
                                   const AssumptionConfig& config, std::uint64_t seed) {
  AssumptionReport out;
  out.p = model.p;
  out.n = n;
  out.num_submodels = model.kind == ModelKind::Additive ? model.additive.num_models : 0;

  const CrossTermResult ct =
      cross_term(model, n, config.tau, config.reps, split_seed(seed, 1), config.threads);
  out.cross_term_mean = ct.mean;
  out.cross_term_std = ct.stddev;

  const FisherResidualReport fr =
      fisher_residual(model, n, config.reps, split_seed(seed, 2), config.threads);
  out.nu_sq = fr.nu_sq;
  out.kappa = fr.kappa;
  for (double norm : fr.opnorms) out.fisher_residual_opnorm += norm;
  out.fisher_residual_opnorm /= fr.opnorms.size();
  const double t = out.fisher_residual_opnorm;
  out.bernstein_bound_prob =
      2.0 * model.p * std::exp(-n * t * t / 2.0 / (fr.nu_sq + fr.kappa * t / 3.0));

  // Derivative envelopes exist for the additive family; the linear model is
  // exactly zero and the single-index exponential family has no usable
  // random-search envelope (see derivative_sums), so both report zero.
  if (model.kind == ModelKind::Additive) {
    const DerivativeSums sums =
        derivative_sums(model, config.derivative_theta_samples, config.derivative_z_samples,
                        split_seed(seed, 3), config.threads);
    out.sum_beta_sq = sums.sum_beta_sq;
    out.sum_alpha_sq = sums.sum_alpha_sq;
  }

  const double log_p = std::log(static_cast<double>(model.p));
  const SpResult sp = s_p_report({out.nu_sq * log_p / model.p,
                                  (out.kappa * log_p) * (out.kappa * log_p) /
                                      (static_cast<double>(model.p) * model.p),
                                  out.sum_alpha_sq, out.sum_beta_sq});
  out.s_p = sp.value;
  out.s_p_source = sp.label;
  return out;
}

}  // namespace specrisk
