#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "specrisk/errors.hpp"

namespace specrisk {

enum class ModelKind { LinearM1, ExponentialM2, Additive };

// Gaussian noise truncated to [-bound, bound]. The log-likelihood is scaled by
// the reciprocal of the truncated variance (not the pre-truncation sigma^2):
// that is the unique scale that keeps the score mean-zero with unit
// information under hard truncation. For bound/sigma >= ~9 the two coincide
// to double precision.
struct NoiseSpec {
  double bound = 1.0;
  double sigma_sq = 1.0;
  double effective_variance() const;
};

// Frozen randomness of the additive model: block layout, per-submodel linear
// offsets, and the random cosine features the parameters multiply.
struct AdditiveLayout {
  int d = 8;
  int num_models = 0;
  std::vector<std::vector<int>> blocks;  // parameter indices per submodel, contiguous
  std::vector<int> block_of;             // parameter index -> submodel index
  Eigen::MatrixXd offsets;               // d x M
  Eigen::MatrixXd freqs;                 // d x p
  Eigen::VectorXd phases;                // p
};

struct ModelInstance {
  ModelKind kind = ModelKind::LinearM1;
  int p = 0;
  Eigen::VectorXd theta_star;
  NoiseSpec noise;
  double covariate_bound = 1.0;
  double radius_r = 1.0;
  std::uint64_t seed = 0;
  AdditiveLayout additive;  // populated for Additive only

  // Covariate dimension: p for the regression families, d for the additive one.
  int ambient_dim() const;
  double sigma_eff_sq() const { return noise.effective_variance(); }
};

// Factories freeze theta_star (uniform on the sphere of radius 0.9 * radius_r)
// and, for the additive family, the feature randomness, all from `seed`.
ModelInstance make_linear_model(int p, std::uint64_t seed, double radius_r = 1.0,
                                double noise_bound = 1.0, double covariate_bound = 1.0,
                                double sigma_sq = 1.0);
ModelInstance make_exponential_model(int p, std::uint64_t seed, double radius_r = 1.0,
                                     double noise_bound = 1.0, double covariate_bound = 1.0,
                                     double sigma_sq = 1.0);
// num_models <= 0 picks ceil(p^0.8).
ModelInstance make_additive_model(int p, int num_models, std::uint64_t seed,
                                  double radius_r = 1.0, double noise_bound = 1.0,
                                  double covariate_bound = 1.0, double sigma_sq = 1.0);

struct Dataset {
  Eigen::MatrixXd x;  // n x ambient_dim, truncated-normal entries
  Eigen::VectorXd y;  // n
  std::uint64_t seed = 0;
};

Dataset generate(const ModelInstance& model, int n, std::uint64_t seed);

// CSV body for external inspection: header x_1..x_d,y, one row per sample,
// lossless doubles. Write it out with write_text_atomic or any stream.
std::string dataset_csv(const Dataset& data);

// Regression function and its parameter derivatives at one covariate.
double mean_value(const ModelInstance& model, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& x);
Eigen::VectorXd mean_gradient(const ModelInstance& model, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& x);
Eigen::MatrixXd mean_hessian(const ModelInstance& model, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& x);

// Batched versions over the rows of x (used by the fitting loop).
Eigen::VectorXd mean_value_batch(const ModelInstance& model, const Eigen::VectorXd& theta,
                                 const Eigen::MatrixXd& x);
Eigen::MatrixXd mean_gradient_batch(const ModelInstance& model, const Eigen::VectorXd& theta,
                                    const Eigen::MatrixXd& x);
// Adds sum_i coeffs[i] * Hess_theta g(theta, x_i) into `out` (full matrix).
void add_weighted_mean_hessians(const ModelInstance& model, const Eigen::VectorXd& theta,
                                const Eigen::MatrixXd& x, const Eigen::VectorXd& coeffs,
                                Eigen::MatrixXd& out);

// Log-likelihood of a single observation up to its normalizing constant, and
// its parameter derivatives.
double loglik(const ModelInstance& model, const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
              double y);
Eigen::VectorXd score(const ModelInstance& model, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& x, double y);
Eigen::MatrixXd loglik_hessian(const ModelInstance& model, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& x, double y);

// Slice d/d theta_j of the log-likelihood Hessian. Identically zero for the
// linear model. For the additive model the slice is taken within the block
// containing j and is exactly zero outside that block's rows and columns.
Eigen::MatrixXd third_derivative(const ModelInstance& model, int j, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& x, double y);

// Residual matrix w(z) = -(loglik_hessian + score*score^T); the empirical
// Fisher defect of a sample of size n is (1/n) * sum of w over the sample.
Eigen::MatrixXd w_matrix(const ModelInstance& model, const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& x, double y);

// Fisher matrix at theta_star. Exact diagonal for the linear family; Monte
// Carlo over fresh covariates otherwise, with the noise integrated out
// analytically, then symmetrized.
Eigen::MatrixXd fisher_matrix(const ModelInstance& model, int mc_samples, std::uint64_t seed);

}  // namespace specrisk
