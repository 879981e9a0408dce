#include "specrisk/models.hpp"

#include <cmath>
#include <sstream>

#include "specrisk/io.hpp"
#include "specrisk/rng.hpp"

namespace specrisk {

double NoiseSpec::effective_variance() const {
  return truncated_normal_variance(bound, sigma_sq);
}

int ModelInstance::ambient_dim() const {
  return kind == ModelKind::Additive ? additive.d : p;
}

namespace {

constexpr std::uint64_t kThetaStream = 0x7e7a0001ull;
constexpr std::uint64_t kOffsetStream = 0xa0ff0002ull;
constexpr std::uint64_t kFreqStream = 0xf7e90003ull;
constexpr std::uint64_t kPhaseStream = 0xb1a50004ull;

void validate_common(int p, double radius_r, double noise_bound, double covariate_bound,
                     double sigma_sq) {
  if (p < 1) throw std::invalid_argument("model: p must be at least 1");
  if (!(radius_r > 0.0)) throw std::invalid_argument("model: radius_r must be positive");
  if (!(noise_bound > 0.0)) throw std::invalid_argument("model: noise bound must be positive");
  if (!(covariate_bound > 0.0)) {
    throw std::invalid_argument("model: covariate bound must be positive");
  }
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("model: sigma_sq must be positive");
}

Eigen::VectorXd sphere_point(int p, double radius, SplitMix64& rng) {
  Eigen::VectorXd v(p);
  double norm_sq = 0.0;
  do {
    for (int i = 0; i < p; ++i) v(i) = rng.normal();
    norm_sq = v.squaredNorm();
  } while (norm_sq == 0.0);
  return v * (radius / std::sqrt(norm_sq));
}

ModelInstance make_regression(ModelKind kind, int p, std::uint64_t seed, double radius_r,
                              double noise_bound, double covariate_bound, double sigma_sq) {
  validate_common(p, radius_r, noise_bound, covariate_bound, sigma_sq);
  ModelInstance m;
  m.kind = kind;
  m.p = p;
  m.noise = NoiseSpec{noise_bound, sigma_sq};
  m.covariate_bound = covariate_bound;
  m.radius_r = radius_r;
  m.seed = seed;
  SplitMix64 rng(split_seed(seed, kThetaStream));
  m.theta_star = sphere_point(p, 0.9 * radius_r, rng);
  return m;
}

// Per-sample additive state: features, per-submodel preactivations and tanh.
struct AdditiveState {
  Eigen::VectorXd phi;  // p
  Eigen::VectorXd s;    // M
  Eigen::VectorXd t;    // M
};

AdditiveState additive_state(const ModelInstance& model, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& x) {
  const AdditiveLayout& lay = model.additive;
  AdditiveState st;
  st.phi = ((lay.freqs.transpose() * x) + lay.phases).array().cos();
  st.s = lay.offsets.transpose() * x;
  for (int m = 0; m < lay.num_models; ++m) {
    for (int l : lay.blocks[static_cast<std::size_t>(m)]) st.s(m) += theta(l) * st.phi(l);
  }
  st.t = st.s.array().tanh();
  return st;
}

void check_theta_x(const ModelInstance& model, const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& x) {
  if (theta.size() != model.p) throw std::invalid_argument("model: theta has wrong length");
  if (x.size() != model.ambient_dim()) {
    throw std::invalid_argument("model: covariate has wrong length");
  }
}

}  // namespace

ModelInstance make_linear_model(int p, std::uint64_t seed, double radius_r, double noise_bound,
                                double covariate_bound, double sigma_sq) {
  return make_regression(ModelKind::LinearM1, p, seed, radius_r, noise_bound, covariate_bound,
                         sigma_sq);
}

ModelInstance make_exponential_model(int p, std::uint64_t seed, double radius_r,
                                     double noise_bound, double covariate_bound,
                                     double sigma_sq) {
  return make_regression(ModelKind::ExponentialM2, p, seed, radius_r, noise_bound,
                         covariate_bound, sigma_sq);
}

ModelInstance make_additive_model(int p, int num_models, std::uint64_t seed, double radius_r,
                                  double noise_bound, double covariate_bound, double sigma_sq) {
  validate_common(p, radius_r, noise_bound, covariate_bound, sigma_sq);
  if (num_models <= 0) num_models = static_cast<int>(std::ceil(std::pow(p, 0.8)));
  if (num_models > p) num_models = p;

  ModelInstance m;
  m.kind = ModelKind::Additive;
  m.p = p;
  m.noise = NoiseSpec{noise_bound, sigma_sq};
  m.covariate_bound = covariate_bound;
  m.radius_r = radius_r;
  m.seed = seed;

  AdditiveLayout lay;
  lay.d = 8;
  lay.num_models = num_models;
  lay.block_of.assign(static_cast<std::size_t>(p), 0);
  const int base = p / num_models;
  const int rem = p % num_models;
  int idx = 0;
  for (int b = 0; b < num_models; ++b) {
    const int size = base + (b < rem ? 1 : 0);
    std::vector<int> block;
    block.reserve(static_cast<std::size_t>(size));
    for (int k = 0; k < size; ++k, ++idx) {
      block.push_back(idx);
      lay.block_of[static_cast<std::size_t>(idx)] = b;
    }
    lay.blocks.push_back(std::move(block));
  }

  const double inv_root_d = 1.0 / std::sqrt(static_cast<double>(lay.d));
  SplitMix64 off_rng(split_seed(seed, kOffsetStream));
  lay.offsets.resize(lay.d, num_models);
  for (int c = 0; c < num_models; ++c) {
    for (int r = 0; r < lay.d; ++r) lay.offsets(r, c) = off_rng.normal() * inv_root_d;
  }
  SplitMix64 freq_rng(split_seed(seed, kFreqStream));
  lay.freqs.resize(lay.d, p);
  for (int c = 0; c < p; ++c) {
    for (int r = 0; r < lay.d; ++r) lay.freqs(r, c) = freq_rng.normal() * inv_root_d;
  }
  SplitMix64 phase_rng(split_seed(seed, kPhaseStream));
  lay.phases.resize(p);
  for (int l = 0; l < p; ++l) lay.phases(l) = phase_rng.uniform01() * 2.0 * M_PI;

  m.additive = std::move(lay);
  SplitMix64 rng(split_seed(seed, kThetaStream));
  m.theta_star = sphere_point(p, 0.9 * radius_r, rng);
  return m;
}

Dataset generate(const ModelInstance& model, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate: n must be at least 1");
  const int d = model.ambient_dim();
  SplitMix64 rng(seed);
  Dataset ds;
  ds.seed = seed;
  ds.x.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.x(i, j) = rng.truncated_normal(model.covariate_bound, 1.0);
  }
  const double sigma = std::sqrt(model.noise.sigma_sq);
  ds.y = mean_value_batch(model, model.theta_star, ds.x);
  for (int i = 0; i < n; ++i) ds.y(i) += rng.truncated_normal(model.noise.bound, sigma);
  return ds;
}

std::string dataset_csv(const Dataset& data) {
  std::ostringstream out;
  for (int j = 0; j < data.x.cols(); ++j) out << "x_" << j + 1 << ",";
  out << "y\n";
  for (int i = 0; i < data.x.rows(); ++i) {
    for (int j = 0; j < data.x.cols(); ++j) out << format_double(data.x(i, j)) << ",";
    out << format_double(data.y(i)) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Mean function and derivatives.
// ---------------------------------------------------------------------------

double mean_value(const ModelInstance& model, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& x) {
  check_theta_x(model, theta, x);
  switch (model.kind) {
    case ModelKind::LinearM1:
      return x.dot(theta);
    case ModelKind::ExponentialM2: {
      double sum = 0.0;
      for (int k = 0; k < model.p; ++k) sum += x(k) * std::exp(theta(k) * x(k));
      return sum / model.p;
    }
    case ModelKind::Additive: {
      const AdditiveState st = additive_state(model, theta, x);
      return st.t.mean();
    }
  }
  return 0.0;
}

Eigen::VectorXd mean_gradient(const ModelInstance& model, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& x) {
  check_theta_x(model, theta, x);
  switch (model.kind) {
    case ModelKind::LinearM1:
      return x;
    case ModelKind::ExponentialM2: {
      Eigen::VectorXd g(model.p);
      for (int k = 0; k < model.p; ++k) {
        g(k) = x(k) * x(k) * std::exp(theta(k) * x(k)) / model.p;
      }
      return g;
    }
    case ModelKind::Additive: {
      const AdditiveLayout& lay = model.additive;
      const AdditiveState st = additive_state(model, theta, x);
      Eigen::VectorXd g(model.p);
      const double inv_m = 1.0 / lay.num_models;
      for (int m = 0; m < lay.num_models; ++m) {
        const double sech_sq = (1.0 - st.t(m) * st.t(m)) * inv_m;
        for (int l : lay.blocks[static_cast<std::size_t>(m)]) g(l) = sech_sq * st.phi(l);
      }
      return g;
    }
  }
  return Eigen::VectorXd();
}

Eigen::MatrixXd mean_hessian(const ModelInstance& model, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& x) {
  check_theta_x(model, theta, x);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(model.p, model.p);
  switch (model.kind) {
    case ModelKind::LinearM1:
      break;
    case ModelKind::ExponentialM2:
      for (int k = 0; k < model.p; ++k) {
        h(k, k) = x(k) * x(k) * x(k) * std::exp(theta(k) * x(k)) / model.p;
      }
      break;
    case ModelKind::Additive: {
      const AdditiveLayout& lay = model.additive;
      const AdditiveState st = additive_state(model, theta, x);
      const double inv_m = 1.0 / lay.num_models;
      for (int m = 0; m < lay.num_models; ++m) {
        const double t = st.t(m);
        const double coeff = -2.0 * t * (1.0 - t * t) * inv_m;
        const auto& block = lay.blocks[static_cast<std::size_t>(m)];
        for (int a : block) {
          for (int b : block) h(a, b) = coeff * st.phi(a) * st.phi(b);
        }
      }
      break;
    }
  }
  return h;
}

Eigen::VectorXd mean_value_batch(const ModelInstance& model, const Eigen::VectorXd& theta,
                                 const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  switch (model.kind) {
    case ModelKind::LinearM1:
      return x * theta;
    case ModelKind::ExponentialM2: {
      Eigen::VectorXd out(n);
      for (int i = 0; i < n; ++i) out(i) = mean_value(model, theta, x.row(i).transpose());
      return out;
    }
    case ModelKind::Additive: {
      Eigen::VectorXd out(n);
      for (int i = 0; i < n; ++i) out(i) = mean_value(model, theta, x.row(i).transpose());
      return out;
    }
  }
  return Eigen::VectorXd();
}

Eigen::MatrixXd mean_gradient_batch(const ModelInstance& model, const Eigen::VectorXd& theta,
                                    const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  switch (model.kind) {
    case ModelKind::LinearM1:
      return x;
    default: {
      Eigen::MatrixXd g(n, model.p);
      for (int i = 0; i < n; ++i) {
        g.row(i) = mean_gradient(model, theta, x.row(i).transpose()).transpose();
      }
      return g;
    }
  }
}

void add_weighted_mean_hessians(const ModelInstance& model, const Eigen::VectorXd& theta,
                                const Eigen::MatrixXd& x, const Eigen::VectorXd& coeffs,
                                Eigen::MatrixXd& out) {
  const int n = static_cast<int>(x.rows());
  if (coeffs.size() != n) throw std::invalid_argument("weighted hessians: coeff length mismatch");
  switch (model.kind) {
    case ModelKind::LinearM1:
      return;  // the mean function is linear in theta
    case ModelKind::ExponentialM2: {
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < model.p; ++k) {
          const double xk = x(i, k);
          out(k, k) += coeffs(i) * xk * xk * xk * std::exp(theta(k) * xk) / model.p;
        }
      }
      return;
    }
    case ModelKind::Additive: {
      const AdditiveLayout& lay = model.additive;
      const double inv_m = 1.0 / lay.num_models;
      for (int i = 0; i < n; ++i) {
        const AdditiveState st = additive_state(model, theta, x.row(i).transpose());
        for (int m = 0; m < lay.num_models; ++m) {
          const double t = st.t(m);
          const double coeff = coeffs(i) * (-2.0) * t * (1.0 - t * t) * inv_m;
          const auto& block = lay.blocks[static_cast<std::size_t>(m)];
          for (int a : block) {
            const double ca = coeff * st.phi(a);
            for (int b : block) out(a, b) += ca * st.phi(b);
          }
        }
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Log-likelihood derivatives.
// ---------------------------------------------------------------------------

double loglik(const ModelInstance& model, const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
              double y) {
  const double rho = y - mean_value(model, theta, x);
  return -rho * rho / (2.0 * model.sigma_eff_sq());
}

Eigen::VectorXd score(const ModelInstance& model, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& x, double y) {
  const double rho = y - mean_value(model, theta, x);
  return mean_gradient(model, theta, x) * (rho / model.sigma_eff_sq());
}

Eigen::MatrixXd loglik_hessian(const ModelInstance& model, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& x, double y) {
  const double v = model.sigma_eff_sq();
  const double rho = y - mean_value(model, theta, x);
  const Eigen::VectorXd g = mean_gradient(model, theta, x);
  Eigen::MatrixXd h = mean_hessian(model, theta, x) * (rho / v);
  h.noalias() -= g * g.transpose() / v;
  return h;
}

Eigen::MatrixXd third_derivative(const ModelInstance& model, int j, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& x, double y) {
  if (j < 0 || j >= model.p) {
    std::ostringstream os;
    os << "third_derivative: index " << j << " outside [0, " << model.p << ")";
    throw IndexOutOfRange(os.str());
  }
  check_theta_x(model, theta, x);
  const double v = model.sigma_eff_sq();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(model.p, model.p);

  switch (model.kind) {
    case ModelKind::LinearM1:
      return u;  // exactly zero: the mean function has no curvature in theta
    case ModelKind::ExponentialM2: {
      const double rho = y - mean_value(model, theta, x);
      const Eigen::VectorXd g = mean_gradient(model, theta, x);
      Eigen::VectorXd hdiag(model.p);
      for (int k = 0; k < model.p; ++k) {
        const double xk = x(k);
        hdiag(k) = xk * xk * xk * std::exp(theta(k) * xk) / model.p;
      }
      const double xj = x(j);
      const double qj = xj * xj * xj * xj * std::exp(theta(j) * xj) / model.p;
      // d_j of (rho*H - g g^T)/v with diagonal H and diagonal third tensor.
      u(j, j) += rho * qj;
      for (int k = 0; k < model.p; ++k) u(k, k) -= g(j) * hdiag(k);
      for (int k = 0; k < model.p; ++k) {
        u(k, j) -= hdiag(j) * g(k);
        u(j, k) -= hdiag(j) * g(k);
      }
      u /= v;
      return u;
    }
    case ModelKind::Additive: {
      const AdditiveLayout& lay = model.additive;
      const AdditiveState st = additive_state(model, theta, x);
      const int m = lay.block_of[static_cast<std::size_t>(j)];
      const auto& block = lay.blocks[static_cast<std::size_t>(m)];
      const double rho = y - st.t.mean();
      const double t = st.t(m);
      const double sech_sq = 1.0 - t * t;
      const double inv_m = 1.0 / lay.num_models;
      // Within-block pieces of grad g, Hess g, and the third tensor slice.
      const double grad_j = inv_m * sech_sq * st.phi(j);
      const double hcoef = -2.0 * t * sech_sq * inv_m;         // H_ab = hcoef*phi_a*phi_b
      const double tcoef = sech_sq * (6.0 * t * t - 2.0) * inv_m;  // T_jab = tcoef*phi_j*phi_a*phi_b
      for (int a : block) {
        for (int b : block) {
          const double pa = st.phi(a), pb = st.phi(b), pj = st.phi(j);
          const double grad_a = inv_m * sech_sq * pa;
          const double grad_b = inv_m * sech_sq * pb;
          const double h_ab = hcoef * pa * pb;
          const double h_aj = hcoef * pa * pj;
          const double h_bj = hcoef * pb * pj;
          u(a, b) = (rho * tcoef * pj * pa * pb - grad_j * h_ab - h_aj * grad_b - grad_a * h_bj) / v;
        }
      }
      return u;
    }
  }
  return u;
}

Eigen::MatrixXd w_matrix(const ModelInstance& model, const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& x, double y) {
  const Eigen::VectorXd j = score(model, theta, x, y);
  Eigen::MatrixXd w = -loglik_hessian(model, theta, x, y);
  w.noalias() -= j * j.transpose();
  return w;
}

Eigen::MatrixXd fisher_matrix(const ModelInstance& model, int mc_samples, std::uint64_t seed) {
  const double v = model.sigma_eff_sq();
  if (model.kind == ModelKind::LinearM1) {
    // E[x x^T] is diagonal with the truncated covariate variance.
    const double vx = truncated_normal_variance(model.covariate_bound, 1.0);
    return Eigen::MatrixXd::Identity(model.p, model.p) * (vx / v);
  }
  if (mc_samples < 1) throw std::invalid_argument("fisher_matrix: mc_samples must be positive");
  // E[J J^T] = E[grad g grad g^T] / v after integrating the noise out.
  SplitMix64 rng(seed);
  Eigen::VectorXd x(model.ambient_dim());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(model.p, model.p);
  for (int s = 0; s < mc_samples; ++s) {
    for (int k = 0; k < x.size(); ++k) x(k) = rng.truncated_normal(model.covariate_bound, 1.0);
    const Eigen::VectorXd g = mean_gradient(model, model.theta_star, x);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(g);
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  acc /= (static_cast<double>(mc_samples) * v);
  return 0.5 * (acc + acc.transpose());
}

}  // namespace specrisk
