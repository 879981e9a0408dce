#include "specrisk/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "specrisk/parallel.hpp"
#include "specrisk/rng.hpp"

namespace specrisk {

namespace {

void validate(const RandomMatrixSpec& spec) {
  if (spec.p < 1 || spec.n < 1) {
    throw std::invalid_argument("random matrix spec: p and n must be at least 1");
  }
  if (spec.dist == ColumnDist::TruncatedGaussian && !(spec.trunc_bound > 0.0)) {
    throw std::invalid_argument("random matrix spec: truncation bound must be positive");
  }
  if (spec.shift.size() != 0 && (spec.shift.rows() != spec.p || spec.shift.cols() != spec.p)) {
    throw std::invalid_argument("random matrix spec: shift must be p x p");
  }
}

}  // namespace

Eigen::MatrixXd sample_factor(const RandomMatrixSpec& spec) {
  validate(spec);
  SplitMix64 rng(spec.seed);
  const double root_p = std::sqrt(static_cast<double>(spec.p));
  Eigen::MatrixXd t(spec.p, spec.n);
  if (spec.dist == ColumnDist::StandardGaussian) {
    for (int j = 0; j < spec.n; ++j) {
      for (int i = 0; i < spec.p; ++i) t(i, j) = rng.normal() / root_p;
    }
  } else {
    const double scale =
        1.0 / (std::sqrt(truncated_normal_variance(spec.trunc_bound, 1.0)) * root_p);
    for (int j = 0; j < spec.n; ++j) {
      for (int i = 0; i < spec.p; ++i) {
        t(i, j) = rng.truncated_normal(spec.trunc_bound, 1.0) * scale;
      }
    }
  }
  return t;
}

Eigen::MatrixXd sample_matrix(const RandomMatrixSpec& spec) {
  const Eigen::MatrixXd t = sample_factor(spec);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(spec.p, spec.p);
  q.selfadjointView<Eigen::Lower>().rankUpdate(t);
  q = q.selfadjointView<Eigen::Lower>();
  if (spec.shift.size() != 0) q += spec.shift;
  return q;
}

EmpiricalSpectrum empirical_spectrum(const Eigen::MatrixXd& q) {
  if (q.rows() != q.cols()) throw NotSymmetric("empirical_spectrum: matrix is not square");
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  const double asym = (q - q.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream os;
    os << "empirical_spectrum: relative asymmetry " << asym / scale << " exceeds 1e-10";
    throw NotSymmetric(os.str());
  }
  const Eigen::MatrixXd sym = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);

  EmpiricalSpectrum out;
  out.p = static_cast<int>(q.rows());
  out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + q.rows());
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  out.min_positive = 0.0;
  for (double v : out.eigenvalues) {
    if (v > 1e-10) {
      out.min_positive = v;
      break;
    }
  }
  return out;
}

double truncated_inverse_trace(const EmpiricalSpectrum& spectrum, double cutoff) {
  if (spectrum.p < 1 || spectrum.eigenvalues.empty()) {
    throw std::invalid_argument("truncated_inverse_trace: empty spectrum");
  }
  double sum = 0.0;
  for (double v : spectrum.eigenvalues) {
    if (v >= cutoff && v > 0.0) sum += 1.0 / v;
  }
  return sum / static_cast<double>(spectrum.p);
}

MpVerifyReport verify_mp_limit(const SpectralMeasure& xi, const AsymptoticRegime& regime, int p,
                               int reps, std::uint64_t seed, int threads, ColumnDist dist,
                               double trunc_bound) {
  if (p < 1) throw std::invalid_argument("verify_mp_limit: p must be at least 1");
  if (reps < 1) throw std::invalid_argument("verify_mp_limit: reps must be at least 1");
  const int n = std::max(1, static_cast<int>(std::lround(p / regime.gamma)));

  MpVerifyReport report;
  report.p = p;
  report.n = n;
  report.reps = reps;
  report.gamma = regime.gamma;
  report.tau_bar = regime.tau_bar;
  report.analytic = limit_h_at_zero(xi, regime);
  report.per_rep.assign(reps, 0.0);

  Eigen::MatrixXd shift;
  if (regime.tau_bar > 0.0) {
    shift = Eigen::MatrixXd::Zero(p, p);
    const double scale = regime.tau_bar * static_cast<double>(n) / static_cast<double>(p);
    for (int i = 0; i < p; ++i) {
      shift(i, i) = scale * xi.quantile((i + 0.5) / static_cast<double>(p));
    }
  }
  const bool drop_zero_modes = regime.tau_bar == 0.0 && regime.gamma > 1.0;

  std::vector<double> cutoffs(reps, 0.0);
  parallel_for(reps, threads, [&](int k) {
    RandomMatrixSpec ms;
    ms.p = p;
    ms.n = n;
    ms.dist = dist;
    ms.trunc_bound = trunc_bound;
    ms.shift = shift;
    ms.seed = split_seed(seed, static_cast<std::uint64_t>(k));
    const EmpiricalSpectrum spectrum = empirical_spectrum(sample_matrix(ms));
    double cutoff = 0.0;
    if (drop_zero_modes) {
      for (double v : spectrum.eigenvalues) {
        if (v > 1e-8) {
          cutoff = v;
          break;
        }
      }
    }
    cutoffs[k] = cutoff;
    report.per_rep[k] = truncated_inverse_trace(spectrum, cutoff);
  });

  report.cutoff = cutoffs.back();
  double mean = 0.0;
  for (double v : report.per_rep) mean += v;
  mean /= reps;
  double var = 0.0;
  for (double v : report.per_rep) var += (v - mean) * (v - mean);
  report.mc_mean = mean;
  report.mc_std = std::sqrt(var / reps);
  report.gap = std::abs(mean - report.analytic);
  return report;
}

}  // namespace specrisk
