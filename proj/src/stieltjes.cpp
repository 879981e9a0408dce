#include "specrisk/stieltjes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

namespace specrisk {

AsymptoticRegime::AsymptoticRegime(double gamma_, double tau_bar_)
    : gamma(gamma_), tau_bar(tau_bar_) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidRegime("regime: gamma must be positive and finite");
  }
  if (!(tau_bar >= 0.0) || !std::isfinite(tau_bar)) {
    throw InvalidRegime("regime: tau_bar must be nonnegative and finite");
  }
  if (gamma == 1.0 && tau_bar == 0.0) {
    throw InvalidRegime("regime: gamma = 1 with tau_bar = 0 has no finite limit");
  }
}

RiskBoundInputs::RiskBoundInputs(double lambda_star_, double lambda_max_, double radius_r_)
    : lambda_star(lambda_star_), lambda_max(lambda_max_), radius_r(radius_r_) {
  if (!(lambda_star >= 1.0)) throw std::invalid_argument("risk bound: lambda_star must be >= 1");
  if (!(lambda_max > 0.0)) throw std::invalid_argument("risk bound: lambda_max must be positive");
  if (!(radius_r > 0.0)) throw std::invalid_argument("risk bound: radius_r must be positive");
}

namespace {

void check_domain(const SpectralMeasure& xi, double u, double a) {
  const double edge = u * xi.support_min();
  if (!(a < edge)) {
    std::ostringstream os;
    os << "h0_transform: a = " << a << " is not below the pole edge " << edge << " for "
       << xi.describe();
    throw PoleInDomain(os.str());
  }
}

}  // namespace

double h0_transform(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a) {
  const double u = regime.tau_bar / regime.gamma;
  check_domain(xi, u, a);
  if (u == 0.0) return -1.0 / a;
  switch (xi.kind()) {
    case SpectralMeasure::Kind::Dirac:
      return 1.0 / (u * xi.atom() - a);
    case SpectralMeasure::Kind::Uniform:
      return std::log((u * xi.upper() - a) / (u * xi.lower() - a)) /
             (u * (xi.upper() - xi.lower()));
    case SpectralMeasure::Kind::Semicircle: {
      // Integral against the unit semicircle in the variable w = center - a/u;
      // written with the conjugate to stay stable for large w.
      const double w = xi.center() - a / u;
      return (2.0 / u) / (w + std::sqrt(w * w - 1.0));
    }
    case SpectralMeasure::Kind::Empirical: {
      double sum = 0.0;
      for (double lam : xi.eigenvalues()) sum += 1.0 / (u * lam - a);
      return sum / static_cast<double>(xi.eigenvalues().size());
    }
  }
  return 0.0;
}

double h0_derivative(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a) {
  const double u = regime.tau_bar / regime.gamma;
  check_domain(xi, u, a);
  if (u == 0.0) return 1.0 / (a * a);
  switch (xi.kind()) {
    case SpectralMeasure::Kind::Dirac: {
      const double d = u * xi.atom() - a;
      return 1.0 / (d * d);
    }
    case SpectralMeasure::Kind::Uniform:
      return 1.0 / ((u * xi.lower() - a) * (u * xi.upper() - a));
    case SpectralMeasure::Kind::Semicircle: {
      const double w = xi.center() - a / u;
      return (2.0 / (u * u)) * (w / std::sqrt(w * w - 1.0) - 1.0);
    }
    case SpectralMeasure::Kind::Empirical: {
      double sum = 0.0;
      for (double lam : xi.eigenvalues()) {
        const double d = u * lam - a;
        sum += 1.0 / (d * d);
      }
      return sum / static_cast<double>(xi.eigenvalues().size());
    }
  }
  return 0.0;
}

namespace {

struct FixedPointEq {
  const SpectralMeasure& xi;
  const AsymptoticRegime& regime;
  double a;

  double g(double h) const {
    return h0_transform(xi, regime, a - 1.0 / (regime.gamma * (1.0 + h)));
  }
  double g_prime(double h) const {
    const double arg = a - 1.0 / (regime.gamma * (1.0 + h));
    const double chain = 1.0 / (regime.gamma * (1.0 + h) * (1.0 + h));
    return h0_derivative(xi, regime, arg) * chain;
  }
  double phi(double h) const { return h - g(h); }
};

// One continuation step: locate the positive root of phi near h_init. A damped
// Picard pass handles the contractive region; when the map is expanding (the
// unpenalized overparameterized side) a bracketed bisection takes over. Newton
// on phi polishes either answer.
double solve_step(const FixedPointEq& eq, double h_init, int& iters) {
  double x = std::max(h_init, 0.0);
  bool settled = false;
  for (int i = 0; i < 80; ++i) {
    ++iters;
    const double next = 0.5 * x + 0.5 * eq.g(x);
    const bool done = std::abs(next - x) <= 1e-12 * (1.0 + std::abs(next));
    x = next;
    if (done) {
      settled = true;
      break;
    }
  }
  if (!settled) {
    // phi(0) = -g(0) < 0 always, and phi grows like h for large h.
    double lo = 0.0;
    double hi = std::max({1.0, 2.0 * x, 2.0 * h_init});
    int expand = 0;
    while (eq.phi(hi) < 0.0) {
      ++iters;
      hi *= 2.0;
      if (++expand > 200 || !std::isfinite(hi)) {
        throw NoConvergence("solve_h: failed to bracket the fixed point", iters, eq.phi(hi));
      }
    }
    for (int i = 0; i < 200 && (hi - lo) > 1e-14 * (1.0 + hi); ++i) {
      ++iters;
      const double mid = 0.5 * (lo + hi);
      (eq.phi(mid) < 0.0 ? lo : hi) = mid;
    }
    x = 0.5 * (lo + hi);
  }
  for (int i = 0; i < 8; ++i) {
    ++iters;
    const double f = eq.phi(x);
    const double fp = 1.0 - eq.g_prime(x);
    if (fp == 0.0) break;
    const double step = f / fp;
    const double next = x - step;
    if (!(next > 0.0)) break;
    x = next;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
  }
  return x;
}

}  // namespace

double solve_h(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a) {
  if (!std::isfinite(a)) throw std::invalid_argument("solve_h: a must be finite");
  if (a > 0.0 || (regime.tau_bar == 0.0 && a == 0.0)) {
    std::ostringstream os;
    os << "solve_h: a = " << a << " outside the admissible range (a <= 0, strict for tau_bar = 0)";
    throw PoleInDomain(os.str());
  }

  std::vector<double> path;
  if (a <= -10.0) {
    path.push_back(a);
  } else {
    const double target = std::max(std::abs(a), 1e-12);
    const int steps = 40;
    const double ratio = std::pow(target / 10.0, 1.0 / (steps - 1));
    double mag = 10.0;
    for (int i = 0; i < steps; ++i, mag *= ratio) path.push_back(-mag);
    path.back() = -target;
    if (a == 0.0) path.push_back(0.0);  // tau_bar > 0: the shifted argument stays below the edge
  }

  int iters = 0;
  double h = 0.0;
  for (double ak : path) {
    FixedPointEq eq{xi, regime, ak};
    h = solve_step(eq, h, iters);
  }

  const FixedPointEq eq{xi, regime, a};
  const double resid = std::abs(eq.phi(h));
  const double tol = std::abs(h) <= 1e3 ? 1e-10 : 1e-13 * std::abs(h);
  if (!(resid <= tol)) {
    throw NoConvergence("solve_h: residual above tolerance", iters, resid);
  }
  return h;
}

namespace {

double limit_dirac(double lam, const AsymptoticRegime& regime) {
  // Positive root of  lam*tau_bar*h^2 + (lam*tau_bar + 1 - gamma)*h - gamma = 0,
  // written to avoid cancellation in either sign of the linear coefficient.
  const double b = lam * regime.tau_bar + 1.0 - regime.gamma;
  const double disc = std::sqrt(b * b + 4.0 * lam * regime.tau_bar * regime.gamma);
  if (b >= 0.0) return 2.0 * regime.gamma / (b + disc);
  return (disc - b) / (2.0 * lam * regime.tau_bar);
}

double limit_uniform(const SpectralMeasure& xi, const AsymptoticRegime& regime) {
  const double gamma = regime.gamma;
  const double tau_bar = regime.tau_bar;
  const double width = tau_bar * (xi.upper() - xi.lower());
  auto f = [&](double h) {
    return std::exp(width * h / gamma) - 1.0 -
           width / (tau_bar * xi.lower() + 1.0 / (1.0 + h));
  };
  double hi = 1e3;
  if (gamma < 1.0) hi += gamma / (1.0 - gamma);
  if (gamma > 1.0) hi += 1.0 / (gamma - 1.0);
  int expand = 0;
  while (!(f(hi) > 0.0)) {
    hi *= 2.0;
    if (++expand > 60) {
      throw NoConvergence("limit_h_at_zero: bracket expansion failed", expand, f(hi));
    }
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && (hi - lo) > 1e-14 * (1.0 + hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double limit_semicircle(const SpectralMeasure& xi, const AsymptoticRegime& regime) {
  const double gamma = regime.gamma;
  const double u = regime.tau_bar / gamma;
  const double c = xi.center();
  // Substituting the closed-form transform into the limit equation gives
  //   (u^2/4) h^3 + (u^2/4 - u c) h^2 + (1 - u c - 1/gamma) h + 1 = 0.
  const double c3 = 0.25 * u * u;
  const double c2 = 0.25 * u * u - u * c;
  const double c1 = 1.0 - u * c - 1.0 / gamma;
  const double c0 = 1.0;

  Eigen::Matrix3d comp = Eigen::Matrix3d::Zero();
  comp(1, 0) = 1.0;
  comp(2, 1) = 1.0;
  comp(0, 2) = -c0 / c3;
  comp(1, 2) = -c1 / c3;
  comp(2, 2) = -c2 / c3;
  const Eigen::EigenSolver<Eigen::Matrix3d> es(comp);

  double best = 0.0;
  double best_resid = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const std::complex<double> r = es.eigenvalues()(i);
    if (std::abs(r.imag()) > 1e-8 * (1.0 + std::abs(r.real()))) continue;
    double h = r.real();
    if (!(h > 0.0)) continue;
    for (int k = 0; k < 3; ++k) {  // polish on the cubic itself
      const double val = ((c3 * h + c2) * h + c1) * h + c0;
      const double der = (3.0 * c3 * h + 2.0 * c2) * h + c1;
      if (der == 0.0) break;
      h -= val / der;
    }
    if (!(h > 0.0)) continue;
    const double resid = std::abs(h - h0_transform(xi, regime, -1.0 / (gamma * (1.0 + h))));
    if (resid <= 1e-7 * (1.0 + h) && resid < best_resid) {
      best = h;
      best_resid = resid;
    }
  }
  if (!std::isfinite(best_resid)) {
    throw NoAdmissibleRoot("limit_h_at_zero: no admissible cubic root for " + xi.describe());
  }
  return best;
}

double limit_empirical(const SpectralMeasure& xi, const AsymptoticRegime& regime) {
  // Solve near the edge and extrapolate; the solution is smooth in a for
  // tau_bar > 0, so quadratic extrapolation over a decade-spaced grid leaves
  // an error far below the solver tolerance.
  const double eps[3] = {1e-2, 1e-3, 1e-4};
  double y[3];
  for (int i = 0; i < 3; ++i) y[i] = solve_h(xi, regime, -eps[i]);
  double out = 0.0;
  for (int i = 0; i < 3; ++i) {
    double w = 1.0;
    for (int j = 0; j < 3; ++j) {
      if (j != i) w *= eps[j] / (eps[j] - eps[i]);
    }
    out += w * y[i];
  }
  return out;
}

}  // namespace

double limit_h_at_zero(const SpectralMeasure& xi, const AsymptoticRegime& regime) {
  if (regime.tau_bar == 0.0) {
    // Measure independent: the weighted transform degenerates to -1/a.
    return regime.gamma < 1.0 ? regime.gamma / (1.0 - regime.gamma)
                              : 1.0 / (regime.gamma - 1.0);
  }
  switch (xi.kind()) {
    case SpectralMeasure::Kind::Dirac: return limit_dirac(xi.atom(), regime);
    case SpectralMeasure::Kind::Uniform: return limit_uniform(xi, regime);
    case SpectralMeasure::Kind::Semicircle: return limit_semicircle(xi, regime);
    case SpectralMeasure::Kind::Empirical: return limit_empirical(xi, regime);
  }
  return 0.0;
}

double variance_bound(const SpectralMeasure& xi, const AsymptoticRegime& regime,
                      const RiskBoundInputs& in) {
  const double lim = limit_h_at_zero(xi, regime);
  const double c = (regime.gamma > 1.0 && regime.tau_bar == 0.0) ? in.lambda_star : 1.0;
  const double front = 1.0 + std::sqrt(in.lambda_star);
  return 2.0 * front * front * c * lim;
}

double risk_bound(const SpectralMeasure& xi, const AsymptoticRegime& regime,
                  const RiskBoundInputs& in) {
  const double lim = limit_h_at_zero(xi, regime);
  const double c = (regime.gamma > 1.0 && regime.tau_bar == 0.0) ? in.lambda_star : 1.0;
  const double front = 1.0 + std::sqrt(in.lambda_star);
  return 2.0 * front * front * (c * lim + in.lambda_max * in.radius_r * in.radius_r);
}

}  // namespace specrisk
