#pragma once

#include "specrisk/errors.hpp"
#include "specrisk/measure.hpp"

namespace specrisk {

// Proportional-limit parameters: gamma = lim p/n, tau_bar = lim n*tau/p.
// The pair (gamma = 1, tau_bar = 0) is rejected: the unpenalized square case
// has no finite limit.
struct AsymptoticRegime {
  double gamma;
  double tau_bar;
  AsymptoticRegime(double gamma_, double tau_bar_);
};

struct RiskBoundInputs {
  double lambda_star;  // operator-norm bound on the Fisher sequence, >= 1
  double lambda_max;   // weight-matrix eigenvalue bound in the bias term, > 0
  double radius_r;     // parameter-space radius, > 0
  RiskBoundInputs(double lambda_star_, double lambda_max_, double radius_r_);
};

// Weighted Stieltjes transform of xi at a:
//   h0(a) = integral of 1 / ((tau_bar/gamma) * lambda - a) dxi(lambda),
// defined for a < (tau_bar/gamma) * inf(support). With tau_bar = 0 the weight
// collapses and h0(a) = -1/a for every measure (a < 0 strictly).
double h0_transform(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a);

// d/da of h0_transform on the same domain (always positive).
double h0_derivative(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a);

// Positive solution of the self-consistent equation
//   h(a) = h0(a - 1 / (gamma * (1 + h(a))))
// found by continuation in a from deep in the stable region. Requires a <= 0,
// strictly negative when tau_bar = 0. The returned value has fixed-point
// residual at most 1e-10 for solutions of moderate size (the tau_bar = 0,
// gamma > 1 solution grows like 1/|a| near zero, where only a relative
// residual is representable).
double solve_h(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a);

// lim_{a -> 0-} h(a), by closed form or low-dimensional root finding:
//   tau_bar = 0        -> gamma/(1-gamma) below the interpolation threshold,
//                         1/(gamma-1) above it (measure independent),
//   dirac               -> positive root of a quadratic,
//   uniform             -> bracketed bisection on a transcendental equation,
//   semicircle          -> admissible root of a cubic (NoAdmissibleRoot if the
//                          filter rejects all three),
//   empirical           -> Richardson extrapolation of solve_h along
//                          a = -1e-2, -1e-3, -1e-4.
double limit_h_at_zero(const SpectralMeasure& xi, const AsymptoticRegime& regime);

// 2 * (1 + sqrt(lambda_star))^2 * C * lim h, with C = lambda_star in the
// overparameterized unpenalized regime (gamma > 1, tau_bar = 0) and 1 else.
double variance_bound(const SpectralMeasure& xi, const AsymptoticRegime& regime,
                      const RiskBoundInputs& in);

// variance_bound plus the bias envelope 2*(1+sqrt(lambda_star))^2 * lambda_max * r^2.
double risk_bound(const SpectralMeasure& xi, const AsymptoticRegime& regime,
                  const RiskBoundInputs& in);

}  // namespace specrisk
