#pragma once

// Test-side reference computations. These deliberately avoid the library's own
// code paths: integrals go through adaptive Simpson on the defining density,
// roots through plain bisection, derivatives through central differences.

#include <cmath>
#include <functional>
#include <stdexcept>

namespace oracle {

inline double simpson(const std::function<double(double)>& f, double a, double b) {
  const double m = 0.5 * (a + b);
  return (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double left = simpson(f, a, m);
  const double right = simpson(f, m, b);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, right, 0.5 * tol, depth - 1);
}

// Adaptive Simpson quadrature of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-13) {
  return adaptive_simpson_rec(f, a, b, simpson(f, a, b), tol, 48);
}

// Bisection for a sign change of f on [lo, hi]; requires f(lo) and f(hi) to
// have opposite signs.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-14, int max_iters = 300) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) throw std::invalid_argument("bisect: no sign change");
  for (int i = 0; i < max_iters && (hi - lo) > tol * (1.0 + std::abs(hi)); ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

}  // namespace oracle
