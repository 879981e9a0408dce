#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "specrisk/errors.hpp"
#include "specrisk/measure.hpp"
#include "specrisk/stieltjes.hpp"

using specrisk::AsymptoticRegime;
using specrisk::RiskBoundInputs;
using specrisk::SpectralMeasure;

namespace {

// Reference transform by quadrature against the defining density (continuous
// families) or the defining sum (atoms).
double h0_reference(const SpectralMeasure& xi, const AsymptoticRegime& regime, double a) {
  const double u = regime.tau_bar / regime.gamma;
  switch (xi.kind()) {
    case SpectralMeasure::Kind::Dirac:
      return 1.0 / (u * xi.atom() - a);
    case SpectralMeasure::Kind::Uniform: {
      const double width = xi.upper() - xi.lower();
      return oracle::integrate(
          [&](double lam) { return 1.0 / ((u * lam - a) * width); }, xi.lower(), xi.upper());
    }
    case SpectralMeasure::Kind::Semicircle: {
      const double c = xi.center();
      return oracle::integrate(
          [&](double lam) {
            const double t = lam - c;
            return (2.0 / M_PI) * std::sqrt(std::max(0.0, 1.0 - t * t)) / (u * lam - a);
          },
          c - 1.0, c + 1.0);
    }
    case SpectralMeasure::Kind::Empirical: {
      double s = 0.0;
      for (double lam : xi.eigenvalues()) s += 1.0 / (u * lam - a);
      return s / static_cast<double>(xi.eigenvalues().size());
    }
  }
  return 0.0;
}

}  // namespace

TEST_CASE("measure construction validates parameters") {
  CHECK_THROWS_AS(SpectralMeasure::dirac(0.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralMeasure::dirac(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralMeasure::uniform(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralMeasure::uniform(2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralMeasure::semicircle(1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralMeasure::empirical({}), std::invalid_argument);
  CHECK_THROWS_AS(SpectralMeasure::empirical({1.0, -2.0}), std::invalid_argument);

  const auto semi = SpectralMeasure::semicircle(2.5);
  CHECK(semi.support_min() == doctest::Approx(1.5));
  CHECK(semi.support_max() == doctest::Approx(3.5));
}

TEST_CASE("empirical measure sorts and returns its own order statistics as quantiles") {
  const auto m = SpectralMeasure::empirical({3.0, 1.0, 2.0, 4.0});
  CHECK(m.eigenvalues() == std::vector<double>{1.0, 2.0, 3.0, 4.0});
  const int p = 4;
  for (int i = 1; i <= p; ++i) {
    CHECK(m.quantile((i - 0.5) / p) == doctest::Approx(static_cast<double>(i)).epsilon(1e-15));
  }
}

TEST_CASE("semicircle quantiles invert the semicircle distribution function") {
  const auto m = SpectralMeasure::semicircle(2.0);
  for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    const double x = m.quantile(q);
    const double mass = oracle::integrate(
        [&](double lam) {
          const double t = lam - 2.0;
          return (2.0 / M_PI) * std::sqrt(std::max(0.0, 1.0 - t * t));
        },
        1.0, x);
    CHECK(mass == doctest::Approx(q).epsilon(1e-8));
  }
  CHECK(m.quantile(0.5) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("regime construction rejects the degenerate square unpenalized pair") {
  CHECK_THROWS_AS(AsymptoticRegime(1.0, 0.0), specrisk::InvalidRegime);
  CHECK_THROWS_AS(AsymptoticRegime(0.0, 1.0), specrisk::InvalidRegime);
  CHECK_THROWS_AS(AsymptoticRegime(-1.0, 1.0), specrisk::InvalidRegime);
  CHECK_THROWS_AS(AsymptoticRegime(1.0, -0.5), specrisk::InvalidRegime);
  CHECK_NOTHROW(AsymptoticRegime(1.0, 0.5));
  CHECK_NOTHROW(AsymptoticRegime(2.0, 0.0));
}

TEST_CASE("weighted transform: pinned closed-form values") {
  const AsymptoticRegime unit(1.0, 1.0);

  CHECK(specrisk::h0_transform(SpectralMeasure::dirac(2.0), unit, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-14));

  CHECK(specrisk::h0_transform(SpectralMeasure::uniform(1.0, 2.0), unit, 0.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const double semicircle_expected = 4.0 - 2.0 * std::sqrt(3.0);  // = 0.5358983848622456
  CHECK(specrisk::h0_transform(SpectralMeasure::semicircle(2.0), unit, 0.0) ==
        doctest::Approx(semicircle_expected).epsilon(1e-12));

  const auto emp = SpectralMeasure::empirical({1.0, 2.0, 3.0, 4.0});
  const double expected = (1.0 / 2.0 + 1.0 / 3.0 + 1.0 / 4.0 + 1.0 / 5.0) / 4.0;
  CHECK(specrisk::h0_transform(emp, unit, -1.0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("weighted transform collapses to -1/a when the penalty scale vanishes") {
  const AsymptoticRegime reg(0.5, 0.0);
  const std::vector<SpectralMeasure> measures = {
      SpectralMeasure::dirac(3.0), SpectralMeasure::uniform(1.0, 2.0),
      SpectralMeasure::semicircle(2.0), SpectralMeasure::empirical({0.5, 1.5, 7.0})};
  for (double a : {-10.0, -1.0, -0.25, -1e-3}) {
    for (const auto& m : measures) {
      CHECK(specrisk::h0_transform(m, reg, a) == doctest::Approx(-1.0 / a).epsilon(1e-15));
      CHECK(specrisk::h0_derivative(m, reg, a) == doctest::Approx(1.0 / (a * a)).epsilon(1e-15));
    }
  }
}

TEST_CASE("weighted transform agrees with quadrature of the defining integral") {
  const std::vector<SpectralMeasure> measures = {
      SpectralMeasure::uniform(0.5, 3.0), SpectralMeasure::semicircle(1.7),
      SpectralMeasure::dirac(1.3), SpectralMeasure::empirical({0.7, 1.1, 2.9})};
  const std::vector<AsymptoticRegime> regimes = {
      {1.0, 1.0}, {0.5, 2.0}, {2.0, 0.5}, {4.0, 4.0}};
  for (const auto& m : measures) {
    for (const auto& reg : regimes) {
      const double edge = (reg.tau_bar / reg.gamma) * m.support_min();
      for (double a : {edge - 3.0, edge - 1.0, edge - 0.1, edge - 0.01}) {
        const double got = specrisk::h0_transform(m, reg, a);
        const double want = h0_reference(m, reg, a);
        CHECK(got == doctest::Approx(want).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("weighted transform accepts positive a strictly below the pole edge") {
  const AsymptoticRegime unit(1.0, 1.0);
  // edge = 2; a = 1 is legal and the atom form gives 1/(2 - 1).
  CHECK(specrisk::h0_transform(SpectralMeasure::dirac(2.0), unit, 1.0) ==
        doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("weighted transform derivative matches central differences") {
  const std::vector<SpectralMeasure> measures = {
      SpectralMeasure::uniform(1.0, 2.0), SpectralMeasure::semicircle(2.2),
      SpectralMeasure::dirac(0.8), SpectralMeasure::empirical({1.0, 4.0})};
  const AsymptoticRegime reg(1.5, 0.75);
  for (const auto& m : measures) {
    for (double a : {-2.0, -0.5, -0.05}) {
      const double fd = oracle::central_diff(
          [&](double x) { return specrisk::h0_transform(m, reg, x); }, a, 1e-6);
      CHECK(specrisk::h0_derivative(m, reg, a) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("transform raises on or past the pole edge") {
  const AsymptoticRegime unit(1.0, 1.0);
  const auto m = SpectralMeasure::dirac(2.0);
  CHECK_THROWS_AS(specrisk::h0_transform(m, unit, 2.0), specrisk::PoleInDomain);
  CHECK_THROWS_AS(specrisk::h0_transform(m, unit, 2.5), specrisk::PoleInDomain);
  const AsymptoticRegime zero_pen(0.5, 0.0);
  CHECK_THROWS_AS(specrisk::h0_transform(m, zero_pen, 0.0), specrisk::PoleInDomain);
  CHECK_THROWS_AS(specrisk::h0_transform(m, zero_pen, 0.1), specrisk::PoleInDomain);
}

// ---------------------------------------------------------------------------
// Self-consistent solver.
// ---------------------------------------------------------------------------

TEST_CASE("solver rejects arguments past the admissible range") {
  const auto m = SpectralMeasure::dirac(1.0);
  CHECK_THROWS_AS(specrisk::solve_h(m, {1.0, 1.0}, 0.5), specrisk::PoleInDomain);
  CHECK_THROWS_AS(specrisk::solve_h(m, {0.5, 0.0}, 0.0), specrisk::PoleInDomain);
  CHECK_NOTHROW(specrisk::solve_h(m, {1.0, 1.0}, 0.0));
}

TEST_CASE("solver satisfies its own fixed-point equation") {
  const std::vector<SpectralMeasure> measures = {
      SpectralMeasure::dirac(1.0), SpectralMeasure::uniform(1.0, 2.0),
      SpectralMeasure::semicircle(2.0), SpectralMeasure::empirical({0.5, 1.0, 2.0})};
  const std::vector<AsymptoticRegime> regimes = {
      {0.5, 1.0}, {1.0, 1.0}, {2.0, 2.0}, {4.0, 0.5}, {0.5, 0.0}};
  for (const auto& m : measures) {
    for (const auto& reg : regimes) {
      for (double a : {-5.0, -1.0, -0.1, -1e-3}) {
        const double h = specrisk::solve_h(m, reg, a);
        CHECK(h > 0.0);
        const double back = specrisk::h0_transform(m, reg, a - 1.0 / (reg.gamma * (1.0 + h)));
        CHECK(std::abs(h - back) <= 1e-10);
      }
    }
  }
}

TEST_CASE("solver output increases as a approaches zero from below") {
  const std::vector<double> grid = {-5.0, -2.0, -1.0, -0.5, -0.1, -0.01};
  const auto m = SpectralMeasure::dirac(1.0);
  for (const AsymptoticRegime& reg :
       std::vector<AsymptoticRegime>{{1.0, 1.0}, {0.5, 0.0}, {2.0, 0.5}}) {
    double prev = -1.0;
    for (double a : grid) {
      const double h = specrisk::solve_h(m, reg, a);
      CHECK(h > prev);
      prev = h;
    }
  }
}

TEST_CASE("solver approaches the point-mass closed form near the edge") {
  // Positive root of  lam*tb*h^2 + (lam*tb + 1 - g)*h - g = 0.
  auto closed = [](double lam, double tb, double g) {
    const double b = lam * tb + 1.0 - g;
    return (-b + std::sqrt(b * b + 4.0 * lam * tb * g)) / (2.0 * lam * tb);
  };
  for (double lam : {0.5, 1.0, 2.0}) {
    for (double tb : {0.5, 1.0, 2.0}) {
      for (double g : {0.5, 1.0, 2.0}) {
        const auto m = SpectralMeasure::dirac(lam);
        const AsymptoticRegime reg(g, tb);
        const double near_edge = specrisk::solve_h(m, reg, -1e-6);
        CHECK(near_edge == doctest::Approx(closed(lam, tb, g)).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("solver near the edge recovers the underparameterized unpenalized limit") {
  for (double g : {0.25, 0.5, 0.8}) {
    const auto m = SpectralMeasure::uniform(1.0, 2.0);
    const double h = specrisk::solve_h(m, {g, 0.0}, -1e-8);
    CHECK(h == doctest::Approx(g / (1.0 - g)).epsilon(1e-5));
  }
}

// ---------------------------------------------------------------------------
// Limits at the edge.
// ---------------------------------------------------------------------------

TEST_CASE("edge limit without penalty is measure independent and exact") {
  const std::vector<SpectralMeasure> measures = {
      SpectralMeasure::dirac(3.0), SpectralMeasure::uniform(0.5, 1.5),
      SpectralMeasure::semicircle(2.4), SpectralMeasure::empirical({1.0, 9.0})};
  for (double g : {0.25, 0.5, 2.0, 4.0, 10.0}) {
    const double expected = g < 1.0 ? g / (1.0 - g) : 1.0 / (g - 1.0);
    for (const auto& m : measures) {
      CHECK(std::abs(specrisk::limit_h_at_zero(m, {g, 0.0}) - expected) <= 1e-12);
    }
  }
}

TEST_CASE("edge limit for a point mass: golden-ratio pin and quadratic root") {
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  CHECK(std::abs(specrisk::limit_h_at_zero(SpectralMeasure::dirac(1.0), {1.0, 1.0}) - golden) <=
        1e-12);

  for (double lam : {0.5, 1.0, 2.0}) {
    for (double tb : {0.5, 1.0, 2.0}) {
      for (double g : {0.5, 1.0, 2.0}) {
        const double h = specrisk::limit_h_at_zero(SpectralMeasure::dirac(lam), {g, tb});
        // Residual in the defining quadratic.
        const double resid = lam * tb * h * h + (lam * tb + 1.0 - g) * h - g;
        CHECK(std::abs(resid) <= 1e-12);
        CHECK(h > 0.0);
      }
    }
  }
}

TEST_CASE("edge limit for the uniform family solves the exponential equation") {
  for (double g : {0.5, 1.0, 2.0}) {
    for (double tb : {0.5, 1.0, 2.0}) {
      const auto m = SpectralMeasure::uniform(1.0, 2.0);
      const AsymptoticRegime reg(g, tb);
      const double h = specrisk::limit_h_at_zero(m, reg);
      // Residual in the exponential form of the limit equation.
      const double lhs = std::exp(tb * (2.0 - 1.0) * h / g);
      const double rhs = 1.0 + tb * (2.0 - 1.0) / (tb * 1.0 + 1.0 / (1.0 + h));
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
      // And the value must be a genuine fixed point of the transform.
      const double back = specrisk::h0_transform(m, reg, -1.0 / (g * (1.0 + h)));
      CHECK(std::abs(h - back) <= 1e-10);
      // Cross-route agreement with the continuation solver.
      CHECK(h == doctest::Approx(specrisk::solve_h(m, reg, -1e-7)).epsilon(1e-5));
    }
  }
}

TEST_CASE("edge limit for the semicircle family: admissible cubic root") {
  struct Pt {
    double center, gamma, tau_bar, expected;
  };
  // Expected values frozen from the continuation solver run at a = -1e-9.
  const std::vector<Pt> grid = {{2.0, 1.0, 1.0, 0.380316},
                                {2.0, 0.5, 0.5, 0.287194},
                                {2.0, 2.0, 2.0, 0.447742},
                                {3.0, 1.5, 0.8, 0.497566},
                                {1.5, 0.8, 1.2, 0.333333}};
  for (const auto& pt : grid) {
    const auto m = SpectralMeasure::semicircle(pt.center);
    const AsymptoticRegime reg(pt.gamma, pt.tau_bar);
    const double h = specrisk::limit_h_at_zero(m, reg);
    CHECK(h == doctest::Approx(pt.expected).epsilon(2e-5));
    // Root route vs continuation route.
    CHECK(std::abs(h - specrisk::solve_h(m, reg, -1e-9)) <= 1e-6);
    // Fixed-point residual measured against quadrature, not library code.
    const double back = h0_reference(m, reg, -1.0 / (reg.gamma * (1.0 + h)));
    CHECK(std::abs(h - back) <= 1e-9);
  }
}

TEST_CASE("edge limit for an empirical spectrum extrapolates the solver") {
  // A singleton spectrum must reproduce the point-mass closed form.
  for (double lam : {0.5, 2.0}) {
    const double direct = specrisk::limit_h_at_zero(SpectralMeasure::dirac(lam), {1.5, 0.8});
    const double extrap =
        specrisk::limit_h_at_zero(SpectralMeasure::empirical({lam}), {1.5, 0.8});
    // Quadratic extrapolation over a decade grid leaves a ~1e-7 truncation
    // error; the route contract itself only promises 1e-4.
    CHECK(extrap == doctest::Approx(direct).epsilon(1e-6));
  }
  const auto m = SpectralMeasure::empirical({1.0, 2.0, 3.0});
  const AsymptoticRegime reg(2.0, 1.0);
  const double lim = specrisk::limit_h_at_zero(m, reg);
  CHECK(lim == doctest::Approx(specrisk::solve_h(m, reg, -1e-6)).epsilon(1e-4));
}

TEST_CASE("edge limit shrinks as the penalty scale grows") {
  for (const auto& m : {SpectralMeasure::dirac(1.0), SpectralMeasure::uniform(1.0, 2.0)}) {
    for (double g : {0.5, 2.0}) {
      double prev = std::numeric_limits<double>::infinity();
      for (double tb : {0.5, 1.0, 2.0, 4.0}) {
        const double h = specrisk::limit_h_at_zero(m, {g, tb});
        CHECK(h < prev);
        prev = h;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Risk envelopes.
// ---------------------------------------------------------------------------

TEST_CASE("variance envelope: pinned arithmetic") {
  const auto m = SpectralMeasure::dirac(1.0);
  CHECK(specrisk::variance_bound(m, {0.5, 0.0}, {1.0, 1.0, 1.0}) ==
        doctest::Approx(8.0).epsilon(1e-12));
  CHECK(specrisk::variance_bound(m, {2.0, 0.0}, {4.0, 1.0, 1.0}) ==
        doctest::Approx(72.0).epsilon(1e-12));
}

TEST_CASE("risk envelope adds the bias term") {
  const auto m = SpectralMeasure::dirac(1.0);
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  const double expected = 8.0 * (golden + 1.0);  // = 4*(sqrt(5)+1)
  CHECK(specrisk::risk_bound(m, {1.0, 1.0}, {1.0, 1.0, 1.0}) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(specrisk::risk_bound(m, {1.0, 1.0}, {1.0, 1.0, 1.0}) >
        specrisk::variance_bound(m, {1.0, 1.0}, {1.0, 1.0, 1.0}));
}

TEST_CASE("risk envelope inputs are validated") {
  CHECK_THROWS_AS(RiskBoundInputs(0.5, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RiskBoundInputs(1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RiskBoundInputs(1.0, 1.0, -1.0), std::invalid_argument);
}
