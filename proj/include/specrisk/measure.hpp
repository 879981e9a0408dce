#pragma once

#include <string>
#include <vector>

namespace specrisk {

// Limiting spectral measure of the inverse Fisher sequence. Four families, all
// supported on the positive half line: a point mass, a uniform density, a
// semicircle of radius one, and a finite empirical spectrum.
class SpectralMeasure {
 public:
  enum class Kind { Dirac, Uniform, Semicircle, Empirical };

  static SpectralMeasure dirac(double atom);
  static SpectralMeasure uniform(double lower, double upper);
  // Density (2/pi) * sqrt(1 - (x - center)^2) on [center - 1, center + 1];
  // center > 1 keeps the support positive.
  static SpectralMeasure semicircle(double center);
  static SpectralMeasure empirical(std::vector<double> eigenvalues);

  Kind kind() const { return kind_; }
  double atom() const { return atom_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double center() const { return center_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }

  double support_min() const;
  double support_max() const;

  // Inverse CDF, q in [0, 1]. Finite-p Fisher surrogates are built from
  // quantiles at (i - 1/2)/p; for an empirical measure of the same size that
  // reproduces the stored spectrum exactly.
  double quantile(double q) const;

  std::string describe() const;

 private:
  SpectralMeasure() = default;

  Kind kind_ = Kind::Dirac;
  double atom_ = 1.0;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double center_ = 0.0;
  std::vector<double> eigenvalues_;
};

}  // namespace specrisk
