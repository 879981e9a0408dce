#include "specrisk/measure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace specrisk {

SpectralMeasure SpectralMeasure::dirac(double atom) {
  if (!(atom > 0.0)) throw std::invalid_argument("dirac measure: atom must be positive");
  SpectralMeasure m;
  m.kind_ = Kind::Dirac;
  m.atom_ = atom;
  return m;
}

SpectralMeasure SpectralMeasure::uniform(double lower, double upper) {
  if (!(lower > 0.0) || !(upper > lower)) {
    throw std::invalid_argument("uniform measure: need 0 < lower < upper");
  }
  SpectralMeasure m;
  m.kind_ = Kind::Uniform;
  m.lower_ = lower;
  m.upper_ = upper;
  return m;
}

SpectralMeasure SpectralMeasure::semicircle(double center) {
  if (!(center > 1.0)) {
    throw std::invalid_argument("semicircle measure: center must exceed the radius 1");
  }
  SpectralMeasure m;
  m.kind_ = Kind::Semicircle;
  m.center_ = center;
  return m;
}

SpectralMeasure SpectralMeasure::empirical(std::vector<double> eigenvalues) {
  if (eigenvalues.empty()) {
    throw std::invalid_argument("empirical measure: eigenvalue list is empty");
  }
  for (double v : eigenvalues) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("empirical measure: eigenvalues must be positive and finite");
    }
  }
  std::sort(eigenvalues.begin(), eigenvalues.end());
  SpectralMeasure m;
  m.kind_ = Kind::Empirical;
  m.eigenvalues_ = std::move(eigenvalues);
  return m;
}

double SpectralMeasure::support_min() const {
  switch (kind_) {
    case Kind::Dirac: return atom_;
    case Kind::Uniform: return lower_;
    case Kind::Semicircle: return center_ - 1.0;
    case Kind::Empirical: return eigenvalues_.front();
  }
  return 0.0;
}

double SpectralMeasure::support_max() const {
  switch (kind_) {
    case Kind::Dirac: return atom_;
    case Kind::Uniform: return upper_;
    case Kind::Semicircle: return center_ + 1.0;
    case Kind::Empirical: return eigenvalues_.back();
  }
  return 0.0;
}

namespace {

// CDF of the unit semicircle on [-1, 1].
double semicircle_cdf(double u) {
  u = std::clamp(u, -1.0, 1.0);
  return 0.5 + (u * std::sqrt(1.0 - u * u) + std::asin(u)) / M_PI;
}

}  // namespace

double SpectralMeasure::quantile(double q) const {
  if (!(q >= 0.0) || !(q <= 1.0)) {
    throw std::invalid_argument("quantile: q must lie in [0, 1]");
  }
  switch (kind_) {
    case Kind::Dirac:
      return atom_;
    case Kind::Uniform:
      return lower_ + q * (upper_ - lower_);
    case Kind::Semicircle: {
      double lo = -1.0, hi = 1.0;
      for (int i = 0; i < 90; ++i) {
        const double mid = 0.5 * (lo + hi);
        (semicircle_cdf(mid) < q ? lo : hi) = mid;
      }
      return center_ + 0.5 * (lo + hi);
    }
    case Kind::Empirical: {
      const auto p = eigenvalues_.size();
      auto idx = static_cast<std::size_t>(q * static_cast<double>(p));
      if (idx >= p) idx = p - 1;
      return eigenvalues_[idx];
    }
  }
  return 0.0;
}

std::string SpectralMeasure::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Dirac: os << "dirac(" << atom_ << ")"; break;
    case Kind::Uniform: os << "uniform(" << lower_ << ", " << upper_ << ")"; break;
    case Kind::Semicircle: os << "semicircle(center=" << center_ << ")"; break;
    case Kind::Empirical: os << "empirical(p=" << eigenvalues_.size() << ")"; break;
  }
  return os.str();
}

}  // namespace specrisk
