#pragma once

#include <stdexcept>
#include <string>

namespace specrisk {

// Transform evaluated at a point on or past the pole edge of its domain.
struct PoleInDomain : std::domain_error {
  using std::domain_error::domain_error;
};

// Invalid (gamma, tau_bar) pair for the requested operation.
struct InvalidRegime : std::domain_error {
  using std::domain_error::domain_error;
};

struct NoConvergence : std::runtime_error {
  int iterations;
  double residual;
  NoConvergence(const std::string& what, int iterations_, double residual_)
      : std::runtime_error(what), iterations(iterations_), residual(residual_) {}
};

// Root filter rejected every candidate (real, positive, fixed-point residual).
struct NoAdmissibleRoot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotSymmetric : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IllConditioned : std::runtime_error {
  double condition_estimate;
  IllConditioned(const std::string& what, double condition_estimate_)
      : std::runtime_error(what), condition_estimate(condition_estimate_) {}
};

struct NotPositiveDefinite : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

}  // namespace specrisk
