// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/erf.hpp>

namespace vbda {

/// Library format version written into every serialized artifact.
inline constexpr int kFormatVersion = 1;

/// Interior clamp for copula arguments; the Gumbel density diverges at corners.
inline constexpr double kEpsU = 1e-10;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed data, configuration or arguments.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An ordinal value that the margin never saw.
class UnknownCategory : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Copula parameter outside its constrained box.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Root-finding or density evaluation broke down.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

inline double clamp_unit(double u) noexcept { return std::clamp(u, kEpsU, 1.0 - kEpsU); }

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_logpdf(double z) noexcept {
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInput("normal_quantile: probability outside (0,1): " + std::to_string(p));
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double logit(double a) noexcept { return std::log(a / (1.0 - a)); }

inline double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) noexcept {
  if (a < b) std::swap(a, b);
  if (b == -INFINITY) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace vbda
