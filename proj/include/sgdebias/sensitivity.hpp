#pragma once

// E-values on the log odds ratio scale, treating the odds ratio as a risk
// ratio.

#include <algorithm>
#include <cmath>

#include "sgdebias/errors.hpp"

namespace sgdebias {

/// Minimal confounder strength (risk-ratio scale) that explains away `log_or`.
inline double e_value(double log_or) {
  if (!std::isfinite(log_or)) throw ContractViolation("log odds ratio must be finite");
  const double rr = std::exp(std::abs(log_or));
  if (rr == 1.0) return 1.0;
  return rr + std::sqrt(rr * (rr - 1.0));
}

/// E-value of the interval limit nearer the null; 1 when the interval covers 0.
inline double e_value_for_bound(double lower, double upper) {
  if (!std::isfinite(lower) || !std::isfinite(upper) || lower > upper)
    throw ContractViolation("interval must be finite with lower <= upper");
  if (lower <= 0.0 && upper >= 0.0) return 1.0;
  return e_value(lower > 0.0 ? lower : upper);
}

struct EvalueReport {
  double log_or = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool has_interval = false;
  double estimate_evalue = 1.0;
  double bound_evalue = 1.0;  // 1 when no interval was given
};

inline EvalueReport evalue_report(double log_or) {
  EvalueReport r;
  r.log_or = log_or;
  r.estimate_evalue = e_value(log_or);
  return r;
}

inline EvalueReport evalue_report(double log_or, double lower, double upper) {
  EvalueReport r = evalue_report(log_or);
  r.lower = lower;
  r.upper = upper;
  r.has_interval = true;
  r.bound_evalue = e_value_for_bound(lower, upper);
  return r;
}

}  // namespace sgdebias
