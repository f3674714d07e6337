#pragma once

// End-to-end inference on one encoded dataset: full-data lasso residuals,
// R-Split, multiplier bootstrap, calibrated interval for the largest effect,
// and the uncalibrated and simultaneous comparators.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "sgdebias/boot_calibrate.hpp"
#include "sgdebias/design.hpp"
#include "sgdebias/glm_core.hpp"
#include "sgdebias/rsplit.hpp"
#include "sgdebias/sparse_select.hpp"
#include "sgdebias/streams.hpp"

namespace sgdebias {

struct PipelineConfig {
  SplitPlan plan;
  BootstrapConfig boot;
  SelectorConfig residual_selector;  // full-data lasso for the residuals
};

struct NaiveInterval {
  double estimate = 0.0;  // largest R-Split coordinate, unadjusted
  double se = 0.0;        // bootstrap SE of that coordinate
  double lower = 0.0;
  double upper = 0.0;
  double lower_one_sided = 0.0;
};

struct PipelineResult {
  ResidualFit residuals;
  RSplitEstimate estimate;  // estimate.se filled
  CalibratedBootstrapResult calibrated;
  IntervalResult calibrated_one_sided;
  NaiveInterval naive;
  SimultaneousResult simultaneous;
  SimultaneousResult simultaneous_one_sided;
};

/// Wald-style interval around the largest coordinate, ignoring selection.
inline NaiveInterval naive_interval(const VectorXd& beta, const VectorXd& se, double alpha) {
  NaiveInterval out;
  const Index top = selected_subgroup(beta);
  out.estimate = beta[top];
  out.se = se[top];
  const double z2 = normal_quantile(1.0 - alpha / 2.0);
  const double z1 = normal_quantile(1.0 - alpha);
  out.lower = out.estimate - z2 * out.se;
  out.upper = out.estimate + z2 * out.se;
  out.lower_one_sided = out.estimate - z1 * out.se;
  return out;
}

inline PipelineResult run_pipeline(const EncodedDesign& data, const PipelineConfig& config) {
  data.validate();
  config.boot.validate();
  PipelineResult out;
  out.estimate = run_rsplit(data, config.plan);
  out.residuals = full_data_residuals(data.y, data.stacked(), data.unpenalized(), config.residual_selector);
  out.calibrated = calibrated_bootstrap(out.estimate, data, out.residuals.residuals, config.boot);
  out.estimate.se = bootstrap_standard_errors(out.calibrated.draws);
  out.calibrated_one_sided =
      interval_and_pvalue(out.calibrated.t_star, out.calibrated.beta_max, config.boot.alpha, Sidedness::one);
  out.naive = naive_interval(out.estimate.beta, out.estimate.se, config.boot.alpha);
  out.simultaneous = simultaneous_comparator(out.calibrated.draws, out.estimate.beta, config.boot.alpha);
  out.simultaneous_one_sided =
      simultaneous_comparator(out.calibrated.draws, out.estimate.beta, config.boot.alpha, Sidedness::one);
  return out;
}

}  // namespace sgdebias
