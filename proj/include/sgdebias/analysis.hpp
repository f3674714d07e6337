#pragma once

// Full analysis of one encoded dataset: per-subgroup R-Split estimates with
// Wald-style and simultaneous intervals, the calibrated interval for the
// largest effect, and E-values.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgdebias/boot_calibrate.hpp"
#include "sgdebias/design.hpp"
#include "sgdebias/pipeline.hpp"
#include "sgdebias/sensitivity.hpp"
#include "sgdebias/streams.hpp"
#include "sgdebias/tuning.hpp"

namespace sgdebias {

struct AnalysisConfig {
  PipelineConfig pipeline;
  bool auto_r = true;
  TuningConfig tuning;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Full-budget defaults: B1 = 500, B2 = 1000, r chosen by cross-validation.
inline AnalysisConfig default_analysis() {
  AnalysisConfig cfg;
  cfg.pipeline.plan.splits = 500;
  cfg.pipeline.boot.replicates = 1000;
  return cfg;
}

/// Bonferroni adjustment over m comparisons, capped at 1.
inline double bonferroni(double p, Index m) { return std::min(1.0, p * static_cast<double>(m)); }

struct SubgroupRow {
  std::string label;
  double estimate = 0.0;
  double se = 0.0;
  double p_value = 1.0;  // two-sided Wald
  double p_bonferroni = 1.0;
  double naive_lower = 0.0;
  double naive_upper = 0.0;
  double simultaneous_lower = 0.0;
  double simultaneous_upper = 0.0;
  double e_value = 1.0;
  double e_value_bound = 1.0;
};

struct AnalysisReport {
  Index n = 0;
  Index p1 = 0;
  Index q = 0;
  double r = 0.0;
  std::optional<TuningResult> tuning;
  std::size_t splits_used = 0;
  std::size_t splits_discarded = 0;
  double residual_lambda = 0.0;
  std::size_t residual_model_size = 0;
  std::vector<SubgroupRow> subgroups;
  Index selected = 0;
  std::string selected_label;
  double beta_max = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double p_value = 1.0;
  double p_one_sided = 1.0;
  double lower_one_sided = 0.0;
  double bias_reduced = 0.0;
  double simultaneous_quantile = 0.0;
  double simultaneous_max_lower = 0.0;
  double simultaneous_max_upper = 0.0;
};

inline AnalysisReport run_analysis(const EncodedDesign& data, const AnalysisConfig& config) {
  data.validate();
  PipelineConfig cfg = config.pipeline;
  cfg.plan.seed = stream_seed(config.seed, "analyze-split");
  cfg.plan.workers = config.workers;
  cfg.residual_selector.seed = stream_seed(config.seed, "analyze-resid");
  cfg.boot.seed = stream_seed(config.seed, "analyze-boot");
  cfg.boot.workers = config.workers;

  AnalysisReport rep;
  rep.n = data.n();
  rep.p1 = data.p1();
  rep.q = data.q();

  RSplitEstimate est = run_rsplit(data, cfg.plan);
  const ResidualFit resid = full_data_residuals(data.y, data.stacked(), data.unpenalized(), cfg.residual_selector);
  if (config.auto_r) {
    TuningConfig tune = config.tuning;
    tune.seed = stream_seed(config.seed, "analyze-tune");
    tune.workers = config.workers;
    rep.tuning = select_r(data, cfg, tune);
    cfg.boot.r = rep.tuning->r;
  }
  cfg.boot.validate();
  rep.r = cfg.boot.r;

  const CalibratedBootstrapResult cal = calibrated_bootstrap(est, data, resid.residuals, cfg.boot);
  est.se = bootstrap_standard_errors(cal.draws);
  const SimultaneousResult sim = simultaneous_comparator(cal.draws, est.beta, cfg.boot.alpha);
  const IntervalResult one = interval_and_pvalue(cal.t_star, cal.beta_max, cfg.boot.alpha, Sidedness::one);

  rep.splits_used = est.used;
  rep.splits_discarded = est.discarded;
  rep.residual_lambda = resid.lambda;
  rep.residual_model_size = resid.selection.selected.size();

  const double z2 = normal_quantile(1.0 - cfg.boot.alpha / 2.0);
  for (Index j = 0; j < data.p1(); ++j) {
    SubgroupRow row;
    row.label = data.z_labels[static_cast<std::size_t>(j)];
    row.estimate = est.beta[j];
    row.se = est.se[j];
    row.p_value = row.se > 0.0 ? two_sided_normal_p(row.estimate / row.se) : (row.estimate == 0.0 ? 1.0 : 0.0);
    row.p_bonferroni = bonferroni(row.p_value, data.p1());
    row.naive_lower = row.estimate - z2 * row.se;
    row.naive_upper = row.estimate + z2 * row.se;
    row.simultaneous_lower = sim.lower[j];
    row.simultaneous_upper = sim.upper[j];
    row.e_value = e_value(row.estimate);
    row.e_value_bound = e_value_for_bound(row.naive_lower, row.naive_upper);
    rep.subgroups.push_back(row);
  }

  rep.selected = cal.selected;
  rep.selected_label = data.z_labels[static_cast<std::size_t>(cal.selected)];
  rep.beta_max = cal.beta_max;
  rep.lower = cal.interval.lower;
  rep.upper = cal.interval.upper;
  rep.p_value = cal.interval.p_value;
  rep.p_one_sided = cal.interval.p_one_sided;
  rep.lower_one_sided = one.lower;
  rep.bias_reduced = cal.interval.bias_reduced;
  rep.simultaneous_quantile = sim.quantile;
  rep.simultaneous_max_lower = sim.max_lower;
  rep.simultaneous_max_upper = sim.max_upper;
  return rep;
}

}  // namespace sgdebias
