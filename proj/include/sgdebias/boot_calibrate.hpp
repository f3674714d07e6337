#pragma once

// Calibrated multiplier bootstrap for the largest subgroup effect.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "sgdebias/design.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/rsplit.hpp"
#include "sgdebias/streams.hpp"

namespace sgdebias {

enum class Multiplier { normal, rademacher };
enum class Sidedness { one, two };
/// basic: [max - Q(1 - a/2), max - Q(a/2)].  symmetric: max -/+ the (1 - a) quantile of |T*|.
enum class IntervalConvention { basic, symmetric };

struct BootstrapConfig {
  std::size_t replicates = 1000;
  double r = 0.15;
  Multiplier multiplier = Multiplier::normal;
  double alpha = 0.05;
  Sidedness sidedness = Sidedness::two;
  IntervalConvention convention = IntervalConvention::basic;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    if (!(r > 0.0 && r < 0.5)) throw ContractViolation("r must lie strictly inside (0, 0.5)");
    if (replicates < 100) throw ContractViolation("at least 100 bootstrap replicates are required");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("alpha must lie in (0, 1)");
  }
};

/// Multiplier-bootstrap replicates of the R-Split estimate, one row per draw:
///   beta + Gamma (1/n) sum_i (z_i; x_i) u_i nu_i.
inline MatrixXd draw_bootstrap(const RSplitEstimate& estimate, const EncodedDesign& data,
                               const VectorXd& residuals, const BootstrapConfig& config) {
  const Index n = data.n();
  const Index p1 = data.p1();
  if (residuals.size() != n) throw ContractViolation("residual length does not match rows");
  if (estimate.gamma.rows() != p1 || estimate.gamma.cols() != p1 + data.q())
    throw ContractViolation("Gamma has the wrong shape for this design");
  if (config.replicates == 0) throw ContractViolation("no bootstrap replicates requested");

  // Row i of `loadings` is Gamma (z_i; x_i) nu_i / n.
  MatrixXd loadings = data.z * estimate.gamma.leftCols(p1).transpose();
  loadings.noalias() += data.x * estimate.gamma.rightCols(data.q()).transpose();
  loadings = residuals.asDiagonal() * loadings / static_cast<double>(n);

  const auto b2 = static_cast<Index>(config.replicates);
  MatrixXd draws(b2, p1);
  parallel_for(config.replicates, config.workers, [&](std::size_t b) {
    Engine engine = make_engine(config.seed, "boot", b);
    VectorXd u(n);
    if (config.multiplier == Multiplier::normal) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Index i = 0; i < n; ++i) u[i] = normal(engine);
    } else {
      std::bernoulli_distribution coin(0.5);
      for (Index i = 0; i < n; ++i) u[i] = coin(engine) ? 1.0 : -1.0;
    }
    draws.row(static_cast<Index>(b)) = (estimate.beta + loadings.transpose() * u).transpose();
  });
  return draws;
}

/// Column standard deviations of the bootstrap draws.
inline VectorXd bootstrap_standard_errors(const MatrixXd& draws) {
  if (draws.rows() < 2) throw ContractViolation("need at least two draws for a standard deviation");
  // Shifting by the first draw keeps identical draws at exactly zero spread.
  const MatrixXd shifted = draws.rowwise() - draws.row(0);
  const Eigen::RowVectorXd mean = shifted.colwise().mean();
  return ((shifted.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(draws.rows() - 1))
      .cwiseSqrt()
      .transpose();
}

/// Per-coordinate R-Split standard errors from uncalibrated bootstrap draws.
inline VectorXd rsplit_standard_errors(const RSplitEstimate& estimate, const EncodedDesign& data,
                                       const VectorXd& residuals, const BootstrapConfig& config) {
  return bootstrap_standard_errors(draw_bootstrap(estimate, data, residuals, config));
}

/// Smallest index attaining the maximum.
inline Index selected_subgroup(const VectorXd& beta) {
  if (beta.size() == 0) throw ContractViolation("empty coefficient vector");
  Index best = 0;
  for (Index j = 1; j < beta.size(); ++j)
    if (beta[j] > beta[best]) best = j;
  return best;
}

/// c_j(r) = (1 - n^(r - 1/2)) (max beta - beta_j).
inline VectorXd calibration_terms(const VectorXd& beta, std::size_t n, double r) {
  if (!(r > 0.0 && r < 0.5)) throw ContractViolation("r must lie strictly inside (0, 0.5)");
  if (n < 2) throw ContractViolation("calibration needs n >= 2");
  if (beta.size() == 0) throw ContractViolation("empty coefficient vector");
  const double factor = 1.0 - std::pow(static_cast<double>(n), r - 0.5);
  const double top = beta.maxCoeff();
  return (factor * (top - beta.array())).matrix();
}

/// T*_b = max_j (draw_bj + c_j) - max beta.
inline VectorXd calibrated_statistics(const MatrixXd& draws, const VectorXd& beta, const VectorXd& calibration) {
  if (draws.cols() != beta.size() || calibration.size() != beta.size())
    throw ContractViolation("bootstrap draws, estimate and calibration disagree in width");
  const double top = beta.maxCoeff();
  VectorXd t(draws.rows());
  for (Index b = 0; b < draws.rows(); ++b) t[b] = (draws.row(b).transpose() + calibration).maxCoeff() - top;
  return t;
}

/// The ceil(q B)-th order statistic (inverse-CDF convention).
inline double order_statistic(const VectorXd& values, double q) {
  if (values.size() == 0) throw ContractViolation("no values for a quantile");
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const auto b = static_cast<double>(sorted.size());
  // The small slack keeps products like 0.95 * 100 from rounding up a rank.
  auto k = static_cast<Index>(std::ceil(q * b - 1e-9));
  k = std::clamp<Index>(k, 1, static_cast<Index>(sorted.size()));
  return sorted[static_cast<std::size_t>(k - 1)];
}

struct IntervalResult {
  double lower = 0.0;
  double upper = 0.0;
  double p_value = 1.0;       // matches the requested sidedness
  double p_one_sided = 1.0;   // H0: beta_max <= 0
  double bias_reduced = 0.0;  // max beta - mean(T*)
};

/// Confidence bounds, p-value and bias-reduced estimate from calibrated T*.
inline IntervalResult interval_and_pvalue(const VectorXd& t_star, double beta_max, double alpha,
                                          Sidedness sidedness,
                                          IntervalConvention convention = IntervalConvention::basic) {
  if (t_star.size() < 100) throw ContractViolation("at least 100 bootstrap statistics are required");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("alpha must lie in (0, 1)");
  const auto b = static_cast<double>(t_star.size());
  IntervalResult out;
  out.bias_reduced = beta_max - t_star.mean();

  const auto at_least = static_cast<double>((t_star.array() >= beta_max).count());
  const auto at_most = static_cast<double>((t_star.array() <= beta_max).count());
  out.p_one_sided = (1.0 + at_least) / (b + 1.0);
  const double p_low_tail = (1.0 + at_most) / (b + 1.0);

  if (sidedness == Sidedness::one) {
    out.lower = beta_max - order_statistic(t_star, 1.0 - alpha);
    out.upper = std::numeric_limits<double>::infinity();
    out.p_value = out.p_one_sided;
    return out;
  }
  if (convention == IntervalConvention::basic) {
    out.lower = beta_max - order_statistic(t_star, 1.0 - alpha / 2.0);
    out.upper = beta_max - order_statistic(t_star, alpha / 2.0);
  } else {
    const double half = order_statistic(t_star.cwiseAbs(), 1.0 - alpha);
    out.lower = beta_max - half;
    out.upper = beta_max + half;
  }
  out.p_value = std::min(1.0, 2.0 * std::min(out.p_one_sided, p_low_tail));
  return out;
}

struct SimultaneousResult {
  double quantile = 0.0;  // q*
  VectorXd lower;
  VectorXd upper;
  double max_lower = 0.0;
  double max_upper = 0.0;
};

/// Max-statistic bands over all coordinates.
///
/// Two-sided: q* is the (1 - alpha) order statistic of max_j |draw_j - beta_j|
/// and bands are beta_j -/+ q*. One-sided: q* comes from max_j (draw_j - beta_j)
/// and only lower bounds are finite.
inline SimultaneousResult simultaneous_comparator(const MatrixXd& draws, const VectorXd& beta, double alpha,
                                                  Sidedness sidedness = Sidedness::two) {
  if (draws.cols() != beta.size()) throw ContractViolation("draws and estimate disagree in width");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("alpha must lie in (0, 1)");
  VectorXd stat(draws.rows());
  for (Index b = 0; b < draws.rows(); ++b) {
    const VectorXd dev = draws.row(b).transpose() - beta;
    stat[b] = sidedness == Sidedness::two ? dev.cwiseAbs().maxCoeff() : dev.maxCoeff();
  }
  SimultaneousResult out;
  out.quantile = order_statistic(stat, 1.0 - alpha);
  out.lower = beta.array() - out.quantile;
  const double top = beta.maxCoeff();
  out.max_lower = top - out.quantile;
  if (sidedness == Sidedness::two) {
    out.upper = beta.array() + out.quantile;
    out.max_upper = top + out.quantile;
  } else {
    out.upper = VectorXd::Constant(beta.size(), std::numeric_limits<double>::infinity());
    out.max_upper = std::numeric_limits<double>::infinity();
  }
  return out;
}

struct CalibratedBootstrapResult {
  MatrixXd draws;        // uncalibrated replicates, B2 x p1
  VectorXd calibration;  // c_j(r)
  VectorXd t_star;
  double beta_max = 0.0;
  Index selected = 0;  // s-hat
  IntervalResult interval;
};

/// Draws, calibrates and summarizes in one call.
inline CalibratedBootstrapResult calibrated_bootstrap(const RSplitEstimate& estimate, const EncodedDesign& data,
                                                      const VectorXd& residuals, const BootstrapConfig& config) {
  config.validate();
  CalibratedBootstrapResult out;
  out.draws = draw_bootstrap(estimate, data, residuals, config);
  out.calibration = calibration_terms(estimate.beta, static_cast<std::size_t>(data.n()), config.r);
  out.t_star = calibrated_statistics(out.draws, estimate.beta, out.calibration);
  out.beta_max = estimate.beta.maxCoeff();
  out.selected = selected_subgroup(estimate.beta);
  out.interval = interval_and_pvalue(out.t_star, out.beta_max, config.alpha, config.sidedness, config.convention);
  return out;
}

}  // namespace sgdebias
