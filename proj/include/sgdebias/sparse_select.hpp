#pragma once

// L1-penalized logistic regression by coordinate descent on the IRLS
// quadratic approximation, and a cross-validated selection rule restricted
// to a window of model sizes.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sgdebias/errors.hpp"
#include "sgdebias/glm_core.hpp"
#include "sgdebias/streams.hpp"

namespace sgdebias {

struct LassoConfig {
  bool standardize = true;
  double tolerance = 1e-7;            // max coefficient change between reweighting passes
  std::size_t max_sweeps = 100000;    // coordinate sweeps allowed per lambda
  std::size_t max_active = 0;         // stop the path after the first lambda exceeding this (0: never)
  double coefficient_cap = 20.0;      // unpenalized |coef| beyond this signals separation
  std::function<void(double)> pass_observer;  // penalized objective after every reweighting pass
};

struct LassoFit {
  double lambda = 0.0;
  VectorXd coefficients;           // original column scale
  std::vector<Index> active;       // all columns with a nonzero coefficient
  std::vector<Index> unpenalized;
  std::vector<Index> selected;     // penalized columns with a nonzero coefficient
  std::size_t sweeps = 0;
};

/// Soft-thresholding operator S(u, t) = sign(u) max(|u| - t, 0).
inline double soft_threshold(double u, double t) noexcept {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

/// Minimizer over b of (v/2) b^2 - u b + penalty |b|.
inline double coordinate_minimizer(double u, double v, double penalty) noexcept {
  return soft_threshold(u, penalty) / v;
}

/// Column centering/scaling used internally by the lasso.
///
/// With a constant-one intercept column present, other columns are centered
/// and scaled to norm sqrt(n); without one they are only scaled.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(const MatrixXd& x, bool enabled) {
    const Index n = x.rows();
    const Index d = x.cols();
    center_ = VectorXd::Zero(d);
    scale_ = VectorXd::Ones(d);
    for (Index j = 0; j < d; ++j) {
      if (n > 0 && (x.col(j).array() == 1.0).all()) {
        intercept_ = j;
        break;
      }
    }
    if (!enabled) return;
    for (Index j = 0; j < d; ++j) {
      if (j == intercept_) continue;
      const double m = intercept_ >= 0 ? x.col(j).mean() : 0.0;
      const double s = std::sqrt((x.col(j).array() - m).square().mean());
      center_[j] = m;
      scale_[j] = s > 0.0 ? s : 1.0;
    }
  }

  [[nodiscard]] MatrixXd apply(const MatrixXd& x) const {
    MatrixXd out = x;
    for (Index j = 0; j < x.cols(); ++j) {
      if (j == intercept_) continue;
      out.col(j) = (x.col(j).array() - center_[j]) / scale_[j];
    }
    return out;
  }

  [[nodiscard]] VectorXd to_original(const VectorXd& b) const {
    VectorXd out = b.cwiseQuotient(scale_);
    if (intercept_ >= 0) out[intercept_] = b[intercept_] - center_.dot(out);
    return out;
  }

  [[nodiscard]] Index intercept() const noexcept { return intercept_; }
  [[nodiscard]] double scale(Index j) const { return scale_[j]; }

 private:
  VectorXd center_;
  VectorXd scale_;
  Index intercept_ = -1;
};

namespace detail {

inline double binomial_deviance(const VectorXd& y, const VectorXd& eta) {
  return 2.0 * nll_from_eta(y, eta);
}

/// Coordinate-descent state for one (y, X) problem on the standardized scale.
class LassoSolver {
 public:
  LassoSolver(const VectorXd& y, const MatrixXd& x, const std::vector<Index>& unpenalized,
              const LassoConfig& config)
      : y_(y), std_(x, config.standardize), xs_(std_.apply(x)), config_(config) {
    detail::require_dims(y.size(), x, -1);
    const Index d = x.cols();
    penalized_.assign(static_cast<std::size_t>(d), true);
    for (Index j : unpenalized) {
      if (j < 0 || j >= d) throw ContractViolation("unpenalized column index out of range");
      penalized_[static_cast<std::size_t>(j)] = false;
    }
    unpenalized_ = unpenalized;
    std::sort(unpenalized_.begin(), unpenalized_.end());
    beta_ = VectorXd::Zero(d);
    eta_ = VectorXd::Zero(xs_.rows());
    in_working_.assign(static_cast<std::size_t>(d), false);
  }

  /// Fits the unpenalized columns alone and returns lambda_max.
  double fit_null() {
    std::vector<Index> work(unpenalized_.begin(), unpenalized_.end());
    reweighting_passes(work, std::numeric_limits<double>::infinity());
    score_ = xs_.transpose() * (y_ - expit(eta_)) / static_cast<double>(n());
    double lmax = 0.0;
    for (Index j = 0; j < d(); ++j)
      if (penalized_[static_cast<std::size_t>(j)]) lmax = std::max(lmax, std::abs(score_[j]));
    have_score_ = true;
    lambda_max_ = lmax;
    at_null_ = true;
    return lmax;
  }

  /// Solves at `lambda`, warm-started from the current state.
  std::size_t solve(double lambda, double previous_lambda) {
    if (!have_score_) fit_null();
    sweeps_ = 0;
    // The null fit is exact here; coordinate updates would only add rounding noise.
    if (at_null_ && lambda >= lambda_max_) return 0;
    at_null_ = false;
    std::vector<Index> work;
    std::fill(in_working_.begin(), in_working_.end(), false);
    const double strong = 2.0 * lambda - previous_lambda;
    for (Index j = 0; j < d(); ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (!penalized_[ju] || beta_[j] != 0.0 || std::abs(score_[j]) >= strong) {
        work.push_back(j);
        in_working_[ju] = true;
      }
    }
    for (;;) {
      reweighting_passes(work, lambda);
      score_ = xs_.transpose() * (y_ - expit(eta_)) / static_cast<double>(n());
      bool added = false;
      for (Index j = 0; j < d(); ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (in_working_[ju] || !penalized_[ju]) continue;
        if (std::abs(score_[j]) > lambda) {
          work.push_back(j);
          in_working_[ju] = true;
          added = true;
        }
      }
      if (!added) break;
      std::sort(work.begin(), work.end());
    }
    return sweeps_;
  }

  [[nodiscard]] LassoFit snapshot(double lambda) const {
    LassoFit fit;
    fit.lambda = lambda;
    fit.coefficients = std_.to_original(beta_);
    fit.unpenalized = unpenalized_;
    fit.sweeps = sweeps_;
    for (Index j = 0; j < d(); ++j) {
      if (fit.coefficients[j] != 0.0 || beta_[j] != 0.0) fit.active.push_back(j);
      if (beta_[j] != 0.0 && penalized_[static_cast<std::size_t>(j)]) fit.selected.push_back(j);
    }
    return fit;
  }

  [[nodiscard]] Index n() const noexcept { return xs_.rows(); }
  [[nodiscard]] Index d() const noexcept { return xs_.cols(); }

 private:
  double penalized_objective(const VectorXd& eta, const VectorXd& beta, double lambda) const {
    double pen = 0.0;
    if (std::isfinite(lambda))
      for (Index j = 0; j < d(); ++j)
        if (penalized_[static_cast<std::size_t>(j)]) pen += std::abs(beta[j]);
    return nll_from_eta(y_, eta) / static_cast<double>(n()) + (pen > 0.0 ? lambda * pen : 0.0);
  }

  // IRLS outer loop with coordinate descent on the weighted least-squares
  // surrogate restricted to `work`; a backtracking step keeps the penalized
  // objective non-increasing from pass to pass.
  void reweighting_passes(const std::vector<Index>& work, double lambda) {
    if (work.empty()) return;
    const double inv_n = 1.0 / static_cast<double>(n());
    VectorXd w(n());
    VectorXd wr(n());
    VectorXd v(static_cast<Index>(work.size()));
    double objective = penalized_objective(eta_, beta_, lambda);
    for (;;) {
      const VectorXd p = expit(eta_);
      w = (p.array() * (1.0 - p.array())).max(1e-5).matrix();
      wr = y_ - p;
      const auto m = static_cast<Index>(work.size());
      MatrixXd xw(n(), m);
      for (Index k = 0; k < m; ++k) xw.col(k) = xs_.col(work[static_cast<std::size_t>(k)]);
      // Weighted Gram of the working set: each sweep then costs O(|work|^2).
      MatrixXd gram = MatrixXd::Zero(m, m);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose() * w.cwiseSqrt().asDiagonal(), inv_n);
      gram = gram.selfadjointView<Eigen::Lower>();
      VectorXd grad = xw.transpose() * wr * inv_n;
      v = gram.diagonal();

      const VectorXd beta_old = beta_;
      const VectorXd eta_old = eta_;
      VectorXd shift = VectorXd::Zero(m);
      const bool plain = std::none_of(work.begin(), work.end(),
                                      [&](Index j) { return penalized_[static_cast<std::size_t>(j)]; });
      if (plain) {
        // Unpenalized block: a full Newton step. Coordinate descent stalls here
        // when weights collapse under quasi-separation.
        shift = gram.completeOrthogonalDecomposition().solve(grad);
        for (Index k = 0; k < m; ++k) beta_[work[static_cast<std::size_t>(k)]] += shift[k];
        ++sweeps_;
      }
      while (!plain) {
        double max_change = 0.0;
        for (Index k = 0; k < m; ++k) {
          const Index j = work[static_cast<std::size_t>(k)];
          const double vj = v[k];
          if (vj <= 0.0) continue;
          const double u = grad[k] + vj * beta_[j];
          const double updated =
              penalized_[static_cast<std::size_t>(j)] ? coordinate_minimizer(u, vj, lambda) : u / vj;
          const double delta = updated - beta_[j];
          if (delta == 0.0) continue;
          beta_[j] = updated;
          shift[k] += delta;
          grad.noalias() -= delta * gram.col(k);
          max_change = std::max(max_change, vj * delta * delta);
        }
        if (++sweeps_ > config_.max_sweeps)
          throw NonConvergence("coordinate descent exceeded " + std::to_string(config_.max_sweeps) +
                               " sweeps at lambda " + std::to_string(lambda));
        if (max_change < 1e-18) break;
      }
      eta_.noalias() += xw * shift;

      double trial = penalized_objective(eta_, beta_, lambda);
      if (trial > objective) {
        const VectorXd dbeta = beta_ - beta_old;
        const VectorXd deta = eta_ - eta_old;
        double t = 1.0;
        for (int h = 0; h < 40 && trial > objective; ++h) {
          t *= 0.5;
          beta_ = beta_old + t * dbeta;
          eta_ = eta_old + t * deta;
          trial = penalized_objective(eta_, beta_, lambda);
        }
        if (trial > objective) {
          beta_ = beta_old;
          eta_ = eta_old;
          trial = objective;
        }
      }
      objective = trial;
      if (config_.pass_observer) config_.pass_observer(objective);
      for (Index j : work)
        if (!penalized_[static_cast<std::size_t>(j)] &&
            std::abs(beta_[j]) > config_.coefficient_cap * std_.scale(j))
          throw SeparationDetected("unpenalized lasso coefficient diverged (column " + std::to_string(j) + ")");

      double max_step = 0.0;
      for (Index j : work) max_step = std::max(max_step, std::abs(beta_[j] - beta_old[j]));
      if (max_step < config_.tolerance) break;
    }
  }

  VectorXd y_;
  Standardizer std_;
  MatrixXd xs_;
  LassoConfig config_;
  std::vector<bool> penalized_;
  std::vector<Index> unpenalized_;
  std::vector<bool> in_working_;
  VectorXd beta_;
  VectorXd eta_;
  VectorXd score_;
  bool have_score_ = false;
  bool at_null_ = false;
  double lambda_max_ = 0.0;
  std::size_t sweeps_ = 0;
};

inline void check_grid(const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw ContractViolation("lambda grid is empty");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] >= 0.0) || !std::isfinite(lambdas[k]))
      throw ContractViolation("lambda values must be finite and non-negative");
    if (k > 0 && !(lambdas[k] < lambdas[k - 1]))
      throw ContractViolation("lambda grid must be strictly descending");
  }
}

}  // namespace detail

/// Largest lambda at which some penalized column can enter the model.
inline double lambda_max(const VectorXd& y, const MatrixXd& x, const std::vector<Index>& unpenalized,
                         const LassoConfig& config = {}) {
  detail::LassoSolver solver(y, x, unpenalized, config);
  return solver.fit_null();
}

/// `count` log-spaced values from lmax down to ratio * lmax.
inline std::vector<double> default_lambda_grid(double lmax, std::size_t count = 100, double ratio = 1e-3) {
  std::vector<double> grid(count);
  if (count == 1) return {lmax};
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) grid[k] = lmax * std::exp(step * static_cast<double>(k));
  return grid;
}

/// Warm-started lasso path over a strictly descending grid.
///
/// The path stops early, after including the offending fit, once the number
/// of nonzero penalized columns exceeds config.max_active (when nonzero).
inline std::vector<LassoFit> fit_lasso_path(const VectorXd& y, const MatrixXd& x,
                                            const std::vector<Index>& unpenalized,
                                            const std::vector<double>& lambdas,
                                            const LassoConfig& config = {}) {
  detail::check_grid(lambdas);
  detail::LassoSolver solver(y, x, unpenalized, config);
  const double lmax = solver.fit_null();
  std::vector<LassoFit> path;
  path.reserve(lambdas.size());
  double previous = std::max(lmax, lambdas.front());
  for (double lambda : lambdas) {
    solver.solve(lambda, previous);
    path.push_back(solver.snapshot(lambda));
    previous = lambda;
    if (config.max_active > 0 && path.back().selected.size() > config.max_active) break;
  }
  return path;
}

struct SelectorConfig {
  std::size_t folds = 3;
  std::size_t min_size = 3;
  std::size_t max_size = 10;
  std::uint64_t seed = 0;
  std::size_t grid_size = 100;
  double grid_ratio = 1e-3;
  std::vector<double> lambda_grid;  // replaces the default grid when non-empty
  bool truncate_path = true;        // stop each path once past max_size
  LassoConfig lasso;
};

struct SelectionResult {
  std::vector<Index> selected;  // penalized design columns in the chosen model
  double lambda = 0.0;
  std::size_t lambda_index = 0;
  std::vector<double> lambdas;
  std::vector<double> cv_deviance;
  std::vector<std::size_t> active_counts;
  LassoFit fit;  // full-data fit at the chosen lambda
};

/// Seeded permutation cut into `folds` contiguous blocks; entry i is row i's fold.
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, Engine& engine) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), engine);
  std::vector<std::size_t> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[order[k]] = k * folds / n;
  return fold;
}

namespace detail {

inline MatrixXd take_rows(const MatrixXd& x, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
  return out;
}

inline VectorXd take_rows(const VectorXd& y, const std::vector<Index>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = y[rows[k]];
  return out;
}

inline std::size_t window_distance(std::size_t count, std::size_t lo, std::size_t hi) {
  if (count < lo) return lo - count;
  if (count > hi) return count - hi;
  return 0;
}

}  // namespace detail

/// Cross-validated lambda restricted to model sizes in [min_size, max_size].
///
/// Among lambdas whose full-data model size lies in the window, picks the one
/// with the smallest out-of-fold binomial deviance. When none qualifies, the
/// lambda whose size is nearest the window wins (ties go to the larger model,
/// then to lower deviance).
inline SelectionResult cv_select_model(const VectorXd& y, const MatrixXd& x,
                                       const std::vector<Index>& unpenalized, const SelectorConfig& config) {
  if (config.folds < 2) throw ContractViolation("cross-validation needs at least 2 folds");
  if (config.min_size > config.max_size) throw ContractViolation("min_size exceeds max_size");
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < config.folds) throw ContractViolation("fewer rows than folds");

  LassoConfig lasso = config.lasso;
  lasso.max_active = config.truncate_path ? config.max_size : 0;
  std::vector<double> grid = config.lambda_grid;
  if (grid.empty()) grid = default_lambda_grid(lambda_max(y, x, unpenalized, lasso), config.grid_size,
                                               config.grid_ratio);
  auto path = fit_lasso_path(y, x, unpenalized, grid, lasso);
  grid.resize(path.size());

  SelectionResult result;
  result.lambdas = grid;
  result.cv_deviance.assign(grid.size(), 0.0);
  for (const auto& f : path) result.active_counts.push_back(f.selected.size());

  Engine engine = make_engine(config.seed, "cv-folds");
  const auto fold = fold_assignment(n, config.folds, engine);
  LassoConfig fold_lasso = config.lasso;
  fold_lasso.max_active = 0;
  for (std::size_t f = 0; f < config.folds; ++f) {
    std::vector<Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(static_cast<Index>(i));
    const VectorXd y_train = detail::take_rows(y, train);
    const VectorXd y_test = detail::take_rows(y, test);
    const MatrixXd x_test = detail::take_rows(x, test);
    const auto fold_path = fit_lasso_path(y_train, detail::take_rows(x, train), unpenalized, grid, fold_lasso);
    for (std::size_t k = 0; k < fold_path.size(); ++k)
      result.cv_deviance[k] +=
          detail::binomial_deviance(y_test, VectorXd(x_test * fold_path[k].coefficients));
  }

  std::size_t best = 0;
  bool found = false;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (detail::window_distance(result.active_counts[k], config.min_size, config.max_size) != 0) continue;
    if (!found || result.cv_deviance[k] < result.cv_deviance[best]) best = k;
    found = true;
  }
  if (!found) {
    for (std::size_t k = 1; k < grid.size(); ++k) {
      const auto dk = detail::window_distance(result.active_counts[k], config.min_size, config.max_size);
      const auto db = detail::window_distance(result.active_counts[best], config.min_size, config.max_size);
      const auto ck = result.active_counts[k];
      const auto cb = result.active_counts[best];
      if (dk < db || (dk == db && ck > cb) ||
          (dk == db && ck == cb && result.cv_deviance[k] < result.cv_deviance[best]))
        best = k;
    }
  }
  result.lambda_index = best;
  result.lambda = grid[best];
  result.fit = path[best];
  result.selected = path[best].selected;
  return result;
}

struct ResidualFit {
  VectorXd residuals;     // y_i - expit(eta_i)
  VectorXd coefficients;  // full-data lasso coefficients at the chosen lambda
  double lambda = 0.0;
  SelectionResult selection;
};

/// Residuals of the cross-validated full-data lasso fit.
inline ResidualFit full_data_residuals(const VectorXd& y, const MatrixXd& x,
                                       const std::vector<Index>& unpenalized, const SelectorConfig& config) {
  ResidualFit out;
  out.selection = cv_select_model(y, x, unpenalized, config);
  out.coefficients = out.selection.fit.coefficients;
  out.lambda = out.selection.lambda;
  out.residuals = y - expit(VectorXd(x * out.coefficients));
  return out;
}

}  // namespace sgdebias
