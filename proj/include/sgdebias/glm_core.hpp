#pragma once

// Dense Bernoulli-logit numerics: link, likelihood, Newton refit on a fixed
// column set, Hessian inversion and Wald inference.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sgdebias/errors.hpp"

namespace sgdebias {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Logistic function 1 / (1 + e^-u), evaluated without overflow.
inline double expit(double u) noexcept {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

/// Derivative of expit, p (1 - p).
inline double expit_derivative(double u) noexcept { return expit(u) * expit(-u); }

/// log(1 + e^u) as max(u, 0) + log1p(e^-|u|).
inline double log1p_exp(double u) noexcept {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

inline VectorXd expit(const VectorXd& u) {
  const Eigen::ArrayXd e = (-u.array().abs()).exp();
  return (u.array() >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e)).matrix();
}

namespace detail {

inline void require_dims(Index rows_y, const MatrixXd& design, Index coef_len) {
  if (rows_y != design.rows())
    throw ContractViolation("outcome length " + std::to_string(rows_y) +
                            " does not match design rows " + std::to_string(design.rows()));
  if (coef_len >= 0 && coef_len != design.cols())
    throw ContractViolation("coefficient length " + std::to_string(coef_len) +
                            " does not match design columns " + std::to_string(design.cols()));
}

inline double nll_from_eta(const VectorXd& y, const VectorXd& eta) {
  const Eigen::ArrayXd a = eta.array();
  // log(1 + e) with e in (0, 1] is absolutely accurate to a few ulp and vectorizes.
  return (a.max(0.0) + (1.0 + (-a.abs()).exp()).log() - y.array() * a).sum();
}

}  // namespace detail

/// Negative Bernoulli log-likelihood sum_l [log(1 + e^eta_l) - y_l eta_l].
inline double neg_log_likelihood(const VectorXd& y, const MatrixXd& design, const VectorXd& coef) {
  detail::require_dims(y.size(), design, coef.size());
  return detail::nll_from_eta(y, design * coef);
}

/// Gradient of neg_log_likelihood with respect to the coefficients.
inline VectorXd neg_log_likelihood_gradient(const VectorXd& y, const MatrixXd& design,
                                            const VectorXd& coef) {
  detail::require_dims(y.size(), design, coef.size());
  const VectorXd p = expit(VectorXd(design * coef));
  return design.transpose() * (p - y);
}

struct NewtonConfig {
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
  double coefficient_cap = 20.0;  // |coef| beyond this on the logit scale signals separation
  double min_rcond = 1e-12;
};

struct GlmFit {
  VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double gradient_max_norm = 0.0;
  double neg_log_likelihood = 0.0;
  VectorXd weights;  // f_i = expit'(eta_i)
  std::string note;  // reason when not converged
};

namespace detail {

inline Eigen::LLT<MatrixXd> checked_cholesky(const MatrixXd& h, double min_rcond) {
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) throw SingularHessian("weighted Gram matrix is not positive definite");
  const double rc = llt.rcond();
  if (!(rc >= min_rcond))
    throw SingularHessian("weighted Gram matrix reciprocal condition " + std::to_string(rc) +
                          " below threshold");
  return llt;
}

inline MatrixXd weighted_gram(const MatrixXd& design, const VectorXd& weights) {
  MatrixXd h = MatrixXd::Zero(design.cols(), design.cols());
  h.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose() * weights.cwiseSqrt().asDiagonal());
  return h.selfadjointView<Eigen::Lower>();
}

}  // namespace detail

/// Maximum-likelihood logistic fit by damped Newton with step halving.
///
/// Throws SeparationDetected once any coefficient exceeds the cap and
/// SingularHessian when the weighted Gram matrix cannot be factored.
/// Running out of iterations returns a fit with converged == false.
inline GlmFit newton_refit(const VectorXd& y, const MatrixXd& design, const NewtonConfig& config = {}) {
  detail::require_dims(y.size(), design, -1);
  const Index n = design.rows();
  const Index d = design.cols();
  if (n <= d)
    throw ContractViolation("newton_refit needs more rows than columns (n=" + std::to_string(n) +
                            ", d=" + std::to_string(d) + ")");
  if (!design.allFinite()) throw ContractViolation("design contains non-finite entries");

  GlmFit fit;
  VectorXd coef = VectorXd::Zero(d);
  VectorXd eta = VectorXd::Zero(n);
  double nll = detail::nll_from_eta(y, eta);

  for (int iter = 0;; ++iter) {
    const VectorXd p = expit(eta);
    const VectorXd w = eta.unaryExpr([](double v) { return expit_derivative(v); });
    const VectorXd grad = design.transpose() * (p - y);
    const double gnorm = grad.cwiseAbs().maxCoeff();
    fit.iterations = iter;
    if (gnorm <= config.gradient_tolerance) {
      fit.converged = true;
      fit.gradient_max_norm = gnorm;
      break;
    }
    if (iter >= config.max_iterations) {
      fit.gradient_max_norm = gnorm;
      fit.note = "iteration limit reached";
      break;
    }
    const auto llt = detail::checked_cholesky(detail::weighted_gram(design, w), config.min_rcond);
    const VectorXd step = llt.solve(grad);

    const double slope = grad.dot(step);
    double t = 1.0;
    VectorXd trial_coef;
    VectorXd trial_eta;
    double trial_nll = nll;
    bool accepted = false;
    // Once the predicted decrease is below the likelihood's rounding error the
    // iterate is in the quadratic-convergence region and takes the full step.
    const bool unresolvable = 0.5 * slope <= 1e-12 * std::max(1.0, std::abs(nll));
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      trial_coef = coef - t * step;
      trial_eta = design * trial_coef;
      trial_nll = detail::nll_from_eta(y, trial_eta);
      if (unresolvable || trial_nll <= nll - 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Round-off floor: the likelihood cannot be decreased any further.
      if (trial_nll <= nll + 1e-12 * std::max(1.0, std::abs(nll))) {
        coef = trial_coef;
        eta = trial_eta;
        nll = trial_nll;
      }
      fit.iterations = iter + 1;
      fit.note = "line search stalled";
      const VectorXd g2 = design.transpose() * (expit(eta) - y);
      fit.gradient_max_norm = g2.cwiseAbs().maxCoeff();
      fit.converged = fit.gradient_max_norm <= config.gradient_tolerance;
      break;
    }
    coef = trial_coef;
    eta = trial_eta;
    nll = trial_nll;
    if (coef.cwiseAbs().maxCoeff() > config.coefficient_cap)
      throw SeparationDetected("coefficient magnitude exceeded " + std::to_string(config.coefficient_cap) +
                               " during Newton iterations");
  }

  fit.coefficients = coef;
  fit.neg_log_likelihood = nll;
  fit.weights = eta.unaryExpr([](double v) { return expit_derivative(v); });
  return fit;
}

/// [(1/normalizer) sum_i f_i w_i w_i^T]^{-1} at a fitted model.
inline MatrixXd inverse_hessian(const GlmFit& fit, const MatrixXd& design, double normalizer,
                                double min_rcond = 1e-12) {
  if (!(normalizer > 0.0)) throw ContractViolation("normalizer must be positive");
  if (fit.weights.size() != design.rows()) throw ContractViolation("fit weights do not match design rows");
  const auto llt = detail::checked_cholesky(detail::weighted_gram(design, fit.weights), min_rcond);
  MatrixXd inv = llt.solve(MatrixXd::Identity(design.cols(), design.cols()));
  inv = 0.5 * (inv + inv.transpose()).eval();
  return normalizer * inv;
}

/// Two-sided normal p-value for a Z statistic.
inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Standard normal quantile.
inline double normal_quantile(double q) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), q);
}

struct WaldRow {
  double estimate;
  double se;
  double z;
  double p_value;
};

/// Per-coefficient Wald table from the inverse observed information.
inline std::vector<WaldRow> wald_inference(const GlmFit& fit, const MatrixXd& design) {
  if (!fit.converged) throw ContractViolation("wald_inference needs a converged fit");
  const MatrixXd cov = inverse_hessian(fit, design, 1.0);
  std::vector<WaldRow> rows;
  rows.reserve(static_cast<std::size_t>(design.cols()));
  for (Index j = 0; j < design.cols(); ++j) {
    const double est = fit.coefficients[j];
    const double se = std::sqrt(cov(j, j));
    const double z = est / se;
    rows.push_back({est, se, z, two_sided_normal_p(z)});
  }
  return rows;
}

}  // namespace sgdebias
