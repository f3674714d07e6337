#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sgdebias/design.hpp"
#include "sgdebias/glm_core.hpp"

namespace sgtest {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Intercept column followed by `d - 1` standard normal columns.
inline MatrixXd random_design(Index n, Index d, std::mt19937_64& rng, bool intercept = true) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = (intercept && j == 0) ? 1.0 : normal(rng);
  return x;
}

inline VectorXd bernoulli_outcome(const MatrixXd& x, const VectorXd& coef, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double eta = x.row(i).dot(coef);
    y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return y;
}

/// Plain scalar loop, no shared code with the library.
inline double nll_oracle(const VectorXd& y, const MatrixXd& x, const VectorXd& coef) {
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    double eta = 0.0;
    for (Index j = 0; j < x.cols(); ++j) eta += x(i, j) * coef[j];
    total += std::log(1.0 + std::exp(eta)) - y[i] * eta;
  }
  return total;
}

/// Small EncodedDesign with p1 interaction columns, an intercept and `width` covariates.
inline sgdebias::EncodedDesign toy_design(Index n, Index p1, Index width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  sgdebias::EncodedDesign d;
  d.z = MatrixXd::Zero(n, p1);
  d.x = MatrixXd::Zero(n, 1 + width);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p1; ++j) d.z(i, j) = coin(rng) ? 1.0 : 0.0;
    d.x(i, 0) = 1.0;
    for (Index c = 0; c < width; ++c) d.x(i, 1 + c) = normal(rng);
    double eta = 0.3 * d.z(i, 0);
    if (width > 0) eta += d.x(i, 1);
    if (width > 1) eta -= d.x(i, 2);
    d.y[i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  d.forced = 1;
  for (Index j = 0; j < p1; ++j) d.z_labels.push_back("z" + std::to_string(j + 1));
  d.x_labels.push_back("intercept");
  for (Index c = 0; c < width; ++c) d.x_labels.push_back("w_" + std::to_string(c + 1));
  return d;
}

// Grid minimizer over [-3, 3]^2, refined around the incumbent down to 1e-6 spacing.
inline Eigen::Vector2d grid_search_minimizer(const VectorXd& y, const MatrixXd& x) {
  Eigen::Vector2d best(0.0, 0.0);
  double best_value = nll_oracle(y, x, best);
  double step = 0.01;
  double lo0 = -3.0, lo1 = -3.0;
  int count = 601;
  for (int level = 0; level < 5; ++level) {
    for (int a = 0; a < count; ++a)
      for (int b = 0; b < count; ++b) {
        const Eigen::Vector2d c(lo0 + a * step, lo1 + b * step);
        const double v = nll_oracle(y, x, c);
        if (v < best_value) {
          best_value = v;
          best = c;
        }
      }
    lo0 = best[0] - 2.0 * step;
    lo1 = best[1] - 2.0 * step;
    step /= 10.0;
    count = 41;
  }
  return best;
}

struct KktResiduals {
  double unpenalized = 0.0;  // max |score_j|
  double inactive = 0.0;     // max (|score_j| - lambda)+
  double active = 0.0;       // max |score_j + lambda sign(b_j)|
};

// KKT residuals on the internally standardized scale (columns centered when an
// intercept is present and scaled to unit root-mean-square), recomputed here
// from scratch. score_j is the gradient of the mean negative log-likelihood.
inline KktResiduals kkt(const VectorXd& y, const MatrixXd& x, const std::vector<Index>& unpenalized, double lambda,
                 const VectorXd& coef) {
  const Index n = x.rows();
  Index intercept = -1;
  for (Index j = 0; j < x.cols() && intercept < 0; ++j)
    if ((x.col(j).array() == 1.0).all()) intercept = j;
  VectorXd p(n);
  for (Index i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-x.row(i).dot(coef)));
  KktResiduals out;
  for (Index j = 0; j < x.cols(); ++j) {
    double scale = 1.0;
    VectorXd col = x.col(j);
    if (j != intercept) {
      if (intercept >= 0) col.array() -= col.mean();
      const double s = std::sqrt(col.squaredNorm() / static_cast<double>(n));
      if (s > 0.0) scale = s;
      col /= scale;
    }
    const double score = col.dot(p - y) / static_cast<double>(n);
    const double b = coef[j] * scale;
    const bool pen = std::find(unpenalized.begin(), unpenalized.end(), j) == unpenalized.end();
    if (!pen)
      out.unpenalized = std::max(out.unpenalized, std::abs(score));
    else if (b == 0.0)
      out.inactive = std::max(out.inactive, std::abs(score) - lambda);
    else
      out.active = std::max(out.active, std::abs(score + lambda * (b > 0.0 ? 1.0 : -1.0)));
  }
  return out;
}

struct Problem {
  VectorXd y;
  MatrixXd x;
};

inline Problem sparse_problem(Index n, Index d, std::mt19937_64& rng) {
  Problem p;
  p.x = random_design(n, d, rng);
  VectorXd coef = VectorXd::Zero(d);
  coef[0] = -0.3;
  for (Index j = 1; j < std::min<Index>(d, 4); ++j) coef[j] = (j % 2 == 0 ? -1.0 : 1.0) * 0.8;
  p.y = bernoulli_outcome(p.x, coef, rng);
  return p;
}

}  // namespace sgtest
