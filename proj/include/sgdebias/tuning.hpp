#pragma once

// Cross-validated choice of the calibration exponent r.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "sgdebias/boot_calibrate.hpp"
#include "sgdebias/design.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/pipeline.hpp"
#include "sgdebias/rsplit.hpp"
#include "sgdebias/sparse_select.hpp"
#include "sgdebias/streams.hpp"

namespace sgdebias {

/// {1/3, 1/6, ..., 1/30}, largest first.
inline std::vector<double> default_r_candidates() {
  std::vector<double> r;
  for (int d = 3; d <= 30; d += 3) r.push_back(1.0 / d);
  return r;
}

struct TuningConfig {
  std::vector<double> candidates = default_r_candidates();
  std::size_t folds = 3;
  std::size_t top_k = 0;  // 0: min(3, p1)
  std::uint64_t seed = 0;
  std::size_t splits = 100;      // B1 inside the tuning loop
  std::size_t replicates = 300;  // B2 inside the tuning loop
  std::size_t workers = 1;

  void validate(Index p1) const {
    if (candidates.empty()) throw ContractViolation("candidate set is empty");
    for (double r : candidates)
      if (!(r > 0.0 && r < 0.5)) throw ContractViolation("every candidate r must lie strictly inside (0, 0.5)");
    if (folds < 2) throw ContractViolation("tuning needs at least two folds");
    if (top_k > static_cast<std::size_t>(p1)) throw ContractViolation("top_k exceeds the number of subgroups");
    if (replicates < 100) throw ContractViolation("at least 100 bootstrap replicates are required");
    if (splits < 1) throw ContractViolation("at least one split is required");
  }

  [[nodiscard]] std::size_t effective_k(Index p1) const {
    return top_k == 0 ? std::min<std::size_t>(3, static_cast<std::size_t>(p1)) : top_k;
  }
};

/// Per-fold quantities of the criterion.
struct TuningFold {
  Index key = 0;                  // smallest row index in the held-out fold
  std::vector<Index> ranked;      // coordinates by training estimate, largest first
  VectorXd reduced;               // bias-reduced training max, one per candidate
  VectorXd held_beta;             // held-out R-Split estimate
  VectorXd held_se;               // held-out bootstrap standard errors
};

struct TuningResult {
  double r = 0.0;
  std::vector<double> candidates;  // in the order given
  VectorXd criterion;              // one per candidate
  std::vector<TuningFold> folds;   // ordered by key
};

namespace detail {

struct SubsampleFit {
  RSplitEstimate estimate;
  MatrixXd draws;
};

inline SubsampleFit fit_subsample(const EncodedDesign& data, const PipelineConfig& base, const TuningConfig& tune,
                                  std::string_view role, Index key) {
  const auto k = static_cast<std::uint64_t>(key);
  PipelineConfig cfg = base;
  cfg.plan.splits = tune.splits;
  cfg.plan.seed = stream_seed(tune.seed, "tune-split", k, role == "train" ? 0 : 1);
  cfg.plan.workers = 1;
  cfg.residual_selector.seed = stream_seed(tune.seed, "tune-resid", k, role == "train" ? 0 : 1);
  cfg.boot.replicates = tune.replicates;
  cfg.boot.seed = stream_seed(tune.seed, "tune-boot", k, role == "train" ? 0 : 1);
  cfg.boot.workers = 1;

  SubsampleFit out;
  out.estimate = run_rsplit(data, cfg.plan);
  const ResidualFit resid = full_data_residuals(data.y, data.stacked(), data.unpenalized(), cfg.residual_selector);
  out.draws = draw_bootstrap(out.estimate, data, resid.residuals, cfg.boot);
  return out;
}

}  // namespace detail

/// Chooses r from `tune.candidates` using the supplied fold labels (0..v-1).
///
/// For fold j, the bias-reduced max from the other folds is compared with the
/// held-out R-Split estimate of the coordinate at training rank i:
///   h_ij(r) = (reduced_j(r) - held_beta_j[rank_i])^2 - held_se_j[rank_i]^2.
/// The criterion of r is min over i < k of the fold average of h_ij(r); the
/// smallest criterion wins and ties go to the larger r.
inline TuningResult select_r(const EncodedDesign& data, const PipelineConfig& base, const TuningConfig& tune,
                             const std::vector<std::size_t>& fold_of) {
  data.validate();
  tune.validate(data.p1());
  TuningResult result;
  result.candidates = tune.candidates;
  const auto m = static_cast<Index>(tune.candidates.size());
  if (m == 1) {
    result.r = tune.candidates.front();
    result.criterion = VectorXd::Zero(1);
    return result;
  }
  const auto n = static_cast<std::size_t>(data.n());
  if (fold_of.size() != n) throw ContractViolation("fold labels do not match the number of rows");

  std::vector<std::vector<Index>> held(tune.folds), train(tune.folds);
  for (std::size_t i = 0; i < n; ++i) {
    if (fold_of[i] >= tune.folds) throw ContractViolation("fold label out of range");
    for (std::size_t f = 0; f < tune.folds; ++f)
      (fold_of[i] == f ? held[f] : train[f]).push_back(static_cast<Index>(i));
  }
  for (std::size_t f = 0; f < tune.folds; ++f)
    if (held[f].empty()) throw ContractViolation("a tuning fold is empty");

  const Index p1 = data.p1();
  const std::size_t k = tune.effective_k(p1);
  std::vector<TuningFold> folds(tune.folds);
  std::vector<std::string> failures(tune.folds);

  parallel_for(tune.folds, tune.workers, [&](std::size_t f) {
    TuningFold& out = folds[f];
    out.key = held[f].front();
    try {
      const EncodedDesign tr = data.subset(train[f]);
      const EncodedDesign ho = data.subset(held[f]);
      const auto fit_train = detail::fit_subsample(tr, base, tune, "train", out.key);
      const auto fit_held = detail::fit_subsample(ho, base, tune, "held", out.key);

      const VectorXd& beta = fit_train.estimate.beta;
      out.ranked.resize(static_cast<std::size_t>(p1));
      std::iota(out.ranked.begin(), out.ranked.end(), Index{0});
      std::stable_sort(out.ranked.begin(), out.ranked.end(), [&](Index a, Index b) { return beta[a] > beta[b]; });

      const double top = beta.maxCoeff();
      out.reduced.resize(m);
      for (Index l = 0; l < m; ++l) {
        const VectorXd c =
            calibration_terms(beta, static_cast<std::size_t>(tr.n()), tune.candidates[static_cast<std::size_t>(l)]);
        out.reduced[l] = top - calibrated_statistics(fit_train.draws, beta, c).mean();
      }
      out.held_beta = fit_held.estimate.beta;
      out.held_se = bootstrap_standard_errors(fit_held.draws);
    } catch (const NumericalError& e) {
      failures[f] = e.what();
    }
  });
  for (std::size_t f = 0; f < tune.folds; ++f)
    if (!failures[f].empty())
      throw FoldFailure("tuning fold starting at row " + std::to_string(folds[f].key) + " failed: " + failures[f]);

  std::sort(folds.begin(), folds.end(), [](const TuningFold& a, const TuningFold& b) { return a.key < b.key; });

  const auto v = static_cast<double>(tune.folds);
  result.criterion.resize(m);
  for (Index l = 0; l < m; ++l) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      double sum = 0.0;
      for (const auto& fold : folds) {
        const Index c = fold.ranked[i];
        const double gap = fold.reduced[l] - fold.held_beta[c];
        sum += gap * gap - fold.held_se[c] * fold.held_se[c];
      }
      best = std::min(best, sum / v);
    }
    result.criterion[l] = best;
  }

  Index pick = 0;
  for (Index l = 1; l < m; ++l) {
    const double cl = result.criterion[l];
    const double cp = result.criterion[pick];
    if (cl < cp || (cl == cp && tune.candidates[static_cast<std::size_t>(l)] >
                                   tune.candidates[static_cast<std::size_t>(pick)]))
      pick = l;
  }
  result.r = tune.candidates[static_cast<std::size_t>(pick)];
  result.folds = std::move(folds);
  return result;
}

/// select_r with a seeded fold assignment.
inline TuningResult select_r(const EncodedDesign& data, const PipelineConfig& base, const TuningConfig& tune) {
  tune.validate(data.p1());
  if (tune.candidates.size() == 1) return select_r(data, base, tune, {});
  Engine engine = make_engine(tune.seed, "tune-folds");
  return select_r(data, base, tune, fold_assignment(static_cast<std::size_t>(data.n()), tune.folds, engine));
}

}  // namespace sgdebias
