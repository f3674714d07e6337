#pragma once

// Repeated sample splitting: select on one part, refit on the other, and
// average the refitted subgroup effects together with the scattered
// inverse-Hessian rows that later drive the multiplier bootstrap.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdebias/design.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/glm_core.hpp"
#include "sgdebias/sparse_select.hpp"
#include "sgdebias/streams.hpp"

namespace sgdebias {

/// Which subsample size normalizes the split-level Hessian average.
enum class HessianNormalizer { n2, n1 };

struct SplitPlan {
  std::size_t splits = 500;
  double ratio = 0.6;  // share of rows used for selection
  std::uint64_t seed = 0;
  SelectorConfig selector;
  NewtonConfig newton;
  HessianNormalizer normalizer = HessianNormalizer::n2;
  std::size_t workers = 1;
  bool keep_records = false;
};

struct SplitPartition {
  std::vector<Index> selection;  // T1
  std::vector<Index> refit;      // T2
};

/// One retained split.
struct SplitFit {
  std::size_t attempt = 0;
  std::vector<Index> selected;       // chosen covariate columns, as x-block indices
  std::vector<Index> refit_columns;  // stacked [z | x] columns of the refit, in order
  VectorXd beta;                     // refitted subgroup effects
  VectorXd coefficients;             // full refit, ordered as refit_columns
  MatrixXd contribution;             // p1 x (p1 + q): z-rows of the inverse Hessian, scattered
};

struct RSplitEstimate {
  VectorXd beta;   // average of retained split estimates
  MatrixXd gamma;  // averaged scattered inverse-Hessian rows, p1 x (p1 + q)
  VectorXd se;     // bootstrap standard errors; empty until computed
  std::size_t used = 0;
  std::size_t discarded = 0;
  std::vector<SplitFit> records;  // kept only when plan.keep_records
};

inline std::size_t selection_size(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
}

/// Random partition for split attempt `attempt`; both halves sorted.
inline SplitPartition split_partition(std::size_t n, double ratio, std::uint64_t seed, std::size_t attempt) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractViolation("split ratio must lie in (0, 1)");
  const std::size_t n1 = selection_size(n, ratio);
  if (n1 == 0 || n1 >= n) throw ContractViolation("split leaves an empty subsample");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Engine engine = make_engine(seed, "split", attempt);
  std::shuffle(order.begin(), order.end(), engine);
  SplitPartition part;
  part.selection.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n1));
  part.refit.assign(order.begin() + static_cast<std::ptrdiff_t>(n1), order.end());
  std::sort(part.selection.begin(), part.selection.end());
  std::sort(part.refit.begin(), part.refit.end());
  return part;
}

/// Refit of the model [z, forced x, x_selected] on `refit_rows`, with its
/// scattered inverse-Hessian contribution.
inline SplitFit refit_selected(const EncodedDesign& data, const std::vector<Index>& refit_rows,
                               const std::vector<Index>& selected, double normalizer,
                               const NewtonConfig& newton = {}) {
  const Index p1 = data.p1();
  SplitFit out;
  out.selected = selected;
  for (Index j = 0; j < p1 + data.forced; ++j) out.refit_columns.push_back(j);
  for (Index s : selected) out.refit_columns.push_back(p1 + s);

  const auto d = static_cast<Index>(out.refit_columns.size());
  const auto m = static_cast<Index>(refit_rows.size());
  MatrixXd design(m, d);
  VectorXd y(m);
  for (Index r = 0; r < m; ++r) {
    const Index i = refit_rows[static_cast<std::size_t>(r)];
    y[r] = data.y[i];
    for (Index c = 0; c < d; ++c) {
      const Index col = out.refit_columns[static_cast<std::size_t>(c)];
      design(r, c) = col < p1 ? data.z(i, col) : data.x(i, col - p1);
    }
  }
  const GlmFit fit = newton_refit(y, design, newton);
  if (!fit.converged) throw RefitNonConvergence("refit did not converge: " + fit.note);
  const MatrixXd hinv = inverse_hessian(fit, design, normalizer, newton.min_rcond);

  out.coefficients = fit.coefficients;
  out.beta = fit.coefficients.head(p1);
  out.contribution = MatrixXd::Zero(p1, p1 + data.q());
  for (Index c = 0; c < d; ++c) out.contribution.col(out.refit_columns[static_cast<std::size_t>(c)]) =
      hinv.block(0, c, p1, 1);
  return out;
}

/// Select on T1, refit on T2 for a single split attempt.
inline SplitFit fit_split(const EncodedDesign& data, const SplitPlan& plan, std::size_t attempt) {
  const auto n = static_cast<std::size_t>(data.n());
  const SplitPartition part = split_partition(n, plan.ratio, plan.seed, attempt);

  const EncodedDesign t1 = data.subset(part.selection);
  SelectorConfig sel = plan.selector;
  sel.seed = stream_seed(plan.seed, "split-cv", attempt);
  const SelectionResult chosen = cv_select_model(t1.y, t1.stacked(), t1.unpenalized(), sel);

  std::vector<Index> selected;
  for (Index col : chosen.selected) selected.push_back(col - data.p1());
  std::sort(selected.begin(), selected.end());

  const double normalizer = plan.normalizer == HessianNormalizer::n2
                                ? static_cast<double>(part.refit.size())
                                : static_cast<double>(part.selection.size());
  SplitFit out = refit_selected(data, part.refit, selected, normalizer, plan.newton);
  out.attempt = attempt;
  return out;
}

/// Means of beta and of the scattered contributions, with compensated sums.
inline RSplitEstimate aggregate_splits(std::span<const SplitFit> fits, Index p1, Index width) {
  if (fits.empty()) throw ContractViolation("no splits to aggregate");
  RSplitEstimate est;
  est.beta.resize(p1);
  est.gamma.resize(p1, width);
  const double b = static_cast<double>(fits.size());
  for (Index j = 0; j < p1; ++j) {
    CompensatedSum s;
    for (const auto& f : fits) s.add(f.beta[j]);
    est.beta[j] = s.value() / b;
  }
  for (Index c = 0; c < width; ++c)
    for (Index j = 0; j < p1; ++j) {
      CompensatedSum s;
      for (const auto& f : fits) s.add(f.contribution(j, c));
      est.gamma(j, c) = s.value() / b;
    }
  est.used = fits.size();
  return est;
}

/// The R-Split estimator.
///
/// Splits whose refit fails numerically are dropped and replaced by further
/// attempts from the same seed stream. More than half of plan.splits failing
/// raises TooManyDiscardedSplits.
inline RSplitEstimate run_rsplit(const EncodedDesign& data, const SplitPlan& plan) {
  data.validate();
  if (plan.splits < 1) throw ContractViolation("at least one split is required");
  const auto n = static_cast<std::size_t>(data.n());
  if (!(plan.ratio > 0.0 && plan.ratio < 1.0)) throw ContractViolation("split ratio must lie in (0, 1)");
  const std::size_t n2 = n - selection_size(n, plan.ratio);
  const auto need = static_cast<std::size_t>(data.p1() + data.forced) + plan.selector.max_size + 5;
  if (n2 <= need)
    throw ContractViolation("refit subsample of " + std::to_string(n2) + " rows is too small (needs more than " +
                            std::to_string(need) + ")");

  const std::size_t max_discard = plan.splits / 2;
  std::vector<SplitFit> kept;
  kept.reserve(plan.splits);
  std::size_t discarded = 0;
  std::size_t next_attempt = 0;
  while (kept.size() < plan.splits) {
    const std::size_t batch = plan.splits - kept.size();
    std::vector<std::optional<SplitFit>> results(batch);
    parallel_for(batch, plan.workers, [&](std::size_t k) {
      try {
        results[k] = fit_split(data, plan, next_attempt + k);
      } catch (const SeparationDetected&) {
      } catch (const SingularHessian&) {
      } catch (const RefitNonConvergence&) {
      }
    });
    next_attempt += batch;
    for (auto& r : results) {
      if (r)
        kept.push_back(std::move(*r));
      else
        ++discarded;
    }
    if (discarded > max_discard)
      throw TooManyDiscardedSplits(std::to_string(discarded) + " of " + std::to_string(next_attempt) +
                                   " split attempts failed to refit");
  }

  RSplitEstimate est = aggregate_splits(kept, data.p1(), data.p1() + data.q());
  est.discarded = discarded;
  if (plan.keep_records) est.records = std::move(kept);
  return est;
}

}  // namespace sgdebias
