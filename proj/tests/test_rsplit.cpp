#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "sgdebias/boot_calibrate.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/rsplit.hpp"
#include "support.hpp"

using namespace sgdebias;

namespace {

// Strong signal on w_1 and w_2 (x columns 1 and 2); the rest is noise.
EncodedDesign informative_design(Index n, std::uint64_t seed) {
  auto d = sgtest::toy_design(n, 3, 12, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double eta = 0.4 * d.z(i, 0) - 0.2 * d.z(i, 2) + 2.0 * d.x(i, 1) - 2.0 * d.x(i, 2);
    d.y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return d;
}

SplitPlan small_plan(std::size_t splits, std::uint64_t seed) {
  SplitPlan plan;
  plan.splits = splits;
  plan.seed = seed;
  plan.selector.min_size = 2;
  plan.selector.max_size = 4;
  return plan;
}

}  // namespace

TEST(SplitPartition, SizesAndDisjointness) {
  const auto part = split_partition(101, 0.6, 9, 3);
  EXPECT_EQ(part.selection.size(), 61u);
  EXPECT_EQ(part.refit.size(), 40u);
  std::set<Index> all(part.selection.begin(), part.selection.end());
  all.insert(part.refit.begin(), part.refit.end());
  EXPECT_EQ(all.size(), 101u);
  EXPECT_TRUE(std::is_sorted(part.selection.begin(), part.selection.end()));
  const auto again = split_partition(101, 0.6, 9, 3);
  EXPECT_EQ(part.refit, again.refit);
  EXPECT_NE(part.refit, split_partition(101, 0.6, 9, 4).refit);
  EXPECT_THROW(split_partition(10, 1.0, 0, 0), ContractViolation);
}

TEST(RSplit, SingleSplitEqualsItsRefit) {
  const auto d = informative_design(400, 1);
  SplitPlan plan = small_plan(1, 5);
  plan.selector.min_size = 2;
  plan.selector.max_size = 2;
  plan.keep_records = true;
  const RSplitEstimate est = run_rsplit(d, plan);
  ASSERT_EQ(est.used, 1u);
  EXPECT_EQ(est.records[0].selected, (std::vector<Index>{1, 2}));

  // Refit on T2 by hand: columns z, intercept, w_1, w_2.
  const auto part = split_partition(400, plan.ratio, plan.seed, est.records[0].attempt);
  MatrixXd design(static_cast<Index>(part.refit.size()), 6);
  VectorXd y(design.rows());
  for (Index r = 0; r < design.rows(); ++r) {
    const Index i = part.refit[static_cast<std::size_t>(r)];
    design.row(r) << d.z.row(i), d.x(i, 0), d.x(i, 1), d.x(i, 2);
    y[r] = d.y[i];
  }
  const GlmFit fit = newton_refit(y, design);
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(est.beta[j], fit.coefficients[j]);
}

TEST(RSplit, DeterministicAndWorkerIndependent) {
  const auto d = informative_design(300, 2);
  SplitPlan plan = small_plan(12, 44);
  const auto a = run_rsplit(d, plan);
  const auto b = run_rsplit(d, plan);
  plan.workers = 4;
  const auto c = run_rsplit(d, plan);
  EXPECT_TRUE(a.beta == b.beta);
  EXPECT_TRUE(a.gamma == b.gamma);
  EXPECT_TRUE(a.beta == c.beta);
  EXPECT_TRUE(a.gamma == c.gamma);
}

TEST(RSplit, AverageOfRetainedSplitsAndOrderInvariance) {
  const auto d = informative_design(300, 3);
  SplitPlan plan = small_plan(15, 8);
  plan.keep_records = true;
  const auto est = run_rsplit(d, plan);
  VectorXd mean = VectorXd::Zero(3);
  for (const auto& r : est.records) mean += r.beta;
  mean /= static_cast<double>(est.records.size());
  EXPECT_LE((est.beta - mean).cwiseAbs().maxCoeff(), 1e-12);

  std::vector<SplitFit> reversed(est.records.rbegin(), est.records.rend());
  const auto back = aggregate_splits(reversed, d.p1(), d.p1() + d.q());
  EXPECT_LE((back.beta - est.beta).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((back.gamma - est.gamma).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RSplit, ScatterTouchesOnlyRefitColumns) {
  const auto d = informative_design(300, 4);
  SplitPlan plan = small_plan(10, 9);
  plan.keep_records = true;
  const auto est = run_rsplit(d, plan);
  std::set<Index> ever;
  for (const auto& r : est.records) {
    std::set<Index> expected;
    for (Index j = 0; j < d.p1() + d.forced; ++j) expected.insert(j);
    for (Index s : r.selected) expected.insert(d.p1() + s);
    ever.insert(expected.begin(), expected.end());
    for (Index c = 0; c < r.contribution.cols(); ++c) {
      const bool nonzero = r.contribution.col(c).cwiseAbs().maxCoeff() > 0.0;
      EXPECT_EQ(nonzero, expected.count(c) == 1) << "column " << c;
    }
  }
  for (Index c = 0; c < est.gamma.cols(); ++c)
    if (!ever.count(c)) EXPECT_EQ(est.gamma.col(c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RSplit, InteractionBlockOfGammaIsSymmetricPositiveDefinite) {
  const auto d = informative_design(300, 5);
  const auto est = run_rsplit(d, small_plan(10, 10));
  const MatrixXd block = est.gamma.leftCols(d.p1());
  EXPECT_LE((block - block.transpose()).cwiseAbs().maxCoeff(), 1e-10 * block.cwiseAbs().maxCoeff());
  EXPECT_EQ(Eigen::LLT<MatrixXd>(0.5 * (block + block.transpose())).info(), Eigen::Success);
}

TEST(RSplit, HessianNormalizerSwitchRescalesGamma) {
  const auto d = informative_design(300, 6);
  SplitPlan plan = small_plan(6, 11);
  const auto n2 = run_rsplit(d, plan);
  plan.normalizer = HessianNormalizer::n1;
  const auto n1 = run_rsplit(d, plan);
  EXPECT_TRUE(n1.beta == n2.beta);
  const double ratio = 180.0 / 120.0;
  EXPECT_LE((n1.gamma - ratio * n2.gamma).cwiseAbs().maxCoeff(), 1e-12 * n1.gamma.cwiseAbs().maxCoeff());
}

TEST(RSplit, RefitSubsampleTooSmallIsContractViolation) {
  const auto d = informative_design(30, 7);
  EXPECT_THROW(run_rsplit(d, small_plan(3, 1)), ContractViolation);
}

TEST(RSplit, SeparatedOutcomeDiscardsEverySplit) {
  auto d = informative_design(300, 8);
  for (Index i = 0; i < d.n(); ++i) d.y[i] = d.z(i, 1);
  EXPECT_THROW(run_rsplit(d, small_plan(6, 12)), TooManyDiscardedSplits);
}

TEST(RSplit, StandardErrorsScaleWithResiduals) {
  const auto d = informative_design(300, 9);
  const auto est = run_rsplit(d, small_plan(8, 13));
  BootstrapConfig cfg;
  cfg.replicates = 200;
  cfg.seed = 3;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(-0.9, 0.9);
  VectorXd nu(d.n());
  for (Index i = 0; i < d.n(); ++i) nu[i] = unif(rng);
  const VectorXd s = rsplit_standard_errors(est, d, nu, cfg);
  const VectorXd s2 = rsplit_standard_errors(est, d, 2.0 * nu, cfg);
  EXPECT_GT(s.minCoeff(), 0.0);
  EXPECT_LE((s2 - 2.0 * s).cwiseAbs().maxCoeff(), 1e-10 * s.maxCoeff());
  EXPECT_EQ(rsplit_standard_errors(est, d, VectorXd::Zero(d.n()), cfg), VectorXd::Zero(d.p1()));
}
