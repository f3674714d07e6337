// Monte Carlo properties of the estimators. Each test runs 100 to 200
// simulated datasets and takes several minutes on one core.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>

#include "sgdebias/sgdebias.hpp"

using namespace sgdebias;

namespace {

PipelineConfig seeded(PipelineConfig cfg, std::uint64_t master, std::size_t rep) {
  cfg.plan.seed = stream_seed(master, "split", rep);
  cfg.residual_selector.seed = stream_seed(master, "resid", rep);
  cfg.boot.seed = stream_seed(master, "boot", rep);
  return cfg;
}

SimulatedData latent(SimCase which, std::uint64_t master, std::size_t rep) {
  SimDesign d = SimDesign::latent(which);
  d.seed = stream_seed(master, "data", rep);
  return generate(d);
}

double sample_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

// |beta_4 - 1| <= 3 sigma_4 in at least 95 of 100 heterogeneous datasets.
TEST(MonteCarlo, RSplitConsistentInHeterogeneousDesign) {
  PipelineConfig base = desk_scale_pipeline();
  base.plan.splits = 200;
  int hits = 0;
  for (std::size_t rep = 0; rep < 100; ++rep) {
    const auto sim = latent(SimCase::heterogeneous, 101, rep);
    const auto cfg = seeded(base, 101, rep);
    try {
      const RSplitEstimate est = run_rsplit(sim.data, cfg.plan);
      const ResidualFit resid =
          full_data_residuals(sim.data.y, sim.data.stacked(), sim.data.unpenalized(), cfg.residual_selector);
      const VectorXd se = rsplit_standard_errors(est, sim.data, resid.residuals, cfg.boot);
      if (std::abs(est.beta[3] - 1.0) <= 3.0 * se[3]) ++hits;
    } catch (const NumericalError& e) {
      std::cerr << "replicate " << rep << ": " << e.what() << "\n";
    }
  }
  std::cout << "within 3 SE: " << hits << " / 100\n";
  EXPECT_GE(hits, 95);
}

// sqrt(n) sigma_j against the Monte Carlo SD of sqrt(n) beta_j, spurious design.
TEST(MonteCarlo, BootstrapStandardErrorsTrackSamplingSpread) {
  const PipelineConfig base = desk_scale_pipeline();
  const std::size_t reps = 200;
  std::vector<std::vector<double>> beta(4), se(4);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const auto sim = latent(SimCase::spurious, 202, rep);
    const auto cfg = seeded(base, 202, rep);
    const RSplitEstimate est = run_rsplit(sim.data, cfg.plan);
    const ResidualFit resid =
        full_data_residuals(sim.data.y, sim.data.stacked(), sim.data.unpenalized(), cfg.residual_selector);
    const VectorXd s = rsplit_standard_errors(est, sim.data, resid.residuals, cfg.boot);
    for (Index j = 0; j < 4; ++j) {
      beta[static_cast<std::size_t>(j)].push_back(est.beta[j]);
      se[static_cast<std::size_t>(j)].push_back(s[j]);
    }
  }
  for (std::size_t j = 0; j < 4; ++j) {
    double mean_se = 0.0;
    for (double v : se[j]) mean_se += v;
    mean_se /= static_cast<double>(reps);
    const double sd = sample_sd(beta[j]);
    std::cout << "coordinate " << j + 1 << ": mean SE " << mean_se << ", MC SD " << sd << "\n";
    EXPECT_NEAR(mean_se / sd, 1.0, 0.3) << "coordinate " << j + 1;
  }
}

TEST(MonteCarlo, SimultaneousBandIsWiderAndCoversMore) {
  MonteCarloConfig cfg;
  cfg.replicates = 200;
  cfg.seed = 303;
  cfg.pipeline = desk_scale_pipeline();
  const auto rep = run_monte_carlo(SimDesign::latent(SimCase::heterogeneous), cfg);
  const auto& cal = rep.methods[0];
  const auto& sim = rep.methods[2];
  std::cout << "coverage " << cal.coverage.mean << " vs " << sim.coverage.mean << "; length "
            << cal.sqrt_n_length.mean << " vs " << sim.sqrt_n_length.mean << "\n";
  EXPECT_GE(sim.coverage.mean, cal.coverage.mean);
  EXPECT_GT(sim.sqrt_n_length.mean, cal.sqrt_n_length.mean);
}

// Bias-reduced MSE at the cross-validated r against the best fixed candidate.
TEST(MonteCarlo, TunedExponentCompetesWithBestFixedCandidate) {
  const PipelineConfig base = desk_scale_pipeline();
  const auto candidates = default_r_candidates();
  const std::size_t reps = 100;
  std::vector<double> fixed_sse(candidates.size(), 0.0);
  double tuned_sse = 0.0;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const auto sim = latent(SimCase::heterogeneous, 404, rep);
    const auto cfg = seeded(base, 404, rep);
    const RSplitEstimate est = run_rsplit(sim.data, cfg.plan);
    const ResidualFit resid =
        full_data_residuals(sim.data.y, sim.data.stacked(), sim.data.unpenalized(), cfg.residual_selector);
    const MatrixXd draws = draw_bootstrap(est, sim.data, resid.residuals, cfg.boot);
    const auto n = static_cast<std::size_t>(sim.data.n());
    auto reduced = [&](double r) {
      const VectorXd c = calibration_terms(est.beta, n, r);
      return est.beta.maxCoeff() - calibrated_statistics(draws, est.beta, c).mean();
    };
    for (std::size_t l = 0; l < candidates.size(); ++l) {
      const double e = reduced(candidates[l]) - sim.beta_max;
      fixed_sse[l] += e * e;
    }
    TuningConfig tune;
    tune.seed = stream_seed(404, "tune", rep);
    const double r = select_r(sim.data, cfg, tune).r;
    const double e = reduced(r) - sim.beta_max;
    tuned_sse += e * e;
  }
  const double best = *std::min_element(fixed_sse.begin(), fixed_sse.end());
  std::cout << "tuned MSE " << tuned_sse / reps << ", best fixed " << best / reps << "\n";
  EXPECT_LE(tuned_sse, 1.1 * best);
}

TEST(MonteCarlo, AnalysisSelectsTheTrueLargestSubgroup) {
  int correct = 0;
  for (std::size_t rep = 0; rep < 100; ++rep) {
    SubgroupSimDesign d = SubgroupSimDesign::heterogeneous(2000, 4, 50);
    d.seed = stream_seed(505, "data", rep);
    const RawData raw = gen_subgroup_records(d);
    const EncodedDesign data = encode(raw, validate_subgroups(raw));
    AnalysisConfig cfg;
    cfg.pipeline = desk_scale_pipeline();
    cfg.pipeline.boot.replicates = 200;
    cfg.auto_r = false;
    cfg.seed = stream_seed(505, "analysis", rep);
    if (run_analysis(data, cfg).selected == 3) ++correct;
  }
  std::cout << "correct selections: " << correct << " / 100\n";
  EXPECT_GE(correct, 90);
}

TEST(MonteCarlo, PowerAtTheRightEdgeOfTheGrid) {
  MonteCarloConfig cfg;
  cfg.replicates = 100;
  cfg.seed = 606;
  cfg.pipeline = desk_scale_pipeline();
  const auto rep = run_power_curve({0.0, 1.0}, SimDesign::interaction(), cfg);
  std::cout << "rejection at 0: " << rep.points[0].calibrated.mean << ", at 1: " << rep.points[1].calibrated.mean
            << "\n";
  EXPECT_GE(rep.points[1].calibrated.mean, 0.9);
}

TEST(MonteCarlo, SelectionBiasOfTheMaxCoefficient) {
  BiasDemoConfig cfg;
  cfg.replicates = 200;
  cfg.seed = 707;
  const auto rep = run_bias_demo(SimDesign::interaction(), cfg);
  ASSERT_EQ(rep.rows.size(), 4u);
  for (const auto& row : rep.rows)
    std::cout << row.estimator << ": " << row.sqrt_n_bias.mean << " (" << row.sqrt_n_bias.se << ")\n";
  for (int k = 0; k < 3; ++k) {
    const auto& b = rep.rows[static_cast<std::size_t>(k)].sqrt_n_bias;
    EXPECT_GT(std::abs(b.mean), 2.0 * b.se) << rep.rows[static_cast<std::size_t>(k)].estimator;
  }
  EXPECT_GT(rep.rows[2].sqrt_n_bias.mean, 3.0 * rep.rows[2].sqrt_n_bias.se);
  EXPECT_LE(std::abs(rep.rows[3].sqrt_n_bias.mean), 2.0 * rep.rows[3].sqrt_n_bias.se);
}
