#pragma once

// Simulation designs and the Monte Carlo harness: coverage / length / bias
// tables, power curves, and the selection-bias demonstration.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "sgdebias/boot_calibrate.hpp"
#include "sgdebias/dataset_io.hpp"
#include "sgdebias/design.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/glm_core.hpp"
#include "sgdebias/pipeline.hpp"
#include "sgdebias/rsplit.hpp"
#include "sgdebias/sparse_select.hpp"
#include "sgdebias/streams.hpp"

namespace sgdebias {

enum class DesignKind { interaction, latent };
enum class SimCase { heterogeneous, spurious };

/// Parameters of a simulated population.
///
/// interaction: t ~ Bernoulli(1/2), w ~ N(0, Sigma), x_j = 1(w_j > 0),
///           z_l = t x_l for l <= p1.
/// latent: x ~ N(0, Sigma), z_j ~ Bernoulli(expit(x_{2j-1} + x_{2j})).
/// In both, Sigma_jk = rho^|j-k| and logit P(y = 1) = z'beta + x'gamma.
struct SimDesign {
  DesignKind kind = DesignKind::latent;
  Index n = 2000;
  Index p1 = 4;
  Index p2 = 150;  // covariate count (columns of x, excluding the fitted intercept)
  VectorXd beta;
  VectorXd gamma;
  double rho = 0.5;
  std::uint64_t seed = 0;

  /// n = 1000, p = 200 (6 interactions, 194 covariates), beta = (.5, .5, 0, ...), gamma = (1, 1, 0, ...).
  static SimDesign interaction(Index n = 1000, Index p = 200) {
    SimDesign d;
    d.kind = DesignKind::interaction;
    d.n = n;
    d.p1 = 6;
    d.p2 = p - 6;
    d.beta = VectorXd::Zero(6);
    d.beta.head(2).setConstant(0.5);
    d.gamma = VectorXd::Zero(d.p2);
    d.gamma.head(2).setConstant(1.0);
    return d;
  }

  /// beta = (0, ..., 0, 1) or all zeros; gamma = (1, 1, 1, 1, 0, ...).
  static SimDesign latent(SimCase which, Index p1 = 4, Index p2 = 150, Index n = 2000) {
    SimDesign d;
    d.kind = DesignKind::latent;
    d.n = n;
    d.p1 = p1;
    d.p2 = p2;
    d.beta = VectorXd::Zero(p1);
    if (which == SimCase::heterogeneous) d.beta[p1 - 1] = 1.0;
    d.gamma = VectorXd::Zero(p2);
    d.gamma.head(std::min<Index>(4, p2)).setConstant(1.0);
    return d;
  }

  void validate() const {
    if (n < 2) throw ContractViolation("simulation needs n >= 2");
    if (beta.size() != p1) throw ContractViolation("beta length must equal p1");
    if (gamma.size() != p2) throw ContractViolation("gamma length must equal the covariate count");
    if (!(rho > -1.0 && rho < 1.0)) throw ContractViolation("rho must lie in (-1, 1)");
    if (kind == DesignKind::latent && p2 < 2 * p1) throw ContractViolation("latent design needs p2 >= 2 p1");
    if (kind == DesignKind::interaction && p2 < p1) throw ContractViolation("interaction design needs p2 >= p1");
  }
};

struct SimulatedData {
  EncodedDesign data;
  VectorXd beta;
  VectorXd gamma;  // over the x block of `data` (intercept first, true value 0)
  double beta_max = 0.0;
  VectorXd probability;  // P(y_i = 1 | z_i, x_i)
  VectorXd treatment;    // interaction only
};

/// Lower Cholesky factor of the Toeplitz matrix rho^|j-k|.
inline MatrixXd toeplitz_cholesky(Index p, double rho) {
  MatrixXd sigma(p, p);
  for (Index j = 0; j < p; ++j)
    for (Index k = 0; k < p; ++k) sigma(j, k) = std::pow(rho, static_cast<double>(std::abs(j - k)));
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("Toeplitz covariance is not positive definite");
  return llt.matrixL();
}

namespace detail {

inline MatrixXd gaussian_rows(Index n, const MatrixXd& chol, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd e(n, chol.rows());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < chol.rows(); ++j) e(i, j) = normal(engine);
  return e * chol.transpose();
}

inline void finish(SimulatedData& sim, const MatrixXd& z, const MatrixXd& covariates, const SimDesign& design,
                   Engine& engine) {
  const Index n = design.n;
  EncodedDesign& d = sim.data;
  d.z = z;
  d.x.resize(n, covariates.cols() + 1);
  d.x.col(0).setOnes();
  d.x.rightCols(covariates.cols()) = covariates;
  d.forced = 1;
  for (Index j = 0; j < design.p1; ++j) d.z_labels.push_back("z" + std::to_string(j + 1));
  d.x_labels.push_back("intercept");
  for (Index j = 0; j < covariates.cols(); ++j) d.x_labels.push_back("x" + std::to_string(j + 1));

  sim.beta = design.beta;
  sim.gamma = VectorXd::Zero(d.q());
  sim.gamma.tail(design.p2) = design.gamma;
  sim.beta_max = design.beta.maxCoeff();
  const VectorXd eta = z * design.beta + covariates * design.gamma;
  sim.probability = expit(eta);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) d.y[i] = unif(engine) < sim.probability[i] ? 1.0 : 0.0;
}

}  // namespace detail

inline SimulatedData gen_interaction(const SimDesign& design) {
  design.validate();
  if (design.kind != DesignKind::interaction) throw ContractViolation("gen_interaction needs an interaction design");
  Engine engine = make_engine(design.seed, "data");
  const MatrixXd w = detail::gaussian_rows(design.n, toeplitz_cholesky(design.p2, design.rho), engine);
  const MatrixXd x = (w.array() > 0.0).cast<double>();
  std::bernoulli_distribution coin(0.5);
  SimulatedData sim;
  sim.treatment.resize(design.n);
  for (Index i = 0; i < design.n; ++i) sim.treatment[i] = coin(engine) ? 1.0 : 0.0;
  const MatrixXd z = sim.treatment.asDiagonal() * x.leftCols(design.p1);
  detail::finish(sim, z, x, design, engine);
  return sim;
}

inline SimulatedData gen_latent(const SimDesign& design) {
  design.validate();
  if (design.kind != DesignKind::latent) throw ContractViolation("gen_latent needs a latent design");
  Engine engine = make_engine(design.seed, "data");
  const MatrixXd x = detail::gaussian_rows(design.n, toeplitz_cholesky(design.p2, design.rho), engine);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd z(design.n, design.p1);
  for (Index i = 0; i < design.n; ++i)
    for (Index j = 0; j < design.p1; ++j)
      z(i, j) = unif(engine) < expit(x(i, 2 * j) + x(i, 2 * j + 1)) ? 1.0 : 0.0;
  SimulatedData sim;
  detail::finish(sim, z, x, design, engine);
  return sim;
}

inline SimulatedData generate(const SimDesign& design) {
  return design.kind == DesignKind::interaction ? gen_interaction(design) : gen_latent(design);
}

/// Observational records in the (y, t, s, w) file layout:
///   s uniform on 1..K, t ~ Bernoulli(1/2), w ~ N(0, Sigma),
///   logit P(y = 1) = beta_s t + w'gamma.
struct SubgroupSimDesign {
  Index n = 2000;
  int k = 4;
  Index width = 50;
  VectorXd beta;   // length k
  VectorXd gamma;  // length width
  double rho = 0.5;
  std::uint64_t seed = 0;

  /// beta = (0, ..., 0, 1), gamma = (1, 1, 1, 1, 0, ...).
  static SubgroupSimDesign heterogeneous(Index n = 2000, int k = 4, Index width = 50) {
    SubgroupSimDesign d;
    d.n = n;
    d.k = k;
    d.width = width;
    d.beta = VectorXd::Zero(k);
    d.beta[k - 1] = 1.0;
    d.gamma = VectorXd::Zero(width);
    d.gamma.head(std::min<Index>(4, width)).setConstant(1.0);
    return d;
  }

  void validate() const {
    if (k < 1) throw ContractViolation("need at least one subgroup");
    if (n < k) throw ContractViolation("need at least one row per subgroup");
    if (beta.size() != k) throw ContractViolation("beta length must equal K");
    if (gamma.size() != width) throw ContractViolation("gamma length must equal the covariate width");
    if (!(rho > -1.0 && rho < 1.0)) throw ContractViolation("rho must lie in (-1, 1)");
  }
};

/// Records with every subgroup level present; the first K rows cycle through 1..K.
inline RawData gen_subgroup_records(const SubgroupSimDesign& design) {
  design.validate();
  Engine engine = make_engine(design.seed, "subgroup-data");
  MatrixXd w = design.width > 0 ? detail::gaussian_rows(design.n, toeplitz_cholesky(design.width, design.rho), engine)
                                : MatrixXd(design.n, 0);
  std::uniform_int_distribution<int> level(1, design.k);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RawData data;
  for (Index c = 0; c < design.width; ++c) data.covariate_names.push_back("w" + std::to_string(c + 1));
  data.records.resize(static_cast<std::size_t>(design.n));
  for (Index i = 0; i < design.n; ++i) {
    RawRecord& r = data.records[static_cast<std::size_t>(i)];
    r.row = static_cast<std::size_t>(i) + 1;
    const int drawn = level(engine);
    r.s = i < design.k ? static_cast<int>(i) + 1 : drawn;
    r.t = coin(engine) ? 1.0 : 0.0;
    r.w.resize(static_cast<std::size_t>(design.width));
    for (Index c = 0; c < design.width; ++c) r.w[static_cast<std::size_t>(c)] = w(i, c);
    const double eta = design.beta[r.s - 1] * r.t + w.row(i).dot(design.gamma);
    r.y = unif(engine) < expit(eta) ? 1.0 : 0.0;
  }
  return data;
}

// ---------------------------------------------------------------------------
// Monte Carlo summaries

/// Mean and standard error (sample SD / sqrt(count)) of a sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  CompensatedSum s;
  for (double x : v) s.add(x);
  out.mean = s.value() / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  CompensatedSum ss;
  for (double x : v) ss.add((x - out.mean) * (x - out.mean));
  out.se = std::sqrt(ss.value() / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  return out;
}

struct MethodSummary {
  std::string method;
  MeanSe coverage;
  MeanSe sqrt_n_length;
  std::optional<MeanSe> sqrt_n_bias;  // absent for the simultaneous method
  MeanSe lower_bound_coverage;        // one-sided (1 - alpha) lower bound
};

struct MonteCarloReport {
  std::string design;
  std::size_t replicates = 0;  // successful replicates
  std::size_t failed = 0;
  std::vector<MethodSummary> methods;  // boot-calibrated, no-adjustment, simultaneous
  double runtime_seconds = 0.0;
};

struct MonteCarloConfig {
  std::size_t replicates = 300;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  PipelineConfig pipeline;
  double max_failure_rate = 0.05;
};

/// Desk-scale pipeline defaults used inside Monte Carlo loops.
inline PipelineConfig desk_scale_pipeline() {
  PipelineConfig cfg;
  cfg.plan.splits = 100;
  cfg.boot.replicates = 500;
  cfg.boot.r = 0.15;
  return cfg;
}

namespace detail {

inline PipelineConfig seeded_pipeline(const PipelineConfig& base, std::uint64_t master, std::size_t rep) {
  PipelineConfig cfg = base;
  cfg.plan.seed = stream_seed(master, "mc-split", rep);
  cfg.plan.workers = 1;
  cfg.boot.seed = stream_seed(master, "mc-boot", rep);
  cfg.boot.workers = 1;
  cfg.residual_selector.seed = stream_seed(master, "mc-resid", rep);
  return cfg;
}

template <typename Body>
std::vector<std::optional<typename std::invoke_result_t<Body, std::size_t>>> run_replicates(
    std::size_t replicates, std::size_t workers, double max_failure_rate, Body&& body, std::size_t& failed) {
  using R = typename std::invoke_result_t<Body, std::size_t>;
  std::vector<std::optional<R>> out(replicates);
  parallel_for(replicates, workers, [&](std::size_t rep) {
    try {
      out[rep] = body(rep);
    } catch (const NumericalError&) {
    }
  });
  failed = static_cast<std::size_t>(std::count_if(out.begin(), out.end(), [](const auto& r) { return !r; }));
  if (static_cast<double>(failed) > max_failure_rate * static_cast<double>(replicates))
    throw ReplicateFailures(std::to_string(failed) + " of " + std::to_string(replicates) +
                            " Monte Carlo replicates failed");
  return out;
}

}  // namespace detail

struct ReplicateOutcome {
  // calibrated, naive, simultaneous
  bool covered[3] = {false, false, false};
  bool lower_covered[3] = {false, false, false};
  double length[3] = {0.0, 0.0, 0.0};
  double bias[2] = {0.0, 0.0};
};

inline ReplicateOutcome score_replicate(const PipelineResult& r, double beta_max, double sqrt_n) {
  ReplicateOutcome o;
  const double lo[3] = {r.calibrated.interval.lower, r.naive.lower, r.simultaneous.max_lower};
  const double hi[3] = {r.calibrated.interval.upper, r.naive.upper, r.simultaneous.max_upper};
  const double one[3] = {r.calibrated_one_sided.lower, r.naive.lower_one_sided, r.simultaneous_one_sided.max_lower};
  for (int m = 0; m < 3; ++m) {
    o.covered[m] = lo[m] <= beta_max && beta_max <= hi[m];
    o.lower_covered[m] = one[m] <= beta_max;
    o.length[m] = sqrt_n * (hi[m] - lo[m]);
  }
  o.bias[0] = sqrt_n * (r.calibrated.interval.bias_reduced - beta_max);
  o.bias[1] = sqrt_n * (r.naive.estimate - beta_max);
  return o;
}

/// Coverage, sqrt(n)-length and sqrt(n)-bias of the two-sided interval for
/// beta_max under the calibrated, unadjusted and simultaneous methods.
inline MonteCarloReport run_monte_carlo(const SimDesign& design, const MonteCarloConfig& config) {
  if (config.replicates < 50) throw ContractViolation("Monte Carlo needs at least 50 replicates");
  design.validate();
  const auto start = std::chrono::steady_clock::now();
  std::size_t failed = 0;
  const double sqrt_n = std::sqrt(static_cast<double>(design.n));
  auto outcomes = detail::run_replicates(config.replicates, config.workers, config.max_failure_rate,
                                         [&](std::size_t rep) {
                                           SimDesign d = design;
                                           d.seed = stream_seed(config.seed, "mc", rep);
                                           const SimulatedData sim = generate(d);
                                           const auto cfg = detail::seeded_pipeline(config.pipeline, config.seed, rep);
                                           return score_replicate(run_pipeline(sim.data, cfg), sim.beta_max, sqrt_n);
                                         },
                                         failed);

  static const char* names[3] = {"boot-calibrated", "no-adjustment", "simultaneous"};
  MonteCarloReport report;
  report.design = design.kind == DesignKind::interaction ? "interaction" : "latent";
  report.failed = failed;
  report.replicates = config.replicates - failed;
  for (int m = 0; m < 3; ++m) {
    std::vector<double> cov, len, bias, low;
    for (const auto& o : outcomes) {
      if (!o) continue;
      cov.push_back(o->covered[m] ? 1.0 : 0.0);
      low.push_back(o->lower_covered[m] ? 1.0 : 0.0);
      len.push_back(o->length[m]);
      if (m < 2) bias.push_back(o->bias[m]);
    }
    MethodSummary s;
    s.method = names[m];
    s.coverage = mean_se(cov);
    s.sqrt_n_length = mean_se(len);
    if (m < 2) s.sqrt_n_bias = mean_se(bias);
    s.lower_bound_coverage = mean_se(low);
    report.methods.push_back(s);
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Power

struct PowerPoint {
  double beta_max = 0.0;
  MeanSe calibrated;    // rejection rate of H0: beta_max <= 0 via the calibrated lower bound
  MeanSe simultaneous;  // same with the one-sided simultaneous lower bound
  MeanSe naive;
  std::size_t replicates = 0;
  std::size_t failed = 0;
};

struct PowerReport {
  std::vector<PowerPoint> points;
  double runtime_seconds = 0.0;
};

/// Interaction population with beta = (g, g, 0, 0, 0, 0) for a grid value g.
inline SimDesign power_design(const SimDesign& base, double g) {
  SimDesign d = base;
  d.beta.setZero();
  d.beta.head(std::min<Index>(2, d.p1)).setConstant(g);
  return d;
}

/// Rejection rates of the one-sided level-alpha test of beta_max <= 0.
inline PowerReport run_power_curve(const std::vector<double>& grid, const SimDesign& base,
                                   const MonteCarloConfig& config) {
  if (std::find(grid.begin(), grid.end(), 0.0) == grid.end())
    throw ContractViolation("power grid must include 0");
  if (config.replicates < 50) throw ContractViolation("Monte Carlo needs at least 50 replicates");
  const auto start = std::chrono::steady_clock::now();
  PowerReport report;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const SimDesign design = power_design(base, grid[g]);
    design.validate();
    std::size_t failed = 0;
    const std::uint64_t point_seed = stream_seed(config.seed, "power", g);
    auto outcomes = detail::run_replicates(config.replicates, config.workers, config.max_failure_rate,
                                           [&](std::size_t rep) {
                                             SimDesign d = design;
                                             d.seed = stream_seed(point_seed, "mc", rep);
                                             const SimulatedData sim = generate(d);
                                             const auto cfg = detail::seeded_pipeline(config.pipeline, point_seed, rep);
                                             const PipelineResult r = run_pipeline(sim.data, cfg);
                                             return std::array<double, 3>{
                                                 r.calibrated_one_sided.lower > 0.0 ? 1.0 : 0.0,
                                                 r.simultaneous_one_sided.max_lower > 0.0 ? 1.0 : 0.0,
                                                 r.naive.lower_one_sided > 0.0 ? 1.0 : 0.0};
                                           },
                                           failed);
    std::vector<double> cal, sim, nai;
    for (const auto& o : outcomes) {
      if (!o) continue;
      cal.push_back((*o)[0]);
      sim.push_back((*o)[1]);
      nai.push_back((*o)[2]);
    }
    PowerPoint p;
    p.beta_max = design.beta.maxCoeff();
    p.calibrated = mean_se(cal);
    p.simultaneous = mean_se(sim);
    p.naive = mean_se(nai);
    p.replicates = cal.size();
    p.failed = failed;
    report.points.push_back(p);
  }
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Selection-bias demonstration

struct BiasRow {
  std::string estimator;
  MeanSe sqrt_n_bias;
};

struct BiasDemoReport {
  std::size_t replicates = 0;
  std::size_t failed = 0;
  std::vector<BiasRow> rows;  // glm-lasso, refitted-glm-lasso, oracle, oracle-first-coordinate
  double runtime_seconds = 0.0;
};

struct BiasDemoConfig {
  std::size_t replicates = 500;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  SelectorConfig selector;
  double max_failure_rate = 0.05;
};

/// sqrt(n)-scaled bias of max_j beta-hat_j for the full-data lasso, the lasso
/// refit on its own support, and the refit on the true support.
inline BiasDemoReport run_bias_demo(const SimDesign& design, const BiasDemoConfig& config) {
  if (design.kind != DesignKind::interaction) throw ContractViolation("bias demonstration uses the interaction design");
  if (config.replicates < 2) throw ContractViolation("bias demonstration needs replicates");
  design.validate();
  const auto start = std::chrono::steady_clock::now();
  const double sqrt_n = std::sqrt(static_cast<double>(design.n));
  std::size_t failed = 0;

  std::vector<Index> support;
  for (Index j = 0; j < design.p2; ++j)
    if (design.gamma[j] != 0.0) support.push_back(1 + j);  // x-block index, after the intercept

  auto outcomes = detail::run_replicates(
      config.replicates, config.workers, config.max_failure_rate,
      [&](std::size_t rep) {
        SimDesign d = design;
        d.seed = stream_seed(config.seed, "bias", rep);
        const SimulatedData sim = generate(d);
        const EncodedDesign& data = sim.data;
        const Index p1 = data.p1();
        SelectorConfig sel = config.selector;
        sel.seed = stream_seed(config.seed, "bias-cv", rep);
        const ResidualFit lasso = full_data_residuals(data.y, data.stacked(), data.unpenalized(), sel);

        std::vector<Index> all_rows(static_cast<std::size_t>(data.n()));
        std::iota(all_rows.begin(), all_rows.end(), Index{0});
        std::vector<Index> lasso_support;
        for (Index col : lasso.selection.selected) lasso_support.push_back(col - p1);
        const SplitFit refit = refit_selected(data, all_rows, lasso_support, 1.0);
        const SplitFit oracle = refit_selected(data, all_rows, support, 1.0);

        return std::array<double, 4>{sqrt_n * (lasso.coefficients.head(p1).maxCoeff() - sim.beta_max),
                                     sqrt_n * (refit.beta.maxCoeff() - sim.beta_max),
                                     sqrt_n * (oracle.beta.maxCoeff() - sim.beta_max),
                                     sqrt_n * (oracle.beta[0] - sim.beta[0])};
      },
      failed);

  static const char* names[4] = {"glm-lasso", "refitted-glm-lasso", "oracle", "oracle-first-coordinate"};
  BiasDemoReport report;
  report.failed = failed;
  report.replicates = config.replicates - failed;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> v;
    for (const auto& o : outcomes)
      if (o) v.push_back((*o)[k]);
    report.rows.push_back({names[k], mean_se(v)});
  }
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace sgdebias
