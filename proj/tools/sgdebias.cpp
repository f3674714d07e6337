// sgdebias: command-line front end.
//
// Subcommands: analyze, tune, simulate, mc, power, bias-demo, evalue.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sgdebias/sgdebias.hpp"

namespace fs = std::filesystem;
using namespace sgdebias;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out = "sgdebias-out";
  bool quiet = false;

  [[nodiscard]] std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("SUBGROUP_DEBIAS_SEED")) {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used == std::string(env).size()) return v;
      } catch (const std::exception&) {
      }
      throw CLI::ValidationError("SUBGROUP_DEBIAS_SEED", "not an unsigned integer");
    }
    return 0;
  }
};

struct InferenceFlags {
  double alpha = 0.05;
  std::string r = "auto";
  std::optional<std::size_t> b1;
  std::optional<std::size_t> b2;
  double split_ratio = 0.6;
  std::size_t min_size = 3;
  std::size_t max_size = 10;
  std::size_t cv_folds = 3;
  std::string multiplier = "normal";
  std::string ci = "basic";
  std::string normalizer = "n2";
  bool full_budget = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master seed (fallback: SUBGROUP_DEBIAS_SEED, then 0)");
  app->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "Output directory");
  app->add_flag("--quiet", c.quiet, "Do not echo the text report");
}

void add_inference(CLI::App* app, InferenceFlags& f, bool with_r) {
  app->add_option("--alpha", f.alpha, "Significance level")->check(CLI::Range(1e-6, 0.5));
  if (with_r) app->add_option("--r", f.r, "Calibration exponent in (0, 0.5) or 'auto'");
  app->add_option("--b1", f.b1, "Number of sample splits")->check(CLI::PositiveNumber);
  app->add_option("--b2", f.b2, "Number of bootstrap replicates")->check(CLI::Range(100, 100000000));
  app->add_option("--split-ratio", f.split_ratio, "Share of rows used for selection")->check(CLI::Range(0.05, 0.95));
  app->add_option("--min-size", f.min_size, "Smallest selected model size");
  app->add_option("--max-size", f.max_size, "Largest selected model size");
  app->add_option("--cv-folds", f.cv_folds, "Folds of the lasso cross-validation")->check(CLI::Range(2, 50));
  app->add_option("--multiplier", f.multiplier, "Bootstrap multiplier law")
      ->check(CLI::IsMember({"normal", "rademacher"}));
  app->add_option("--ci", f.ci, "Interval convention")->check(CLI::IsMember({"basic", "symmetric"}));
  app->add_option("--hessian-normalizer", f.normalizer, "Split Hessian normalizer")
      ->check(CLI::IsMember({"n2", "n1"}));
  app->add_flag("--full-budget", f.full_budget, "Use B1 = 500, B2 = 1000 in Monte Carlo loops");
}

PipelineConfig pipeline_from(const InferenceFlags& f, std::size_t default_b1, std::size_t default_b2) {
  if (f.min_size > f.max_size) throw CLI::ValidationError("--min-size", "must not exceed --max-size");
  PipelineConfig cfg;
  cfg.plan.splits = f.b1.value_or(default_b1);
  cfg.plan.ratio = f.split_ratio;
  cfg.plan.normalizer = f.normalizer == "n1" ? HessianNormalizer::n1 : HessianNormalizer::n2;
  cfg.plan.selector.min_size = f.min_size;
  cfg.plan.selector.max_size = f.max_size;
  cfg.plan.selector.folds = f.cv_folds;
  cfg.residual_selector = cfg.plan.selector;
  cfg.boot.replicates = f.b2.value_or(default_b2);
  cfg.boot.alpha = f.alpha;
  cfg.boot.multiplier = f.multiplier == "rademacher" ? Multiplier::rademacher : Multiplier::normal;
  cfg.boot.convention = f.ci == "symmetric" ? IntervalConvention::symmetric : IntervalConvention::basic;
  return cfg;
}

std::optional<double> fixed_r(const std::string& r) {
  if (r == "auto") return std::nullopt;
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(r, &used);
    if (used != r.size()) throw std::invalid_argument(r);
  } catch (const std::exception&) {
    throw CLI::ValidationError("--r", "expected a number in (0, 0.5) or 'auto'");
  }
  if (!(v > 0.0 && v < 0.5)) throw CLI::ValidationError("--r", "must lie strictly inside (0, 0.5)");
  return v;
}

Json pipeline_json(const PipelineConfig& c) {
  return {{"b1", c.plan.splits},
          {"b2", c.boot.replicates},
          {"split_ratio", c.plan.ratio},
          {"min_size", c.plan.selector.min_size},
          {"max_size", c.plan.selector.max_size},
          {"cv_folds", c.plan.selector.folds},
          {"hessian_normalizer", c.plan.normalizer == HessianNormalizer::n1 ? "n1" : "n2"},
          {"alpha", c.boot.alpha},
          {"r", c.boot.r},
          {"multiplier", c.boot.multiplier == Multiplier::rademacher ? "rademacher" : "normal"},
          {"ci", c.boot.convention == IntervalConvention::symmetric ? "symmetric" : "basic"}};
}

/// Writes <stem>.json / .csv / .txt and manifest.json into the output directory.
void emit(const Common& c, Manifest& manifest, const std::string& stem, Json report, const std::string& csv,
          const std::string& text, double seconds) {
  const fs::path dir(c.out);
  const std::string hash = manifest.hash();
  report["manifest_hash"] = hash;
  manifest.runtime["workers"] = c.workers;
  manifest.runtime["out"] = c.out;
  manifest.runtime["seconds"] = seconds;
  write_file(dir / (stem + ".json"), dump_json(report));
  if (!csv.empty()) write_file(dir / (stem + ".csv"), csv);
  write_file(dir / (stem + ".txt"), text);
  write_file(dir / "manifest.json", dump_json(manifest.to_json()));
  if (!c.quiet) std::cout << text;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

EncodedDesign load_dataset(const std::string& path, const std::string& roles_path, Json& cfg) {
  std::optional<ColumnRoles> roles;
  if (!roles_path.empty()) roles = ColumnRoles::from_file(roles_path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const RawData raw = parse_csv_text(bytes, roles);
  const int k = validate_subgroups(raw);
  for (const auto& w : degenerate_cells(raw, k)) std::cerr << "warning: " << w << "\n";
  cfg["dataset"] = {{"path", fs::path(path).filename().string()},
                    {"content_hash", hex64(detail::fnv1a(bytes))},
                    {"rows", raw.records.size()},
                    {"subgroups", k},
                    {"covariates", raw.covariate_names.size()}};
  return encode(raw, k);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased inference on the largest subgroup treatment effect"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sgdebias 0.1.0");

  Common common;
  InferenceFlags inf;

  // analyze / tune
  std::string data_path, roles_path;
  std::size_t tune_b1 = 100, tune_b2 = 300, tune_folds = 3, top_k = 0;
  auto* analyze = app.add_subcommand("analyze", "Inference on a (y, t, s, w) CSV dataset");
  auto* tune = app.add_subcommand("tune", "Cross-validated choice of the calibration exponent r");
  for (auto* sub : {analyze, tune}) {
    sub->add_option("data", data_path, "CSV with columns y, t, s, w1..wk")->required();
    sub->add_option("--roles", roles_path, "JSON sidecar naming the column roles");
    sub->add_option("--tune-b1", tune_b1, "Splits inside the tuning loop")->check(CLI::PositiveNumber);
    sub->add_option("--tune-b2", tune_b2, "Bootstrap replicates inside the tuning loop")
        ->check(CLI::Range(100, 100000000));
    sub->add_option("--tune-folds", tune_folds, "Folds of the r cross-validation")->check(CLI::Range(2, 50));
    sub->add_option("--top-k", top_k, "Coordinates compared in the tuning criterion (0: min(3, K))");
    add_common(sub, common);
    add_inference(sub, inf, sub == analyze);
  }

  // simulate
  std::string design = "subgroup", sim_case = "heterogeneous";
  std::optional<long> n_opt, p1_opt, p2_opt;
  int k_groups = 4;
  auto* simulate = app.add_subcommand("simulate", "Write a simulated dataset");
  simulate->add_option("--design", design, "subgroup (y,t,s,w file), latent or interaction (encoded design)")
      ->check(CLI::IsMember({"subgroup", "latent", "interaction"}));
  simulate->add_option("--case", sim_case, "heterogeneous or spurious")
      ->check(CLI::IsMember({"heterogeneous", "spurious"}));
  simulate->add_option("--n", n_opt, "Rows")->check(CLI::PositiveNumber);
  simulate->add_option("--k", k_groups, "Subgroups (subgroup design)")->check(CLI::Range(1, 1000));
  simulate->add_option("--p1", p1_opt, "Subgroup effects (latent)")->check(CLI::PositiveNumber);
  simulate->add_option("--p2", p2_opt, "Covariates")->check(CLI::NonNegativeNumber);
  add_common(simulate, common);

  // mc
  std::size_t reps = 0;
  auto* mc = app.add_subcommand("mc", "Coverage, length and bias of the three interval methods");
  mc->add_option("--design", design, "latent or interaction")->check(CLI::IsMember({"latent", "interaction"}));
  mc->add_option("--case", sim_case, "heterogeneous or spurious")->check(CLI::IsMember({"heterogeneous", "spurious"}));
  mc->add_option("--n", n_opt, "Rows")->check(CLI::PositiveNumber);
  mc->add_option("--p1", p1_opt, "Subgroup effects")->check(CLI::PositiveNumber);
  mc->add_option("--p2", p2_opt, "Covariates")->check(CLI::PositiveNumber);
  mc->add_option("--reps", reps, "Monte Carlo replicates (default 300)");

  // power
  std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  auto* power = app.add_subcommand("power", "Rejection rates of H0: beta_max <= 0");
  power->add_option("--grid", grid, "beta_max values, must include 0")->delimiter(',');
  power->add_option("--n", n_opt, "Rows (default 1000)")->check(CLI::PositiveNumber);
  power->add_option("--p2", p2_opt, "Total columns p of the interaction design (default 200)")->check(CLI::PositiveNumber);
  power->add_option("--reps", reps, "Replicates per grid point (default 300)");

  for (auto* sub : {mc, power}) {
    add_common(sub, common);
    add_inference(sub, inf, true);
  }

  // bias-demo
  auto* bias = app.add_subcommand("bias-demo", "Selection bias of the max coefficient in the interaction design");
  bias->add_option("--n", n_opt, "Rows (default 1000)")->check(CLI::PositiveNumber);
  bias->add_option("--p2", p2_opt, "Total columns p (default 200)")->check(CLI::PositiveNumber);
  bias->add_option("--reps", reps, "Replicates (default 200)");
  bias->add_option("--min-size", inf.min_size, "Smallest selected model size");
  bias->add_option("--max-size", inf.max_size, "Largest selected model size");
  add_common(bias, common);

  // evalue
  double log_or = 0.0;
  std::optional<double> lower, upper;
  auto* evalue = app.add_subcommand("evalue", "E-value of a log odds ratio and of a confidence limit");
  evalue->add_option("--log-or", log_or, "Estimated log odds ratio")->required();
  evalue->add_option("--lower", lower, "Lower confidence limit (log-OR scale)");
  evalue->add_option("--upper", upper, "Upper confidence limit (log-OR scale)");
  add_common(evalue, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = common.resolved_seed();
    const bool mc_like = mc->parsed() || power->parsed();
    const std::size_t b1 = mc_like && !inf.full_budget ? 100 : 500;
    const std::size_t b2 = mc_like && !inf.full_budget ? 500 : 1000;

    if (analyze->parsed() || tune->parsed()) {
      const std::string cmd = analyze->parsed() ? "analyze" : "tune";
      Manifest m;
      m.command = cmd;
      m.config["seed"] = seed;
      const std::optional<double> r = fixed_r(inf.r);
      const EncodedDesign data = load_dataset(data_path, roles_path, m.config);
      AnalysisConfig cfg = default_analysis();
      cfg.pipeline = pipeline_from(inf, 500, 1000);
      cfg.seed = seed;
      cfg.workers = common.workers;
      cfg.tuning.splits = tune_b1;
      cfg.tuning.replicates = tune_b2;
      cfg.tuning.folds = tune_folds;
      cfg.tuning.top_k = top_k;
      if (r) {
        cfg.auto_r = false;
        cfg.pipeline.boot.r = *r;
      }
      m.config["pipeline"] = pipeline_json(cfg.pipeline);
      m.config["pipeline"]["r"] = cfg.auto_r ? Json("auto") : Json(cfg.pipeline.boot.r);
      m.config["tuning"] = {{"b1", tune_b1}, {"b2", tune_b2}, {"folds", tune_folds}, {"top_k", top_k},
                            {"candidates", cfg.tuning.candidates}};
      if (analyze->parsed()) {
        const AnalysisReport rep = run_analysis(data, cfg);
        emit(common, m, cmd, to_json(rep), to_csv(rep, m.hash()), to_text(rep, m.hash()), seconds_since(start));
      } else {
        PipelineConfig base = cfg.pipeline;
        base.plan.workers = 1;
        TuningConfig t = cfg.tuning;
        t.seed = stream_seed(seed, "analyze-tune");
        t.workers = common.workers;
        const TuningResult res = select_r(data, base, t);
        emit(common, m, cmd, to_json(res), to_csv(res, m.hash()), to_text(res, m.hash()), seconds_since(start));
      }
      return kOk;
    }

    if (simulate->parsed()) {
      Manifest m;
      m.command = "simulate";
      m.config = {{"seed", seed}, {"design", design}, {"case", sim_case}};
      const fs::path dir(common.out);
      Json truth;
      std::string csv;
      if (design == "subgroup") {
        SubgroupSimDesign d = SubgroupSimDesign::heterogeneous(n_opt.value_or(2000), k_groups, p2_opt.value_or(50));
        if (sim_case == "spurious") d.beta.setZero();
        d.seed = seed;
        m.config.update({{"n", d.n}, {"k", d.k}, {"p2", d.width}});
        const RawData raw = gen_subgroup_records(d);
        csv = csv_comment(m.hash());
        std::vector<std::string> head = {"y", "t", "s"};
        head.insert(head.end(), raw.covariate_names.begin(), raw.covariate_names.end());
        csv += csv_line(head);
        for (const auto& r : raw.records) {
          std::vector<std::string> f = {format_real(r.y), format_real(r.t), std::to_string(r.s)};
          for (double v : r.w) f.push_back(format_real(v));
          csv += csv_line(f);
        }
        truth = {{"beta", std::vector<double>(d.beta.data(), d.beta.data() + d.beta.size())},
                 {"beta_max", d.beta.maxCoeff()}};
      } else {
        SimDesign d = design == "interaction"
                          ? SimDesign::interaction(n_opt.value_or(1000), p2_opt.value_or(200))
                          : SimDesign::latent(sim_case == "spurious" ? SimCase::spurious : SimCase::heterogeneous,
                                                 p1_opt.value_or(4), p2_opt.value_or(150), n_opt.value_or(2000));
        d.seed = seed;
        m.config.update({{"n", d.n}, {"p1", d.p1}, {"p2", d.p2}});
        const SimulatedData sim = generate(d);
        csv = csv_comment(m.hash());
        std::vector<std::string> head = {"y"};
        for (const auto& l : sim.data.labels()) head.push_back(l);
        csv += csv_line(head);
        const MatrixXd w = sim.data.stacked();
        for (Index i = 0; i < sim.data.n(); ++i) {
          std::vector<std::string> f = {format_real(sim.data.y[i])};
          for (Index c = 0; c < w.cols(); ++c) f.push_back(format_real(w(i, c)));
          csv += csv_line(f);
        }
        truth = {{"beta", std::vector<double>(sim.beta.data(), sim.beta.data() + sim.beta.size())},
                 {"beta_max", sim.beta_max},
                 {"forced_columns", sim.data.forced}};
      }
      write_file(dir / "data.csv", csv);
      emit(common, m, "truth", truth, "", "wrote data.csv\nmanifest " + m.hash() + "\n",
           seconds_since(start));
      return kOk;
    }

    if (mc->parsed()) {
      const double r = fixed_r(inf.r).value_or(0.15);
      SimDesign d = design == "interaction"
                        ? SimDesign::interaction(n_opt.value_or(1000), p2_opt.value_or(200))
                        : SimDesign::latent(sim_case == "spurious" ? SimCase::spurious : SimCase::heterogeneous,
                                               p1_opt.value_or(4), p2_opt.value_or(150), n_opt.value_or(2000));
      MonteCarloConfig cfg;
      cfg.replicates = reps ? reps : 300;
      cfg.seed = seed;
      cfg.workers = common.workers;
      cfg.pipeline = pipeline_from(inf, b1, b2);
      cfg.pipeline.boot.r = r;
      Manifest m;
      m.command = "mc";
      m.config = {{"seed", seed}, {"design", design}, {"case", sim_case}, {"n", d.n}, {"p1", d.p1},
                  {"p2", d.p2}, {"reps", cfg.replicates}, {"pipeline", pipeline_json(cfg.pipeline)}};
      const MonteCarloReport rep = run_monte_carlo(d, cfg);
      emit(common, m, "mc", to_json(rep), to_csv(rep, m.hash()), to_text(rep, m.hash()), seconds_since(start));
      return kOk;
    }

    if (power->parsed()) {
      const double r = fixed_r(inf.r).value_or(0.15);
      const SimDesign base = SimDesign::interaction(n_opt.value_or(1000), p2_opt.value_or(200));
      MonteCarloConfig cfg;
      cfg.replicates = reps ? reps : 300;
      cfg.seed = seed;
      cfg.workers = common.workers;
      cfg.pipeline = pipeline_from(inf, b1, b2);
      cfg.pipeline.boot.r = r;
      Manifest m;
      m.command = "power";
      m.config = {{"seed", seed}, {"grid", grid}, {"n", base.n}, {"p", base.p1 + base.p2},
                  {"reps", cfg.replicates}, {"pipeline", pipeline_json(cfg.pipeline)}};
      const PowerReport rep = run_power_curve(grid, base, cfg);
      emit(common, m, "power", to_json(rep), to_csv(rep, m.hash()), to_text(rep, m.hash()), seconds_since(start));
      return kOk;
    }

    if (bias->parsed()) {
      if (inf.min_size > inf.max_size) throw CLI::ValidationError("--min-size", "must not exceed --max-size");
      const SimDesign d = SimDesign::interaction(n_opt.value_or(1000), p2_opt.value_or(200));
      BiasDemoConfig cfg;
      cfg.replicates = reps ? reps : 200;
      cfg.seed = seed;
      cfg.workers = common.workers;
      cfg.selector.min_size = inf.min_size;
      cfg.selector.max_size = inf.max_size;
      Manifest m;
      m.command = "bias-demo";
      m.config = {{"seed", seed}, {"n", d.n}, {"p", d.p1 + d.p2}, {"reps", cfg.replicates},
                  {"min_size", inf.min_size}, {"max_size", inf.max_size}, {"cv_folds", cfg.selector.folds}};
      const BiasDemoReport rep = run_bias_demo(d, cfg);
      emit(common, m, "bias", to_json(rep), to_csv(rep, m.hash()), to_text(rep, m.hash()), seconds_since(start));
      return kOk;
    }

    if (evalue->parsed()) {
      if (lower.has_value() != upper.has_value())
        throw CLI::ValidationError("--lower/--upper", "give both limits or neither");
      if (lower && !(*lower <= *upper)) throw CLI::ValidationError("--lower/--upper", "lower limit exceeds upper");
      if (!std::isfinite(log_or) || (lower && (!std::isfinite(*lower) || !std::isfinite(*upper))))
        throw CLI::ValidationError("--log-or", "inputs must be finite");
      const EvalueReport rep = lower ? evalue_report(log_or, *lower, *upper) : evalue_report(log_or);
      Manifest m;
      m.command = "evalue";
      m.config = {{"log_or", log_or}};
      if (lower) m.config["interval"] = {*lower, *upper};
      emit(common, m, "evalue", to_json(rep), "", to_text(rep) + "manifest " + m.hash() + "\n", seconds_since(start));
      return kOk;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
