#pragma once

// Deterministic report rendering (JSON, CSV, aligned text) and run manifests.

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sgdebias/analysis.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/sensitivity.hpp"
#include "sgdebias/sim_engine.hpp"
#include "sgdebias/streams.hpp"
#include "sgdebias/tuning.hpp"

namespace sgdebias {

using Json = nlohmann::json;

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" otherwise.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

/// Fixed-point rendering for human-readable text.
inline std::string format_fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.*f", digits, v);
  return buf.data();
}

/// JSON value for a real; non-finite values become null.
inline Json json_real(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string hex64(std::uint64_t v) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(v));
  return buf.data();
}

/// Resolved configuration of one run. Worker count and output locations are
/// recorded but excluded from the hash, so reruns on other machines or pool
/// sizes carry the same hash.
struct Manifest {
  std::string command;
  Json config = Json::object();  // hashed
  Json runtime = Json::object();  // not hashed: workers, output directory

  [[nodiscard]] std::string hash() const {
    const Json canon = {{"command", command}, {"config", config}};
    return hex64(detail::fnv1a(canon.dump()));
  }

  [[nodiscard]] Json to_json() const {
    return {{"command", command}, {"config", config}, {"runtime", runtime}, {"manifest_hash", hash()}};
  }
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

/// Comma-joined CSV line; fields are emitted verbatim.
inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string s;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) s += ',';
    s += fields[k];
  }
  return s + "\n";
}

inline std::string csv_comment(const std::string& hash) { return "# manifest_hash=" + hash + "\n"; }

/// Left-aligned first column, right-aligned rest.
inline std::string text_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      if (c) line += "  ";
      line += c == 0 ? r[c] + pad : pad + r[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

inline Json to_json(const MeanSe& m) { return {{"mean", json_real(m.mean)}, {"se", json_real(m.se)}}; }

// ---------------------------------------------------------------------------
// Monte Carlo

inline Json to_json(const MonteCarloReport& r) {
  Json methods = Json::array();
  for (const auto& m : r.methods) {
    Json j = {{"method", m.method},
              {"coverage", to_json(m.coverage)},
              {"sqrt_n_length", to_json(m.sqrt_n_length)},
              {"lower_bound_coverage", to_json(m.lower_bound_coverage)}};
    j["sqrt_n_bias"] = m.sqrt_n_bias ? to_json(*m.sqrt_n_bias) : Json(nullptr);
    methods.push_back(j);
  }
  return {{"design", r.design}, {"replicates", r.replicates}, {"failed", r.failed}, {"methods", methods}};
}

inline std::string to_csv(const MonteCarloReport& r, const std::string& hash) {
  std::string s = csv_comment(hash) +
                  csv_line({"method", "coverage", "coverage_se", "sqrt_n_length", "sqrt_n_length_se", "sqrt_n_bias",
                            "sqrt_n_bias_se", "lower_bound_coverage", "lower_bound_coverage_se", "replicates",
                            "failed"});
  for (const auto& m : r.methods)
    s += csv_line({m.method, format_real(m.coverage.mean), format_real(m.coverage.se),
                   format_real(m.sqrt_n_length.mean), format_real(m.sqrt_n_length.se),
                   m.sqrt_n_bias ? format_real(m.sqrt_n_bias->mean) : "",
                   m.sqrt_n_bias ? format_real(m.sqrt_n_bias->se) : "",
                   format_real(m.lower_bound_coverage.mean), format_real(m.lower_bound_coverage.se),
                   std::to_string(r.replicates), std::to_string(r.failed)});
  return s;
}

inline std::string to_text(const MonteCarloReport& r, const std::string& hash) {
  auto cell = [](const MeanSe& m) { return format_fixed(m.mean) + " (" + format_fixed(m.se) + ")"; };
  std::vector<std::vector<std::string>> rows = {
      {"method", "cover", "sqrt(n) length", "sqrt(n) bias", "lower-bound cover"}};
  for (const auto& m : r.methods)
    rows.push_back({m.method, cell(m.coverage), cell(m.sqrt_n_length), m.sqrt_n_bias ? cell(*m.sqrt_n_bias) : "---",
                    cell(m.lower_bound_coverage)});
  return "Monte Carlo, design " + r.design + ", " + std::to_string(r.replicates) + " replicates (" +
         std::to_string(r.failed) + " failed)\n\n" + text_table(rows) + "\nmanifest " + hash + "\n";
}

// ---------------------------------------------------------------------------
// Power

inline Json to_json(const PowerReport& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back({{"beta_max", json_real(p.beta_max)},
                   {"calibrated", to_json(p.calibrated)},
                   {"simultaneous", to_json(p.simultaneous)},
                   {"no_adjustment", to_json(p.naive)},
                   {"replicates", p.replicates},
                   {"failed", p.failed}});
  return {{"points", pts}};
}

inline std::string to_csv(const PowerReport& r, const std::string& hash) {
  std::string s = csv_comment(hash) +
                  csv_line({"beta_max", "calibrated_rate", "calibrated_se", "simultaneous_rate", "simultaneous_se",
                            "no_adjustment_rate", "no_adjustment_se", "replicates", "failed"});
  for (const auto& p : r.points)
    s += csv_line({format_real(p.beta_max), format_real(p.calibrated.mean), format_real(p.calibrated.se),
                   format_real(p.simultaneous.mean), format_real(p.simultaneous.se), format_real(p.naive.mean),
                   format_real(p.naive.se), std::to_string(p.replicates), std::to_string(p.failed)});
  return s;
}

inline std::string to_text(const PowerReport& r, const std::string& hash) {
  auto cell = [](const MeanSe& m) { return format_fixed(m.mean) + " (" + format_fixed(m.se) + ")"; };
  std::vector<std::vector<std::string>> rows = {{"beta_max", "calibrated", "simultaneous", "no adjustment", "reps"}};
  for (const auto& p : r.points)
    rows.push_back({format_fixed(p.beta_max, 2), cell(p.calibrated), cell(p.simultaneous), cell(p.naive),
                    std::to_string(p.replicates)});
  return "Rejection rate of H0: beta_max <= 0 (one-sided lower bound > 0)\n\n" + text_table(rows) + "\nmanifest " +
         hash + "\n";
}

// ---------------------------------------------------------------------------
// Bias demonstration

inline Json to_json(const BiasDemoReport& r) {
  Json rows = Json::array();
  for (const auto& b : r.rows) rows.push_back({{"estimator", b.estimator}, {"sqrt_n_bias", to_json(b.sqrt_n_bias)}});
  return {{"replicates", r.replicates}, {"failed", r.failed}, {"estimators", rows}};
}

inline std::string to_csv(const BiasDemoReport& r, const std::string& hash) {
  std::string s = csv_comment(hash) + csv_line({"estimator", "sqrt_n_bias", "sqrt_n_bias_se", "replicates", "failed"});
  for (const auto& b : r.rows)
    s += csv_line({b.estimator, format_real(b.sqrt_n_bias.mean), format_real(b.sqrt_n_bias.se),
                   std::to_string(r.replicates), std::to_string(r.failed)});
  return s;
}

inline std::string to_text(const BiasDemoReport& r, const std::string& hash) {
  std::vector<std::vector<std::string>> rows = {{"estimator", "sqrt(n) bias", "se", "bias/se"}};
  for (const auto& b : r.rows)
    rows.push_back({b.estimator, format_fixed(b.sqrt_n_bias.mean), format_fixed(b.sqrt_n_bias.se),
                    format_fixed(b.sqrt_n_bias.se > 0 ? b.sqrt_n_bias.mean / b.sqrt_n_bias.se : 0.0, 2)});
  return "Bias of the max coefficient, " + std::to_string(r.replicates) + " replicates\n\n" + text_table(rows) +
         "\nmanifest " + hash + "\n";
}

// ---------------------------------------------------------------------------
// E-values

inline Json to_json(const EvalueReport& r) {
  Json j = {{"log_or", json_real(r.log_or)}, {"estimate_evalue", json_real(r.estimate_evalue)}};
  if (r.has_interval) {
    j["interval"] = {json_real(r.lower), json_real(r.upper)};
    j["bound_evalue"] = json_real(r.bound_evalue);
  }
  return j;
}

inline std::string to_text(const EvalueReport& r) {
  std::string s = "log-OR " + format_fixed(r.log_or) + "  E-value " + format_fixed(r.estimate_evalue, 2) + "\n";
  if (r.has_interval)
    s += "interval (" + format_fixed(r.lower) + ", " + format_fixed(r.upper) + ")  bound E-value " +
         format_fixed(r.bound_evalue, 2) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Tuning and analysis

namespace detail {
inline double criterion_at(const TuningResult& t, std::size_t l) {
  return t.criterion.size() > static_cast<Index>(l) ? t.criterion[static_cast<Index>(l)] : 0.0;
}
}  // namespace detail

inline Json to_json(const TuningResult& t) {
  Json cands = Json::array();
  for (std::size_t l = 0; l < t.candidates.size(); ++l)
    cands.push_back({{"r", json_real(t.candidates[l])}, {"criterion", json_real(detail::criterion_at(t, l))}});
  return {{"r", json_real(t.r)}, {"candidates", cands}, {"folds", t.folds.size()}};
}

inline std::string to_csv(const TuningResult& t, const std::string& hash) {
  std::string s = csv_comment(hash) + csv_line({"r", "criterion", "chosen"});
  for (std::size_t l = 0; l < t.candidates.size(); ++l)
    s += csv_line({format_real(t.candidates[l]),
                   format_real(detail::criterion_at(t, l)),
                   t.candidates[l] == t.r ? "1" : "0"});
  return s;
}

inline std::string to_text(const TuningResult& t, const std::string& hash) {
  std::vector<std::vector<std::string>> rows = {{"r", "criterion", ""}};
  for (std::size_t l = 0; l < t.candidates.size(); ++l)
    rows.push_back({format_fixed(t.candidates[l], 4),
                    format_fixed(detail::criterion_at(t, l), 6),
                    t.candidates[l] == t.r ? "<" : ""});
  return "Cross-validated calibration exponent: r = " + format_fixed(t.r, 4) + "\n\n" + text_table(rows) +
         "\nmanifest " + hash + "\n";
}

inline Json to_json(const AnalysisReport& a) {
  Json subs = Json::array();
  for (const auto& s : a.subgroups)
    subs.push_back({{"label", s.label},
                    {"estimate", json_real(s.estimate)},
                    {"se", json_real(s.se)},
                    {"p_value", json_real(s.p_value)},
                    {"p_bonferroni", json_real(s.p_bonferroni)},
                    {"naive_interval", {json_real(s.naive_lower), json_real(s.naive_upper)}},
                    {"simultaneous_interval", {json_real(s.simultaneous_lower), json_real(s.simultaneous_upper)}},
                    {"e_value", json_real(s.e_value)},
                    {"e_value_bound", json_real(s.e_value_bound)}});
  Json j = {{"n", a.n},
            {"p1", a.p1},
            {"q", a.q},
            {"r", json_real(a.r)},
            {"splits_used", a.splits_used},
            {"splits_discarded", a.splits_discarded},
            {"residual_lambda", json_real(a.residual_lambda)},
            {"residual_model_size", a.residual_model_size},
            {"subgroups", subs},
            {"selected",
             {{"index", a.selected + 1},
              {"label", a.selected_label},
              {"beta_max", json_real(a.beta_max)},
              {"interval", {json_real(a.lower), json_real(a.upper)}},
              {"lower_bound_one_sided", json_real(a.lower_one_sided)},
              {"p_value", json_real(a.p_value)},
              {"p_one_sided", json_real(a.p_one_sided)},
              {"bias_reduced", json_real(a.bias_reduced)},
              {"e_value", json_real(e_value(a.beta_max))},
              {"e_value_bound", json_real(e_value_for_bound(std::min(a.lower, a.upper), std::max(a.lower, a.upper)))}}},
            {"simultaneous",
             {{"quantile", json_real(a.simultaneous_quantile)},
              {"max_interval", {json_real(a.simultaneous_max_lower), json_real(a.simultaneous_max_upper)}}}}};
  if (a.tuning) j["tuning"] = to_json(*a.tuning);
  return j;
}

inline std::string to_csv(const AnalysisReport& a, const std::string& hash) {
  std::string s = csv_comment(hash) +
                  csv_line({"subgroup", "estimate", "se", "p_value", "p_bonferroni", "naive_lower", "naive_upper",
                            "simultaneous_lower", "simultaneous_upper", "e_value", "e_value_bound", "selected"});
  for (std::size_t j = 0; j < a.subgroups.size(); ++j) {
    const auto& r = a.subgroups[j];
    s += csv_line({r.label, format_real(r.estimate), format_real(r.se), format_real(r.p_value),
                   format_real(r.p_bonferroni), format_real(r.naive_lower), format_real(r.naive_upper),
                   format_real(r.simultaneous_lower), format_real(r.simultaneous_upper), format_real(r.e_value),
                   format_real(r.e_value_bound), static_cast<Index>(j) == a.selected ? "1" : "0"});
  }
  return s;
}

inline std::string to_text(const AnalysisReport& a, const std::string& hash) {
  std::vector<std::vector<std::string>> rows = {
      {"subgroup", "est", "se", "p", "p (Bonf.)", "95% CI", "simultaneous", "E-value"}};
  for (const auto& r : a.subgroups)
    rows.push_back({r.label, format_fixed(r.estimate), format_fixed(r.se), format_fixed(r.p_value, 4),
                    format_fixed(r.p_bonferroni, 4),
                    "(" + format_fixed(r.naive_lower) + ", " + format_fixed(r.naive_upper) + ")",
                    "(" + format_fixed(r.simultaneous_lower) + ", " + format_fixed(r.simultaneous_upper) + ")",
                    format_fixed(r.e_value, 2)});
  std::ostringstream o;
  o << "n = " << a.n << ", subgroups = " << a.p1 << ", design columns = " << a.q << "\n";
  o << "R-Split: " << a.splits_used << " splits used, " << a.splits_discarded << " discarded; r = "
    << format_fixed(a.r, 4) << "\n\n";
  o << "Per-subgroup R-Split estimates (bootstrap standard errors)\n" << text_table(rows) << "\n";
  o << "Largest effect: " << a.selected_label << "\n";
  o << "  estimate        " << format_fixed(a.beta_max) << "\n";
  o << "  bias-reduced    " << format_fixed(a.bias_reduced) << "\n";
  o << "  calibrated CI   (" << format_fixed(a.lower) << ", " << format_fixed(a.upper) << ")\n";
  o << "  one-sided bound " << format_fixed(a.lower_one_sided) << "\n";
  o << "  p-value         " << format_fixed(a.p_value, 4) << " (one-sided " << format_fixed(a.p_one_sided, 4) << ")\n";
  o << "  simultaneous CI (" << format_fixed(a.simultaneous_max_lower) << ", "
    << format_fixed(a.simultaneous_max_upper) << ")\n";
  o << "\nmanifest " << hash << "\n";
  return o.str();
}

}  // namespace sgdebias
