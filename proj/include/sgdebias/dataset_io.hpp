#pragma once

// CSV ingestion of (y, t, s, w) records and their encoding into the
// subgroup-by-treatment design.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgdebias/design.hpp"
#include "sgdebias/errors.hpp"

namespace sgdebias {

struct RawRecord {
  double y = 0.0;
  double t = 0.0;
  int s = 0;
  std::vector<double> w;
  std::size_t row = 0;  // 1-based data row, header excluded
};

struct RawData {
  std::vector<RawRecord> records;
  std::vector<std::string> covariate_names;
  int declared_k = 0;  // from the roles sidecar; 0 when not declared
};

/// Column roles for files whose header is not the standard y, t, s, w1..wk.
struct ColumnRoles {
  std::string outcome = "y";
  std::string treatment = "t";
  std::string subgroup = "s";
  std::vector<std::string> covariates;  // empty: every remaining column
  int k = 0;

  static ColumnRoles from_json(const nlohmann::json& j) {
    ColumnRoles r;
    try {
      if (j.contains("outcome")) r.outcome = j.at("outcome").get<std::string>();
      if (j.contains("treatment")) r.treatment = j.at("treatment").get<std::string>();
      if (j.contains("subgroup")) r.subgroup = j.at("subgroup").get<std::string>();
      if (j.contains("covariates")) r.covariates = j.at("covariates").get<std::vector<std::string>>();
      if (j.contains("K")) r.k = j.at("K").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("roles sidecar: ") + e.what());
    }
    if (r.k < 0) throw DataError("roles sidecar: K must be positive");
    return r;
  }

  static ColumnRoles from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open roles sidecar " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("roles sidecar " + path + ": " + e.what());
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_real(std::string_view f) {
  if (f.empty()) return std::nullopt;
  if (f.front() == '+') f.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool is_standard_covariate(const std::string& name) {
  if (name.size() < 2 || name[0] != 'w') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

/// Parses comma-separated records. Blank lines and lines starting with '#'
/// are skipped. Subgroup contiguity is checked by validate_subgroups.
inline RawData parse_csv(std::istream& in, const std::optional<ColumnRoles>& roles = std::nullopt) {
  std::string line;
  bool have_header = false;
  auto skip = [](std::string_view l) {
    l = detail::trim(l);
    return l.empty() || l.front() == '#';
  };
  while (std::getline(in, line)) {
    if (!skip(line)) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw EmptyFile();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header_fields = detail::split_fields(line);
  std::vector<std::string> header(header_fields.begin(), header_fields.end());
  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) throw MalformedRow(0, "empty column name in header");
    if (!position.emplace(header[c], c).second) throw MalformedRow(0, "duplicate column " + header[c]);
  }

  const ColumnRoles r = roles.value_or(ColumnRoles{});
  auto locate = [&](const std::string& name) -> std::size_t {
    const auto it = position.find(name);
    if (it == position.end()) throw UnknownColumn(name + " (required column missing)");
    return it->second;
  };
  const std::size_t iy = locate(r.outcome);
  const std::size_t it = locate(r.treatment);
  const std::size_t is = locate(r.subgroup);

  RawData data;
  data.declared_k = r.k;
  std::vector<std::size_t> iw;
  if (roles && !r.covariates.empty()) {
    for (const auto& name : r.covariates) iw.push_back(locate(name));
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != iy && c != it && c != is && std::find(iw.begin(), iw.end(), c) == iw.end())
        throw UnknownColumn(header[c]);
  } else {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == iy || c == it || c == is) continue;
      if (!roles && !detail::is_standard_covariate(header[c])) throw UnknownColumn(header[c]);
      iw.push_back(c);
    }
  }
  for (std::size_t c : iw) data.covariate_names.push_back(header[c]);

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (skip(line)) continue;
    ++row;
    const auto f = detail::split_fields(line);
    if (f.size() != header.size())
      throw MalformedRow(row, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(f.size()));
    for (std::size_t c = 0; c < f.size(); ++c)
      if (f[c].empty()) throw MalformedRow(row, "missing value in column " + header[c]);

    RawRecord rec;
    rec.row = row;
    const auto y = detail::parse_real(f[iy]);
    if (!y) throw MalformedRow(row, "outcome is not a number");
    if (*y != 0.0 && *y != 1.0) throw NonBinaryOutcome(row, "outcome " + std::string(f[iy]) + " is not 0 or 1");
    rec.y = *y;
    const auto t = detail::parse_real(f[it]);
    if (!t || (*t != 0.0 && *t != 1.0)) throw MalformedRow(row, "treatment must be 0 or 1");
    rec.t = *t;
    const auto s = detail::parse_real(f[is]);
    if (!s || *s < 1.0 || *s != std::floor(*s) || *s > 1e6)
      throw MalformedRow(row, "subgroup label must be a positive integer");
    rec.s = static_cast<int>(*s);
    rec.w.reserve(iw.size());
    for (std::size_t c : iw) {
      const auto v = detail::parse_real(f[c]);
      if (!v) throw MalformedRow(row, "column " + header[c] + " is not a finite number");
      rec.w.push_back(*v);
    }
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw EmptyFile();
  return data;
}

inline RawData parse_csv(const std::string& path, const std::optional<ColumnRoles>& roles = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_csv(in, roles);
}

inline RawData parse_csv_text(const std::string& text, const std::optional<ColumnRoles>& roles = std::nullopt) {
  std::istringstream in(text);
  return parse_csv(in, roles);
}

/// Number of subgroups K: the declared value, else the largest label.
/// Labels must cover 1..K with every level present.
inline int validate_subgroups(const RawData& data) {
  int k = data.declared_k;
  int largest = 0;
  for (const auto& r : data.records) largest = std::max(largest, r.s);
  if (k == 0) k = largest;
  if (largest > k)
    throw DataError("subgroup label " + std::to_string(largest) + " exceeds declared K=" + std::to_string(k));
  std::vector<bool> seen(static_cast<std::size_t>(k) + 1, false);
  for (const auto& r : data.records) seen[static_cast<std::size_t>(r.s)] = true;
  for (int l = 1; l <= k; ++l)
    if (!seen[static_cast<std::size_t>(l)])
      throw DataError("subgroup labels must cover 1.." + std::to_string(k) + "; level " + std::to_string(l) +
                      " is absent");
  return k;
}

/// z_il = t_i 1(s_i = l); x = [intercept, 1(s = 1..K-1), w].
inline EncodedDesign encode(const RawData& data, int k) {
  if (k < 1) throw ContractViolation("K must be at least 1");
  const auto n = static_cast<Index>(data.records.size());
  const auto width = static_cast<Index>(data.covariate_names.size());
  EncodedDesign d;
  d.y.resize(n);
  d.z = MatrixXd::Zero(n, k);
  d.x = MatrixXd::Zero(n, k + width);
  d.forced = k;
  for (Index i = 0; i < n; ++i) {
    const RawRecord& r = data.records[static_cast<std::size_t>(i)];
    if (r.s < 1 || r.s > k) throw ContractViolation("subgroup label outside 1..K");
    if (static_cast<Index>(r.w.size()) != width) throw ContractViolation("record covariate width mismatch");
    d.y[i] = r.y;
    d.z(i, r.s - 1) = r.t;
    d.x(i, 0) = 1.0;
    if (r.s < k) d.x(i, r.s) = 1.0;
    for (Index c = 0; c < width; ++c) d.x(i, k + c) = r.w[static_cast<std::size_t>(c)];
  }
  for (int l = 1; l <= k; ++l) d.z_labels.push_back("z:s=" + std::to_string(l));
  d.x_labels.push_back("intercept");
  for (int l = 1; l < k; ++l) d.x_labels.push_back("s=" + std::to_string(l));
  for (const auto& name : data.covariate_names) {
    std::string label = name;
    if (detail::is_standard_covariate(name)) label = "w_" + name.substr(1);
    d.x_labels.push_back(label);
  }
  return d;
}

/// Warnings for empty (t, s) cells; splits may then fail to refit.
inline std::vector<std::string> degenerate_cells(const RawData& data, int k) {
  std::vector<std::array<std::size_t, 2>> count(static_cast<std::size_t>(k) + 1, {0, 0});
  for (const auto& r : data.records) ++count[static_cast<std::size_t>(r.s)][r.t == 1.0 ? 1 : 0];
  std::vector<std::string> out;
  for (int l = 1; l <= k; ++l)
    for (int t = 0; t <= 1; ++t)
      if (count[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] == 0)
        out.push_back("DegenerateCell: no rows with t=" + std::to_string(t) + ", s=" + std::to_string(l));
  return out;
}

/// Recovers (t, s) of row i from its encoding.
inline std::pair<int, int> decode_row(const EncodedDesign& d, Index i) {
  const auto k = static_cast<int>(d.p1());
  for (int l = 0; l < k; ++l)
    if (d.z(i, l) != 0.0) return {1, l + 1};
  for (int l = 1; l < k; ++l)
    if (d.x(i, l) != 0.0) return {0, l};
  return {0, k};
}

}  // namespace sgdebias
