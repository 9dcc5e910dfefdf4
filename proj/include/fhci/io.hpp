#ifndef FHCI_IO_HPP
#define FHCI_IO_HPP

// File formats used by the command-line tool.
//
// Dataset CSV:   area_id,y,D,<covariate 1>,...,<covariate p>   (one row per area)
// Interval CSV:  area_id,method,center,lower,upper,half_width,A_used,branch
// Summary CSV:   scenario,cell,B_label,leverage_label,B,leverage,D,method,
//                coverage_pct,avg_length,mc_se,trials,nas0_branch_fraction,
//                truncation_rate,failed_replicates
// Scenario file: flat "key = value" lines, '#' starts a comment.
//
// CSV numbers carry 17 significant digits (exact round trip); Markdown tables
// carry 2 decimals.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fhci/error.hpp"
#include "fhci/intervals.hpp"
#include "fhci/model.hpp"
#include "fhci/simulation.hpp"

namespace fhci::io {

inline std::string format17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

inline std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline SmallAreaDataset parse_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) {
      header = split_csv(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("empty dataset file", 0, 0);
  const char* required[] = {"area_id", "y", "D"};
  for (std::size_t c = 0; c < 3; ++c) {
    if (c >= header.size() || header[c] != required[c])
      throw ParseError(std::string("missing column '") + required[c] + "'", row, c + 1);
  }
  if (header.size() < 4) throw ParseError("at least one covariate column is required", row, 4);
  const std::size_t p = header.size() - 3;
  std::vector<std::string> names(header.begin() + 3, header.end());

  std::vector<std::string> ids;
  std::vector<double> ys, ds, xs;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() < header.size())
      throw ParseError("missing column '" + header[f.size()] + "'", row, f.size() + 1);
    if (f.size() > header.size()) throw ParseError("too many columns", row, header.size() + 1);
    if (f[0].empty()) throw ParseError("empty area_id", row, 1);
    ids.push_back(f[0]);
    double v = 0.0;
    for (std::size_t c = 1; c < f.size(); ++c) {
      if (!parse_double(f[c], v) || !std::isfinite(v))
        throw ParseError("non-numeric value '" + f[c] + "' in column '" + header[c] + "'", row,
                         c + 1);
      if (c == 1) ys.push_back(v);
      else if (c == 2) {
        if (!(v > 0.0))
          throw ParseError("sampling variance D must be positive (area '" + f[0] + "')", row, 3);
        ds.push_back(v);
      } else {
        xs.push_back(v);
      }
    }
  }
  if (ids.empty()) throw ParseError("dataset has no rows", row, 0);
  const auto m = static_cast<Eigen::Index>(ids.size());
  Vector y = Eigen::Map<const Vector>(ys.data(), m);
  Vector d = Eigen::Map<const Vector>(ds.data(), m);
  Matrix x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), m, static_cast<Eigen::Index>(p));
  return SmallAreaDataset(std::move(ids), std::move(y), std::move(d), std::move(x),
                          std::move(names));
}

inline SmallAreaDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'", 0, 0);
  return parse_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& out, const SmallAreaDataset& data) {
  out << "area_id,y,D";
  for (const auto& n : data.covariate_names()) out << ',' << quote_csv(n);
  out << '\n';
  for (std::size_t i = 0; i < data.m(); ++i) {
    out << quote_csv(data.area_ids()[i]) << ',' << format17(data.y(i)) << ','
        << format17(data.d(i));
    for (Eigen::Index j = 0; j < data.x().cols(); ++j)
      out << ',' << format17(data.x()(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

inline void write_intervals_csv(std::ostream& out, const std::vector<IntervalResult>& rows) {
  out << "area_id,method,center,lower,upper,half_width,A_used,branch\n";
  for (const auto& r : rows) {
    out << quote_csv(r.area_id) << ',' << method_key(r.method) << ',' << format17(r.center) << ','
        << format17(r.lower) << ',' << format17(r.upper) << ',' << format17(r.half_width) << ','
        << format17(r.a_used) << ',' << (r.branch ? branch_key(*r.branch) : "") << '\n';
  }
}

inline void write_intervals_markdown(std::ostream& out, const std::vector<IntervalResult>& rows) {
  out << "| area_id | method | center | lower | upper | half_width | A_used | branch |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.area_id << " | " << method_label(r.method) << " | " << format2(r.center)
        << " | " << format2(r.lower) << " | " << format2(r.upper) << " | "
        << format2(r.half_width) << " | " << format2(r.a_used) << " | "
        << (r.branch ? branch_key(*r.branch) : "") << " |\n";
  }
}

inline void write_summary_csv(std::ostream& out, const std::vector<SimulationSummary>& runs) {
  out << "scenario,cell,B_label,leverage_label,B,leverage,D,method,coverage_pct,avg_length,"
         "mc_se,trials,nas0_branch_fraction,truncation_rate,failed_replicates\n";
  for (const auto& s : runs) {
    for (const auto& c : s.cells) {
      for (const auto& st : c.methods) {
        out << quote_csv(s.name) << ',' << quote_csv(c.cell.label) << ','
            << quote_csv(c.cell.b_label) << ',' << quote_csv(c.cell.leverage_label) << ','
            << format17(c.mean_b) << ',' << format17(c.mean_leverage) << ','
            << format17(c.mean_d) << ',' << method_key(st.method) << ','
            << format17(st.coverage_pct) << ',' << format17(st.avg_length) << ','
            << format17(st.mc_standard_error) << ',' << st.trials << ','
            << (st.method == IntervalMethod::Nas ? format17(c.nas0_branch_fraction) : "") << ','
            << format17(s.truncation_rate) << ',' << s.failed_replicates << '\n';
      }
    }
  }
}

/// Reference-table layout: coverage row, average length in parentheses below it,
/// Monte Carlo standard error in brackets below that.
inline void write_summary_markdown(std::ostream& out, const std::vector<SimulationSummary>& runs,
                                   bool with_pattern_column) {
  if (runs.empty()) return;
  const auto& methods = runs.front().methods;
  std::string head = with_pattern_column ? "| Pattern | B | Leverage |" : "| B | Leverage |";
  std::string rule = with_pattern_column ? "|---|---|---|" : "|---|---|";
  for (auto m : methods) {
    head += " " + std::string(method_label(m)) + " |";
    rule += "---|";
  }
  out << head << '\n' << rule << '\n';
  const std::string blank = with_pattern_column ? "|  |  |  |" : "|  |  |";
  for (const auto& s : runs) {
    for (std::size_t ci = 0; ci < s.cells.size(); ++ci) {
      const auto& c = s.cells[ci];
      std::string lead = "|";
      if (with_pattern_column) {
        const auto pos = s.name.find_last_of('_');
        lead += " " + (ci == 0 ? "(" + s.name.substr(pos + 1) + ")" : std::string()) + " |";
      }
      const std::string b = c.cell.b_label.empty() ? format2(c.mean_b) : c.cell.b_label;
      const std::string lev =
          c.cell.leverage_label.empty() ? format2(c.mean_leverage) : c.cell.leverage_label;
      out << lead << ' ' << b << " | " << lev << " |";
      for (const auto& st : c.methods) out << ' ' << format2(st.coverage_pct) << " |";
      out << '\n' << blank;
      for (const auto& st : c.methods) out << " (" << format2(st.avg_length) << ") |";
      out << '\n' << blank;
      for (const auto& st : c.methods) out << " [" << format2(st.mc_standard_error) << "] |";
      out << '\n';
    }
  }
}

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", row, 0);
    const std::string key(trim(t.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", row, 1);
    std::string value(trim(t.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    kv[key] = value;
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'", 0, 0);
  return parse_key_values(in);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<IntervalMethod> parse_methods(std::string_view s) {
  std::vector<IntervalMethod> out;
  for (const auto& k : split_list(s)) out.push_back(parse_method(k));
  if (out.empty()) throw Error("no methods given");
  return out;
}

namespace detail {

inline double number(const KeyValues& kv, const std::string& key) {
  double v = 0.0;
  if (!parse_double(kv.at(key), v)) throw ParseError("key '" + key + "' is not a number", 0, 0);
  return v;
}

inline std::vector<double> numbers(const KeyValues& kv, const std::string& key) {
  std::vector<double> out;
  for (const auto& piece : split_list(kv.at(key))) {
    double v = 0.0;
    if (!parse_double(piece, v)) throw ParseError("key '" + key + "' has a non-number", 0, 0);
    out.push_back(v);
  }
  return out;
}

inline std::uint64_t unsigned_integer(const KeyValues& kv, const std::string& key) {
  const std::string& s = kv.at(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError("key '" + key + "' is not a nonnegative integer", 0, 0);
  return v;
}

}  // namespace detail

/// Documented scenario keys:
///   name, m, p, design (intercept | uniform_balanced | uniform_high_leverage | fixed),
///   design_file (dataset CSV whose covariates form X, for design = fixed),
///   beta, a_true, d_pattern, reps, alpha, methods, seed, cells (single | group),
///   leverage_lo, leverage_hi, a_max, abs_tol, max_iter, grid_points,
///   truncation_floor, threads.
inline ScenarioSpec scenario_from_key_values(const KeyValues& kv) {
  static const char* known[] = {"name",        "m",           "p",         "design",
                                "design_file", "beta",        "a_true",    "d_pattern",
                                "reps",        "alpha",       "methods",   "seed",
                                "cells",       "leverage_lo", "leverage_hi", "a_max",
                                "abs_tol",     "max_iter",    "grid_points", "truncation_floor",
                                "threads"};
  for (const auto& [k, v] : kv) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw ParseError("unknown scenario key '" + k + "'", 0, 0);
  }
  using detail::number;
  ScenarioSpec s;
  if (kv.count("name")) s.name = kv.at("name");
  if (kv.count("m")) s.m = detail::unsigned_integer(kv, "m");
  if (kv.count("p")) s.p = detail::unsigned_integer(kv, "p");
  if (kv.count("design")) {
    const std::string& d = kv.at("design");
    if (d == "intercept") s.design = CovariateDesign::InterceptOnly;
    else if (d == "uniform_balanced") s.design = CovariateDesign::UniformBalanced;
    else if (d == "uniform_high_leverage") s.design = CovariateDesign::UniformHighLeverage;
    else if (d == "fixed") s.design = CovariateDesign::Fixed;
    else throw ParseError("unknown design '" + d + "'", 0, 0);
  }
  if (s.design == CovariateDesign::Fixed) {
    if (!kv.count("design_file")) throw ParseError("design = fixed requires design_file", 0, 0);
    const SmallAreaDataset d = read_dataset_csv(kv.at("design_file"));
    s.fixed_x = d.x();
    s.m = d.m();
    s.p = d.p();
  }
  if (kv.count("beta")) {
    const auto b = detail::numbers(kv, "beta");
    s.beta = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  if (kv.count("a_true")) s.a_true = number(kv, "a_true");
  if (kv.count("d_pattern")) s.d_pattern = detail::numbers(kv, "d_pattern");
  if (kv.count("reps")) s.n_reps = detail::unsigned_integer(kv, "reps");
  if (kv.count("alpha")) s.alpha = number(kv, "alpha");
  if (kv.count("methods")) s.methods = parse_methods(kv.at("methods"));
  if (kv.count("seed")) s.seed = detail::unsigned_integer(kv, "seed");
  if (kv.count("cells")) {
    const std::string& c = kv.at("cells");
    if (c == "single") s.cell_mode = CellMode::SingleArea;
    else if (c == "group") s.cell_mode = CellMode::GroupAverage;
    else throw ParseError("cells must be 'single' or 'group'", 0, 0);
  }
  if (kv.count("leverage_lo")) s.leverage_lo = number(kv, "leverage_lo");
  if (kv.count("leverage_hi")) s.leverage_hi = number(kv, "leverage_hi");
  if (kv.count("a_max")) s.search.a_max = number(kv, "a_max");
  if (kv.count("abs_tol")) s.search.abs_tol = number(kv, "abs_tol");
  if (kv.count("max_iter")) s.search.max_iter = static_cast<int>(detail::unsigned_integer(kv, "max_iter"));
  if (kv.count("grid_points"))
    s.search.grid_points = static_cast<int>(detail::unsigned_integer(kv, "grid_points"));
  if (kv.count("truncation_floor")) s.search.truncation_floor = number(kv, "truncation_floor");
  if (kv.count("threads")) s.threads = static_cast<int>(detail::unsigned_integer(kv, "threads"));
  s.validate();
  return s;
}

}  // namespace fhci::io

#endif  // FHCI_IO_HPP
