#pragma once

// Per-image evaluation rows and their CSV / markdown renderings.

#include <d3/error.hpp>
#include <d3/image.hpp>
#include <d3/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace d3 {

enum class Metric { psnr, ssim, psnrb };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::psnr: return "psnr";
    case Metric::ssim: return "ssim";
    case Metric::psnrb: return "psnrb";
  }
  return "?";
}

/// Parses a comma-separated list such as "psnr,ssim,psnrb".
inline std::vector<Metric> parse_metrics(const std::string& list) {
  std::vector<Metric> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t end = std::min(list.find(',', pos), list.size());
    const std::string name = list.substr(pos, end - pos);
    if (name == "psnr") out.push_back(Metric::psnr);
    else if (name == "ssim") out.push_back(Metric::ssim);
    else if (name == "psnrb") out.push_back(Metric::psnrb);
    else throw ValidationError("unknown metric '" + name + "' (expected psnr, ssim or psnrb)");
    pos = end + 1;
  }
  return out;
}

inline double evaluate(Metric m, const GrayImage& ref, const GrayImage& test) {
  switch (m) {
    case Metric::psnr: return metrics::psnr(ref, test);
    case Metric::ssim: return metrics::ssim(ref, test);
    case Metric::psnrb: return metrics::psnr_b(ref, test);
  }
  return 0.0;
}

/// Cost of restoring one image, as recorded by the restore command.
struct RestoreCost {
  double milliseconds = 0.0;
  std::optional<std::uint64_t> multiplies;
};

using CostTable = std::map<std::string, RestoreCost>;

inline std::string encode_costs(const CostTable& t) {
  std::string out = "image,restore_ms,multiplies\n";
  for (const auto& [name, c] : t) {
    char ms[64];
    std::snprintf(ms, sizeof ms, "%.3f", c.milliseconds);
    out += name + "," + ms + "," + (c.multiplies ? std::to_string(*c.multiplies) : "") + "\n";
  }
  return out;
}

inline CostTable parse_costs(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "image,restore_ms,multiplies")
    throw ParseError(ParseErrorKind::malformed_header, "cost table must start with image,restore_ms,multiplies");
  CostTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw ParseError(ParseErrorKind::malformed_header, "bad cost row: " + line);
    try {
      RestoreCost c{std::stod(line.substr(a + 1, b - a - 1)), {}};
      if (b + 1 < line.size()) c.multiplies = std::stoull(line.substr(b + 1));
      t[line.substr(0, a)] = c;
    } catch (const std::logic_error&) {
      throw ParseError(ParseErrorKind::malformed_header, "bad cost row: " + line);
    }
  }
  return t;
}

struct EvalRow {
  std::string name;
  std::vector<double> values;  // one per report metric
  std::optional<RestoreCost> cost;
};

struct EvalReport {
  std::vector<Metric> metrics;
  std::vector<EvalRow> rows;

  void add(std::string name, const GrayImage& ref, const GrayImage& test) {
    EvalRow row{std::move(name), {}, {}};
    for (Metric m : metrics) row.values.push_back(evaluate(m, ref, test));
    rows.push_back(std::move(row));
  }

  void attach(const CostTable& costs) {
    for (auto& r : rows)
      if (auto it = costs.find(r.name); it != costs.end()) r.cost = it->second;
  }

  bool has_costs() const {
    return std::any_of(rows.begin(), rows.end(), [](const EvalRow& r) { return r.cost.has_value(); });
  }

  /// Column means; infinite PSNR values propagate.
  std::vector<double> averages() const {
    std::vector<double> avg(metrics.size(), 0.0);
    if (rows.empty()) return avg;
    for (const auto& r : rows)
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += r.values[i];
    for (auto& v : avg) v /= static_cast<double>(rows.size());
    return avg;
  }
};

inline std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace detail {

inline std::string cost_cells(const std::optional<RestoreCost>& c, const std::string& sep) {
  if (!c) return sep;
  return format_value(c->milliseconds) + sep + (c->multiplies ? std::to_string(*c->multiplies) : "");
}

}  // namespace detail

inline std::string to_csv(const EvalReport& r) {
  std::string out = "image";
  for (Metric m : r.metrics) out += "," + to_string(m);
  const bool costs = r.has_costs();
  if (costs) out += ",restore_ms,multiplies";
  out += "\n";
  for (const auto& row : r.rows) {
    out += row.name;
    for (double v : row.values) out += "," + format_value(v);
    if (costs) out += "," + detail::cost_cells(row.cost, ",");
    out += "\n";
  }
  return out;
}

/// Metrics as rows and images plus the average as columns.
inline std::string to_markdown(const EvalReport& r) {
  std::string out = "| metric |";
  for (const auto& row : r.rows) out += " " + row.name + " |";
  out += " average |\n|---|";
  for (std::size_t i = 0; i <= r.rows.size(); ++i) out += "---|";
  out += "\n";
  const auto avg = r.averages();
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    out += "| " + to_string(r.metrics[i]) + " |";
    for (const auto& row : r.rows) out += " " + format_value(row.values[i]) + " |";
    out += " " + format_value(avg[i]) + " |\n";
  }
  if (r.has_costs()) {
    auto cost_row = [&](const char* label, auto&& cell) {
      out += std::string("| ") + label + " |";
      for (const auto& row : r.rows) out += " " + (row.cost ? cell(*row.cost) : std::string("-")) + " |";
      out += " - |\n";
    };
    cost_row("restore_ms", [](const RestoreCost& c) { return format_value(c.milliseconds); });
    cost_row("multiplies", [](const RestoreCost& c) { return c.multiplies ? std::to_string(*c.multiplies) : "-"; });
  }
  return out;
}

}  // namespace d3
