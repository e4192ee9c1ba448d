#pragma once

// Run reports: per-seed metric values with mean and population standard
// deviation, rendered as JSON and as a markdown table with mean_{std} cells.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace lampo {

struct SeedResult {
  int seed = 0;
  std::optional<double> value;
  std::optional<std::string> failure;  // error kind when the seed was infeasible
};

struct MetricReport {
  std::string dataset;
  std::string method;    // lampo, icl, cc, globale
  std::string strategy;  // threshold strategy for lampo, empty otherwise
  std::size_t shots = 0;
  std::string metric;
  std::vector<SeedResult> seeds;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  nlohmann::json settings = nlohmann::json::object();

  std::vector<double> values() const {
    std::vector<double> out;
    for (const auto& s : seeds) {
      if (s.value) out.push_back(*s.value);
    }
    return out;
  }

  // First recorded failure kind; a report with any failed seed is shown as NA.
  std::optional<std::string> failure() const {
    for (const auto& s : seeds) {
      if (s.failure) return s.failure;
    }
    return std::nullopt;
  }

  double mean() const {
    const auto v = values();
    if (v.empty()) return 0.0;
    double total = 0.0;
    for (auto x : v) total += x;
    return total / static_cast<double>(v.size());
  }

  // Population standard deviation: the seeds are the whole configured population.
  double stddev() const {
    const auto v = values();
    if (v.empty()) return 0.0;
    const double mu = mean();
    double ss = 0.0;
    for (auto x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size()));
  }

  std::string column() const { return strategy.empty() ? method : method + "/" + strategy; }
};

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    nlohmann::json j = {{"seed", s.seed}};
    j["value"] = s.value ? nlohmann::json(*s.value) : nlohmann::json(nullptr);
    if (s.failure) j["failure"] = *s.failure;
    seeds.push_back(std::move(j));
  }
  nlohmann::json out = {
      {"dataset", r.dataset},     {"method", r.method},
      {"strategy", r.strategy},   {"shots", r.shots},
      {"metric", r.metric},       {"seeds", std::move(seeds)},
      {"backend_calls", r.backend_calls}, {"cache_hits", r.cache_hits},
      {"settings", r.settings},   {"std_convention", "population"},
  };
  if (auto f = r.failure()) {
    out["cell"] = "NA(" + *f + ")";
  } else {
    out["mean"] = r.mean();
    out["std"] = r.stddev();
  }
  return out;
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.strategy = j.value("strategy", std::string{});
  r.shots = j.value("shots", std::size_t{0});
  r.metric = j.value("metric", std::string{});
  for (const auto& s : j.at("seeds")) {
    SeedResult seed{s.at("seed").get<int>(), std::nullopt, std::nullopt};
    if (!s.at("value").is_null()) seed.value = s["value"].get<double>();
    if (s.contains("failure")) seed.failure = s["failure"].get<std::string>();
    r.seeds.push_back(std::move(seed));
  }
  r.backend_calls = j.value("backend_calls", std::size_t{0});
  r.cache_hits = j.value("cache_hits", std::size_t{0});
  r.settings = j.value("settings", nlohmann::json::object());
  return r;
}

// Table cell in percent: "65.0_{0.8}", or "NA(context-overflow)".
inline std::string format_cell(const MetricReport& r) {
  if (auto f = r.failure()) return "NA(" + *f + ")";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f_{%.1f}", 100.0 * r.mean(), 100.0 * r.stddev());
  return buf;
}

struct ReportDocument {
  nlohmann::json machine;
  std::string table;
};

// Rows are (dataset, metric, shots); columns are methods, in first-seen order.
inline ReportDocument emit_report(const std::vector<MetricReport>& reports) {
  ReportDocument doc;
  doc.machine = {{"reports", nlohmann::json::array()}};
  for (const auto& r : reports) doc.machine["reports"].push_back(to_json(r));

  std::vector<std::string> columns;
  std::vector<std::string> row_keys;
  std::map<std::string, std::map<std::string, std::string>> cells;
  for (const auto& r : reports) {
    const auto col = r.column();
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    const auto row = r.dataset + " | " + r.metric + " | " + std::to_string(r.shots);
    if (std::find(row_keys.begin(), row_keys.end(), row) == row_keys.end()) row_keys.push_back(row);
    cells[row][col] = format_cell(r);
  }
  std::string table = "| dataset | metric | shots |";
  for (const auto& c : columns) table += " " + c + " |";
  table += "\n|---|---|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) table += "---|";
  table += '\n';
  for (const auto& row : row_keys) {
    table += "| " + row + " |";
    for (const auto& c : columns) {
      auto it = cells[row].find(c);
      table += " " + (it == cells[row].end() ? std::string("-") : it->second) + " |";
    }
    table += '\n';
  }
  doc.table = std::move(table);
  return doc;
}

}  // namespace lampo
