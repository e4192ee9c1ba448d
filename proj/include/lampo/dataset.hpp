#pragma once

// Dataset files. One JSON object per line:
//
//   {"split": "demo", "seed": 0, "text": "...", "label": "positive"}
//   {"split": "test", "text": "...", "label": "neutral", "aspect": "battery"}
//
// "demo" rows are grouped into one demonstration set per seed; "aspect" is
// required for aspect-based tasks and ignored otherwise.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lampo/core.hpp"
#include "lampo/error.hpp"

namespace lampo {

struct DatasetRecord {
  std::string text;
  std::string label;
  std::optional<std::string> aspect;
};

struct LabeledItem {
  TextItem item;
  std::size_t gold = 0;
};

struct LoadedDataset {
  OrderedLabelSpace space;
  std::map<int, DemonstrationSet> demos_by_seed;
  std::vector<LabeledItem> test;
  std::vector<std::string> warnings;

  std::vector<TextItem> test_items() const {
    std::vector<TextItem> out;
    out.reserve(test.size());
    for (const auto& t : test) out.push_back(t.item);
    return out;
  }

  std::vector<std::size_t> test_golds() const {
    std::vector<std::size_t> out;
    out.reserve(test.size());
    for (const auto& t : test) out.push_back(t.gold);
    return out;
  }
};

namespace detail {

inline std::string casefold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace detail

// Exact match first, then a case-insensitive match (reported via `warning`).
inline std::size_t resolve_label(std::string_view label, const OrderedLabelSpace& space,
                                 std::string* warning = nullptr) {
  for (std::size_t j = 0; j < space.size(); ++j) {
    if (space[j] == label) return j;
  }
  const auto folded = detail::casefold(label);
  for (std::size_t j = 0; j < space.size(); ++j) {
    if (detail::casefold(space[j]) == folded) {
      if (warning) *warning = "label '" + std::string(label) + "' normalized to '" + space[j] + "'";
      return j;
    }
  }
  throw ValidationError("unknown label '" + std::string(label) + "'");
}

struct DatasetOptions {
  bool aspect_based = false;
  std::optional<std::size_t> shots_per_class;
};

inline LoadedDataset parse_dataset(std::istream& in, const OrderedLabelSpace& space,
                                   const DatasetOptions& options = {}) {
  LoadedDataset out{space, {}, {}, {}};
  std::map<int, std::vector<Demonstration>> demos;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + "malformed row (" + e.what() + ")");
    }
    if (!row.is_object() || !row.contains("text") || !row.contains("label") ||
        !row["text"].is_string() || !row["label"].is_string()) {
      throw ValidationError(where + "row needs string fields 'text' and 'label'");
    }
    const auto split = row.value("split", std::string("test"));
    DatasetRecord record{row["text"].get<std::string>(), row["label"].get<std::string>(), std::nullopt};
    if (row.contains("aspect") && row["aspect"].is_string()) record.aspect = row["aspect"].get<std::string>();
    if (options.aspect_based && !record.aspect) throw ValidationError(where + "missing aspect");
    if (!options.aspect_based) record.aspect.reset();
    if (record.text.empty()) throw ValidationError(where + "empty text");

    std::string warning;
    std::size_t label = 0;
    try {
      label = resolve_label(record.label, space, &warning);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    if (!warning.empty()) out.warnings.push_back(where + warning);

    if (split == "demo") {
      if (!row.contains("seed") || !row["seed"].is_number_integer()) {
        throw ValidationError(where + "demo rows need an integer 'seed'");
      }
      demos[row["seed"].get<int>()].push_back({record.text, label, record.aspect});
    } else if (split == "test") {
      out.test.push_back({{record.text, record.aspect}, label});
    } else {
      throw ValidationError(where + "unknown split '" + split + "'");
    }
  }
  for (auto& [seed, items] : demos) {
    try {
      out.demos_by_seed.emplace(seed, DemonstrationSet(std::move(items), space, options.shots_per_class));
    } catch (const ValidationError& e) {
      throw ValidationError("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  return out;
}

inline LoadedDataset load_dataset(const std::filesystem::path& path, const OrderedLabelSpace& space,
                                  const DatasetOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("dataset file not found: " + path.string());
  return parse_dataset(in, space, options);
}

// ---------------------------------------------------------------------------
// Conversion from CSV / TSV / JSON-lines tables.

using TableRow = std::map<std::string, std::string>;

// RFC 4180 style: quoted fields may contain delimiters, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse_delimited(std::string_view data, char delimiter) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      any = true;
    } else if (c == delimiter) {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<TableRow> read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto data = buf.str();
  const auto ext = path.extension().string();
  std::vector<TableRow> out;
  if (ext == ".jsonl" || ext == ".json") {
    std::istringstream lines(data);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        TableRow row;
        const auto parsed = nlohmann::json::parse(line);
        for (const auto& [key, value] : parsed.items()) {
          row[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
        out.push_back(std::move(row));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    return out;
  }
  const char delimiter = ext == ".tsv" ? '\t' : ',';
  const auto rows = parse_delimited(data, delimiter);
  if (rows.empty()) return out;
  const auto& header = rows.front();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw ValidationError(path.string() + " row " + std::to_string(r + 1) + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(rows[r].size()));
    }
    TableRow row;
    for (std::size_t c = 0; c < header.size(); ++c) row[header[c]] = rows[r][c];
    out.push_back(std::move(row));
  }
  return out;
}

struct ConvertOptions {
  std::string text_column = "text";
  std::string label_column = "label";
  std::optional<std::string> aspect_column;
  // Maps raw label values (e.g. "0") to label names; identity when empty.
  std::map<std::string, std::string> label_map;
};

inline nlohmann::json convert_row(const TableRow& row, const ConvertOptions& options,
                                  const std::string& source) {
  const auto field = [&](const std::string& column) -> const std::string& {
    auto it = row.find(column);
    if (it == row.end()) throw ValidationError(source + ": missing column '" + column + "'");
    return it->second;
  };
  auto label = field(options.label_column);
  if (!options.label_map.empty()) {
    auto it = options.label_map.find(label);
    if (it == options.label_map.end()) throw ValidationError(source + ": unmapped label '" + label + "'");
    label = it->second;
  }
  nlohmann::json out = {{"text", field(options.text_column)}, {"label", label}};
  if (options.aspect_column) out["aspect"] = field(*options.aspect_column);
  return out;
}

// Writes the dataset format from one table per demonstration seed plus a test table.
inline std::size_t convert_dataset(const std::vector<std::filesystem::path>& demo_files,
                                   const std::filesystem::path& test_file, const ConvertOptions& options,
                                   std::ostream& out) {
  std::size_t rows = 0;
  for (std::size_t seed = 0; seed < demo_files.size(); ++seed) {
    for (const auto& row : read_table(demo_files[seed])) {
      nlohmann::json full = {{"split", "demo"}, {"seed", seed}};
      full.update(convert_row(row, options, demo_files[seed].string()));
      out << full.dump() << '\n';
      ++rows;
    }
  }
  for (const auto& row : read_table(test_file)) {
    nlohmann::json full = {{"split", "test"}};
    full.update(convert_row(row, options, test_file.string()));
    out << full.dump() << '\n';
    ++rows;
  }
  return rows;
}

}  // namespace lampo
