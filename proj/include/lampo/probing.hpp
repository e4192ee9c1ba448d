#pragma once

// Probing sets: unlabeled texts sampled from the model by prompting it with
// shuffled, linearized demonstrations. Shared by threshold search and GlobalE.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lampo/backend.hpp"
#include "lampo/core.hpp"
#include "lampo/error.hpp"

namespace lampo {

inline constexpr std::size_t kDefaultProbingSize = 50;
inline constexpr std::size_t kDefaultProbingOrderings = 10;
inline constexpr std::size_t kDefaultProbingMaxTokens = 512;

enum class ProbingProvenance { kGenerated, kFile };

struct ProbingMetadata {
  std::size_t orderings_sampled = 0;
  std::string backend_id;
  std::uint64_t seed = 0;
};

// No label field, on purpose.
struct ProbingSet {
  std::vector<std::string> texts;
  ProbingProvenance provenance = ProbingProvenance::kFile;
  ProbingMetadata metadata;

  std::vector<TextItem> items() const {
    std::vector<TextItem> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back({t, std::nullopt});
    return out;
  }
};

inline constexpr std::string_view kInputMarker = "input:";
inline constexpr std::string_view kTypeMarker = " type:";

inline std::string linearize(std::string_view text, std::string_view label) {
  std::string out(kInputMarker);
  out += text;
  out += kTypeMarker;
  out += label;
  return out;
}

inline std::string linearize_example(const Demonstration& demo, const OrderedLabelSpace& space) {
  return linearize(demo.text, space[demo.label]);
}

struct LinearizedExample {
  std::string text;
  std::string label;
};

// Splits on "input:" markers; inside a segment the text ends at the first
// " type:" and the label runs to the end of that line. Segments without
// " type:" are dropped. Text is kept verbatim.
inline std::vector<LinearizedExample> parse_linearized(std::string_view generated) {
  std::vector<LinearizedExample> out;
  auto pos = generated.find(kInputMarker);
  while (pos != std::string_view::npos) {
    const auto start = pos + kInputMarker.size();
    const auto next = generated.find(kInputMarker, start);
    const auto segment = generated.substr(start, next == std::string_view::npos ? next : next - start);
    pos = next;
    const auto type_pos = segment.find(kTypeMarker);
    if (type_pos == std::string_view::npos) continue;
    auto label = segment.substr(type_pos + kTypeMarker.size());
    label = label.substr(0, label.find('\n'));
    while (!label.empty() && std::isspace(static_cast<unsigned char>(label.back()))) label.remove_suffix(1);
    while (!label.empty() && std::isspace(static_cast<unsigned char>(label.front()))) label.remove_prefix(1);
    out.push_back({std::string(segment.substr(0, type_pos)), std::string(label)});
  }
  return out;
}

// Probe texts from a generation: labels discarded, whitespace trimmed, inner
// newlines folded to spaces, empty texts dropped.
inline std::vector<std::string> extract_probe_texts(std::string_view generated) {
  std::vector<std::string> out;
  for (auto& example : parse_linearized(generated)) {
    auto& t = example.text;
    std::replace(t.begin(), t.end(), '\n', ' ');
    std::replace(t.begin(), t.end(), '\r', ' ');
    const auto first = t.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = t.find_last_not_of(" \t");
    out.push_back(t.substr(first, last - first + 1));
  }
  return out;
}

inline ProbingSet construct_probing_set(const DemonstrationSet& demos, Backend& backend,
                                        std::size_t n_target = kDefaultProbingSize,
                                        std::size_t n_orderings = kDefaultProbingOrderings,
                                        std::uint64_t seed = 0,
                                        std::size_t max_tokens = kDefaultProbingMaxTokens) {
  if (n_target == 0) throw ValidationError("probing set size must be positive");
  const auto& space = demos.label_space();
  std::vector<std::string> lines;
  for (const auto& demo : demos.items()) lines.push_back(linearize_example(demo, space));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(lines.size());
  ProbingSet probing;
  probing.provenance = ProbingProvenance::kGenerated;
  probing.metadata.backend_id = backend.id();
  probing.metadata.seed = seed;

  for (std::size_t o = 0; o < n_orderings && probing.texts.size() < n_target; ++o) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    GenerationRequest request;
    request.kind = RequestKind::kContinue;
    request.max_tokens = max_tokens;
    request.labels = space.labels();
    for (auto i : order) {
      request.prompt += lines[i];
      request.prompt += '\n';
    }
    ++probing.metadata.orderings_sampled;
    for (auto& text : extract_probe_texts(backend.generate(request))) {
      if (probing.texts.size() == n_target) break;
      probing.texts.push_back(std::move(text));
    }
  }
  if (probing.texts.empty()) {
    throw ValidationError("probing-set generation produced no extractable examples; "
                          "supply a probing file instead");
  }
  return probing;
}

inline std::filesystem::path probing_metadata_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

// One text per line, plus a JSON sidecar with generation metadata.
inline void save_probing_set(const std::filesystem::path& path, const ProbingSet& probing) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write probing set " + path.string());
  for (const auto& text : probing.texts) {
    if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos) {
      throw ValidationError("probing texts must be single-line");
    }
    if (text.empty()) throw ValidationError("probing texts must be nonempty");
    out << text << '\n';
  }
  nlohmann::json meta = {
      {"provenance", probing.provenance == ProbingProvenance::kGenerated ? "generated" : "file"},
      {"orderings_sampled", probing.metadata.orderings_sampled},
      {"backend", probing.metadata.backend_id},
      {"seed", probing.metadata.seed},
      {"count", probing.texts.size()},
  };
  std::ofstream meta_out(probing_metadata_path(path), std::ios::binary | std::ios::trunc);
  meta_out << meta.dump(2) << '\n';
}

inline ProbingSet load_probing_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("probing set file not found: " + path.string());
  ProbingSet probing;
  probing.provenance = ProbingProvenance::kFile;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    probing.texts.push_back(line);
  }
  if (probing.texts.empty()) throw ValidationError("probing set file is empty: " + path.string());
  std::ifstream meta_in(probing_metadata_path(path));
  if (meta_in) {
    try {
      const auto meta = nlohmann::json::parse(meta_in);
      probing.metadata.orderings_sampled = meta.value("orderings_sampled", std::size_t{0});
      probing.metadata.backend_id = meta.value("backend", std::string{});
      probing.metadata.seed = meta.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception&) {
      // Sidecar is informational only.
    }
  }
  return probing;
}

}  // namespace lampo
