#pragma once

// Generation backends. Every backend answers a GenerationRequest with text;
// transport backends only look at `prompt`, the simulated backend answers from
// the structured fields instead.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lampo/cache.hpp"
#include "lampo/digest.hpp"
#include "lampo/error.hpp"

namespace lampo {

enum class RequestKind { kCompare, kContinue, kClassify };

inline const char* request_kind_name(RequestKind kind) {
  switch (kind) {
    case RequestKind::kCompare: return "compare";
    case RequestKind::kContinue: return "continue";
    case RequestKind::kClassify: return "classify";
  }
  return "unknown";
}

struct GenerationRequest {
  RequestKind kind = RequestKind::kCompare;
  std::string prompt;
  std::string cache_key;
  std::size_t max_tokens = 512;

  std::string item_a;  // kCompare
  std::string item_b;
  std::string query;                    // kClassify
  std::vector<std::string> labels;      // kContinue, kClassify
  std::vector<std::size_t> ordering;    // kClassify: demonstration permutation
};

struct CallCounters {
  std::atomic<std::size_t> compare{0};
  std::atomic<std::size_t> generate{0};
  std::atomic<std::size_t> classify{0};

  std::size_t total() const { return compare + generate + classify; }
};

// Rough token estimate used for context-budget checks: one token per four bytes.
inline std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

class Backend {
 public:
  virtual ~Backend() = default;

  std::string generate(const GenerationRequest& request) {
    switch (request.kind) {
      case RequestKind::kCompare: ++counters_.compare; break;
      case RequestKind::kContinue: ++counters_.generate; break;
      case RequestKind::kClassify: ++counters_.classify; break;
    }
    return do_generate(request);
  }

  // Per-label probabilities, or nullopt for generation-only backends.
  virtual std::optional<std::vector<double>> label_probabilities(const GenerationRequest&) {
    return std::nullopt;
  }

  virtual std::string id() const = 0;

  // 0 means unlimited.
  virtual std::size_t context_limit_tokens() const { return 0; }

  const CallCounters& counters() const noexcept { return counters_; }

 protected:
  virtual std::string do_generate(const GenerationRequest& request) = 0;

 private:
  CallCounters counters_;
};

enum class Preference { kPrefersA, kPrefersB, kInconclusive };

inline char preference_code(Preference p) {
  switch (p) {
    case Preference::kPrefersA: return 'A';
    case Preference::kPrefersB: return 'B';
    case Preference::kInconclusive: return 'I';
  }
  return 'I';
}

// Synthetic texts carry their latent value inline: "... latent=1.7 ...".
inline std::optional<double> extract_latent(std::string_view text) {
  static constexpr std::string_view kMarker = "latent=";
  auto pos = text.find(kMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  const char* first = text.data() + pos + kMarker.size();
  const char* last = text.data() + text.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr == first) return std::nullopt;
  return value;
}

inline std::string synthetic_text(double latent, std::string_view tag = {}) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "synthetic latent=%.6g", latent);
  std::string out(buf);
  if (!tag.empty()) {
    out += ' ';
    out += tag;
  }
  return out;
}

struct SimulatedConfig {
  double noise = 0.0;       // flip probability per call
  double tie_margin = 0.0;  // |latent difference| at or below this is inconclusive
  std::uint64_t seed = 0;
  std::size_t probes_per_generation = 5;
  // When set, classify requests under any other ordering collapse to label 0.
  std::vector<std::size_t> planted_ordering{};
  bool supports_probabilities = true;
  std::size_t context_limit_tokens = 0;
};

// One simulated preference call. The flip draw is keyed by (seed, nonce) so the
// same call always gets the same answer.
inline Preference simulated_compare(double latent_a, double latent_b, const SimulatedConfig& cfg,
                                    std::uint64_t call_nonce) {
  if (std::abs(latent_a - latent_b) <= cfg.tie_margin) return Preference::kInconclusive;
  bool a_wins = latent_a > latent_b;
  if (cfg.noise > 0.0 && unit_interval(hash_combine(cfg.seed, call_nonce)) < cfg.noise) {
    a_wins = !a_wins;
  }
  return a_wins ? Preference::kPrefersA : Preference::kPrefersB;
}

inline std::uint64_t compare_nonce(std::string_view item_a, std::string_view item_b) {
  return hash_combine(fnv1a64(item_a), fnv1a64(item_b) ^ 0x5bd1e995ULL);
}

class SimulatedBackend : public Backend {
 public:
  explicit SimulatedBackend(SimulatedConfig cfg = {}) : cfg_(std::move(cfg)) {}

  const SimulatedConfig& config() const noexcept { return cfg_; }
  std::string id() const override { return "simulated(seed=" + std::to_string(cfg_.seed) + ")"; }
  std::size_t context_limit_tokens() const override { return cfg_.context_limit_tokens; }

  std::optional<std::vector<double>> label_probabilities(
      const GenerationRequest& request) override {
    if (!cfg_.supports_probabilities) return std::nullopt;
    const auto m = request.labels.size();
    std::vector<double> p(m, 1.0 / static_cast<double>(m));
    const auto latent = extract_latent(request.query);
    if (!latent) return p;  // content-free input
    if (collapsed(request)) {
      std::fill(p.begin(), p.end(), 0.1 / static_cast<double>(m));
      p[0] += 0.9;
      return p;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = *latent - static_cast<double>(j);
      p[j] = std::exp(-2.0 * d * d);
      total += p[j];
    }
    for (auto& v : p) v /= total;
    return p;
  }

 protected:
  std::string do_generate(const GenerationRequest& request) override {
    switch (request.kind) {
      case RequestKind::kCompare: return answer_compare(request);
      case RequestKind::kContinue: return answer_continue(request);
      case RequestKind::kClassify: return answer_classify(request);
    }
    return {};
  }

 private:
  static double require_latent(std::string_view text) {
    auto latent = extract_latent(text);
    if (!latent) {
      throw ConfigError("simulated backend needs texts carrying 'latent=<value>': '" +
                        std::string(text.substr(0, 60)) + "'");
    }
    return *latent;
  }

  bool collapsed(const GenerationRequest& request) const {
    return !cfg_.planted_ordering.empty() && request.ordering != cfg_.planted_ordering;
  }

  std::string answer_compare(const GenerationRequest& request) const {
    const auto pref = simulated_compare(require_latent(request.item_a),
                                        require_latent(request.item_b), cfg_,
                                        compare_nonce(request.item_a, request.item_b));
    switch (pref) {
      case Preference::kPrefersA: return "Passage A";
      case Preference::kPrefersB: return "Passage B";
      case Preference::kInconclusive: return "Neither";
    }
    return {};
  }

  // Emits well-formed "input:<text> type:<label>" lines with latents drawn
  // uniformly over [0, m-1].
  std::string answer_continue(const GenerationRequest& request) const {
    const auto m = request.labels.size();
    if (m == 0) throw ConfigError("simulated generation needs the label list");
    const std::uint64_t base = hash_combine(cfg_.seed, fnv1a64(request.prompt));
    std::string out;
    for (std::size_t i = 0; i < cfg_.probes_per_generation; ++i) {
      const double latent =
          unit_interval(hash_combine(base, i)) * static_cast<double>(m - 1);
      const auto label = static_cast<std::size_t>(std::lround(latent));
      out += "input:" + synthetic_text(latent, "probe-" + std::to_string(base % 100000) + "-" +
                                                   std::to_string(i));
      out += " type:" + request.labels[label] + "\n";
    }
    return out;
  }

  std::string answer_classify(const GenerationRequest& request) const {
    const auto m = request.labels.size();
    if (m == 0) throw ConfigError("simulated classification needs the label list");
    if (collapsed(request)) return request.labels[0];
    const auto latent = extract_latent(request.query);
    if (!latent) return request.labels[0];
    auto label = static_cast<std::size_t>(
        std::clamp<long>(std::lround(*latent), 0, static_cast<long>(m) - 1));
    const auto key = hash_combine(cfg_.seed, fnv1a64(request.prompt));
    if (cfg_.noise > 0.0 && unit_interval(key) < cfg_.noise) {
      label = static_cast<std::size_t>(splitmix64(key) % m);
    }
    return request.labels[label];
  }

  SimulatedConfig cfg_;
};

// Answers only from a previously recorded cache file; never touches the network.
class ReplayBackend : public Backend {
 public:
  ReplayBackend(const std::filesystem::path& cache_file, bool strict) : strict_(strict) {
    for (auto& entry : scan_cache_file(cache_file).entries) {
      entries_[entry.key] = std::move(entry.raw);
    }
    source_ = cache_file.string();
  }

  std::string id() const override { return "replay(" + source_ + ")"; }

 protected:
  std::string do_generate(const GenerationRequest& request) override {
    auto it = entries_.find(request.cache_key);
    if (it != entries_.end()) return it->second;
    if (strict_) throw TransportError("replay cache has no entry for " + request.cache_key);
    return {};
  }

 private:
  std::unordered_map<std::string, std::string> entries_;
  std::string source_;
  bool strict_;
};

}  // namespace lampo
