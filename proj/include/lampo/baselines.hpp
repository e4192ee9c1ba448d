#pragma once

// Pointwise in-context learning baselines: plain ICL, contextual calibration
// and GlobalE ordering selection.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lampo/backend.hpp"
#include "lampo/cache.hpp"
#include "lampo/core.hpp"
#include "lampo/digest.hpp"
#include "lampo/error.hpp"
#include "lampo/parallel.hpp"
#include "lampo/probing.hpp"
#include "lampo/thresholding.hpp"

namespace lampo {

inline constexpr std::string_view kDefaultContentFree = "N/A";

inline std::string default_instruction(const OrderedLabelSpace& space) {
  std::string out = "Classify each input with one label from [";
  for (std::size_t j = 0; j < space.size(); ++j) {
    if (j > 0) out += ", ";
    out += "'" + space[j] + "'";
  }
  out += "].";
  return out;
}

struct PromptContext {
  std::string instruction;
  std::vector<Demonstration> demonstrations;  // in prompt order
  std::vector<std::size_t> ordering;          // permutation of the source set
  std::size_t ordering_id = 0;
};

inline PromptContext make_context(const DemonstrationSet& demos, std::vector<std::size_t> ordering,
                                  std::size_t ordering_id, std::string instruction) {
  PromptContext ctx{std::move(instruction), {}, std::move(ordering), ordering_id};
  for (auto i : ctx.ordering) ctx.demonstrations.push_back(demos.items().at(i));
  return ctx;
}

inline PromptContext identity_context(const DemonstrationSet& demos, std::string instruction) {
  std::vector<std::size_t> ordering(demos.size());
  std::iota(ordering.begin(), ordering.end(), std::size_t{0});
  return make_context(demos, std::move(ordering), 0, std::move(instruction));
}

// Demonstrations use the same "input:... type:..." linearization as probing.
inline std::string render_icl_prompt(const PromptContext& ctx, const TextItem& x,
                                     const OrderedLabelSpace& space) {
  std::string prompt = ctx.instruction;
  if (!prompt.empty()) prompt += '\n';
  for (const auto& demo : ctx.demonstrations) {
    prompt += linearize_example(demo, space);
    prompt += '\n';
  }
  prompt += kInputMarker;
  prompt += x.text;
  prompt += kTypeMarker;
  return prompt;
}

// Longest label occurring in the output, case-insensitive.
inline std::optional<std::size_t> match_label(std::string_view output, const OrderedLabelSpace& space) {
  const auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const auto haystack = lower(output);
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < space.size(); ++j) {
    const auto needle = lower(space[j]);
    if (haystack.find(needle) == std::string::npos) continue;
    if (!best || space[j].size() > space[*best].size()) best = j;
  }
  return best;
}

inline GenerationRequest classify_request(const PromptContext& ctx, const TextItem& x,
                                          const OrderedLabelSpace& space, Backend& backend) {
  GenerationRequest request;
  request.kind = RequestKind::kClassify;
  request.prompt = render_icl_prompt(ctx, x, space);
  request.query = x.text;
  request.labels = space.labels();
  request.ordering = ctx.ordering;
  request.max_tokens = 16;
  const auto limit = backend.context_limit_tokens();
  if (limit > 0 && estimate_tokens(request.prompt) > limit) {
    throw Error(ErrorKind::kContextOverflow,
                "prompt of ~" + std::to_string(estimate_tokens(request.prompt)) +
                    " tokens exceeds the backend context of " + std::to_string(limit));
  }
  request.cache_key = sha256_hex("classify\x1f" + request.prompt);
  return request;
}

inline std::size_t icl_predict(const PromptContext& ctx, const TextItem& x, Backend& backend,
                               const OrderedLabelSpace& space, ResponseCache* cache = nullptr) {
  auto request = classify_request(ctx, x, space, backend);
  std::string raw;
  if (auto hit = cache ? cache->find(request.cache_key) : std::nullopt) {
    raw = hit->raw;
  } else {
    raw = backend.generate(request);
    if (cache) cache->insert({request.cache_key, "classify", raw, {}, 0});
  }
  auto label = match_label(raw, space);
  if (!label) {
    throw Error(ErrorKind::kUnparseable, "no label found in model output '" + raw.substr(0, 80) + "'");
  }
  return *label;
}

class ProbabilityVector {
 public:
  explicit ProbabilityVector(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw ValidationError("probability vector is empty");
    double total = 0.0;
    for (auto v : p_) {
      if (!(v >= 0.0)) throw ValidationError("probabilities must be nonnegative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("probabilities sum to " + std::to_string(total) + ", not 1");
    }
  }

  const std::vector<double>& values() const noexcept { return p_; }
  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t j) const { return p_.at(j); }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
  }

 private:
  std::vector<double> p_;
};

inline ProbabilityVector contextual_calibrate(const ProbabilityVector& p_x, const ProbabilityVector& p_cf) {
  if (p_x.size() != p_cf.size()) throw ValidationError("probability vectors differ in length");
  std::vector<double> raw(p_x.size());
  double total = 0.0;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (!(p_cf[j] > 0.0)) {
      throw CalibrationError("content-free probability of label " + std::to_string(j) +
                             " is zero; calibration is singular");
    }
    raw[j] = p_x[j] / p_cf[j];
    total += raw[j];
  }
  if (!(total > 0.0)) throw CalibrationError("calibrated probabilities vanish");
  for (auto& v : raw) v /= total;
  return ProbabilityVector(std::move(raw));
}

inline ProbabilityVector query_probabilities(const PromptContext& ctx, const TextItem& x,
                                             Backend& backend, const OrderedLabelSpace& space) {
  auto probs = backend.label_probabilities(classify_request(ctx, x, space, backend));
  if (!probs) {
    throw Error(ErrorKind::kUnsupported,
                "backend " + backend.id() + " does not expose label probabilities");
  }
  return ProbabilityVector(std::move(*probs));
}

// Contextual-calibration prediction for x, using `content_free` to estimate the bias.
inline std::size_t cc_predict(const PromptContext& ctx, const TextItem& x, Backend& backend,
                              const OrderedLabelSpace& space,
                              std::string_view content_free = kDefaultContentFree) {
  const auto p_cf = query_probabilities(ctx, {std::string(content_free), std::nullopt}, backend, space);
  return contextual_calibrate(query_probabilities(ctx, x, backend, space), p_cf).argmax();
}

// Up to n distinct permutations of [0, size); all of them when size! <= n.
inline std::vector<std::vector<std::size_t>> sample_orderings(std::size_t size, std::size_t n,
                                                              std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> perm(size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  std::uint64_t factorial = 1;
  for (std::size_t i = 2; i <= size && factorial <= n; ++i) factorial *= i;
  if (factorial <= n) {
    do out.push_back(perm);
    while (std::next_permutation(perm.begin(), perm.end()));
    return out;
  }
  std::mt19937_64 rng(seed);
  std::set<std::vector<std::size_t>> seen;
  while (out.size() < n) {
    std::shuffle(perm.begin(), perm.end(), rng);
    if (seen.insert(perm).second) out.push_back(perm);
  }
  return out;
}

struct OrderingCandidate {
  std::size_t ordering_id = 0;
  std::vector<std::size_t> ordering;
  std::optional<double> entropy;       // nullopt when infeasible
  std::optional<std::string> failure;  // error kind when infeasible
  std::size_t unparseable = 0;
};

struct GlobalESelection {
  PromptContext context;
  double entropy = 0.0;
  std::vector<OrderingCandidate> candidates;
};

inline GlobalESelection globale_select_ordering(const DemonstrationSet& demos, std::size_t n_candidates,
                                                const ProbingSet& probing, Backend& backend,
                                                std::uint64_t seed, std::string instruction,
                                                ResponseCache* cache = nullptr,
                                                std::size_t parallelism = 1) {
  if (probing.texts.empty()) throw ValidationError("GlobalE needs a nonempty probing set");
  if (n_candidates == 0) throw ValidationError("GlobalE needs at least one candidate ordering");
  const auto& space = demos.label_space();
  const auto orderings = sample_orderings(demos.size(), n_candidates, seed);
  const auto probes = probing.items();

  GlobalESelection selection;
  for (std::size_t id = 0; id < orderings.size(); ++id) {
    OrderingCandidate candidate{id, orderings[id], std::nullopt, std::nullopt, 0};
    const auto ctx = make_context(demos, orderings[id], id, instruction);
    std::vector<std::optional<std::size_t>> predictions(probes.size());
    try {
      parallel_for(probes.size(), parallelism, [&](std::size_t i) {
        try {
          predictions[i] = icl_predict(ctx, probes[i], backend, space, cache);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kUnparseable) throw;
        }
      });
      std::vector<std::size_t> parsed;
      for (const auto& p : predictions) {
        if (p) parsed.push_back(*p);
        else ++candidate.unparseable;
      }
      candidate.entropy = label_entropy(parsed, space.size());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kContextOverflow) throw;
      candidate.failure = error_kind_name(e.kind());
    }
    selection.candidates.push_back(std::move(candidate));
  }

  const OrderingCandidate* best = nullptr;
  for (const auto& c : selection.candidates) {
    if (!c.entropy) continue;
    if (best == nullptr || *c.entropy > *best->entropy) best = &c;  // strict: lower id wins ties
  }
  if (best == nullptr) {
    throw Error(ErrorKind::kInfeasible, "every candidate ordering overflows the context");
  }
  selection.context = make_context(demos, best->ordering, best->ordering_id, std::move(instruction));
  selection.entropy = *best->entropy;
  return selection;
}

}  // namespace lampo
