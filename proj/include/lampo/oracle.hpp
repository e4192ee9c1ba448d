#pragma once

// The preference machine F(x, x_i): two order-swapped comparison calls per
// pair, answers parsed to A/B/inconclusive, every call cached.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <future>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lampo/backend.hpp"
#include "lampo/cache.hpp"
#include "lampo/core.hpp"
#include "lampo/digest.hpp"
#include "lampo/parallel.hpp"
#include "lampo/prompt_template.hpp"

namespace lampo {

namespace detail {

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// "passage a" as a whole token, case-insensitive.
inline bool mentions_passage(std::string_view lowered, char which) {
  static constexpr std::string_view kWord = "passage ";
  for (auto pos = lowered.find(kWord); pos != std::string_view::npos;
       pos = lowered.find(kWord, pos + 1)) {
    const auto letter = pos + kWord.size();
    if (letter >= lowered.size() || lowered[letter] != which) continue;
    const bool starts_word = pos == 0 || !is_word_char(lowered[pos - 1]);
    const bool ends_word = letter + 1 >= lowered.size() || !is_word_char(lowered[letter + 1]);
    if (starts_word && ends_word) return true;
  }
  return false;
}

}  // namespace detail

inline Preference parse_preference(std::string_view raw) {
  std::string lowered(raw);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const bool a = detail::mentions_passage(lowered, 'a');
  const bool b = detail::mentions_passage(lowered, 'b');
  if (a && !b) return Preference::kPrefersA;
  if (b && !a) return Preference::kPrefersB;
  return Preference::kInconclusive;
}

// Combines the two swapped calls: call 1 has x in slot A, call 2 has x in slot B.
inline ComparisonOutcome combine_swapped(Preference x_first, Preference x_second) {
  if (x_first == Preference::kPrefersA && x_second == Preference::kPrefersB) {
    return ComparisonOutcome::kWin;
  }
  if (x_first == Preference::kPrefersB && x_second == Preference::kPrefersA) {
    return ComparisonOutcome::kLoss;
  }
  return ComparisonOutcome::kTie;
}

inline TextItem as_item(const Demonstration& demo) { return {demo.text, demo.aspect}; }

class PreferenceOracle {
 public:
  PreferenceOracle(Backend& backend, PromptTemplate tmpl, ResponseCache& cache)
      : backend_(backend), template_(std::move(tmpl)), cache_(cache) {}

  const PromptTemplate& prompt_template() const noexcept { return template_; }
  Backend& backend() noexcept { return backend_; }
  ResponseCache& cache() noexcept { return cache_; }

  // Order-sensitive: (a, b) and (b, a) are different keys.
  std::string cache_key(const TextItem& a, const TextItem& b) const {
    std::string material = "compare\x1f" + template_.digest();
    for (const auto* item : {&a, &b}) {
      material += '\x1f';
      material += item->text;
      material += '\x1e';
      if (item->aspect) material += *item->aspect;
    }
    return sha256_hex(material);
  }

  // One preference call with `a` in slot A. Concurrent callers asking for the
  // same key share a single backend call.
  Preference query(const TextItem& a, const TextItem& b) {
    auto key = cache_key(a, b);
    if (auto hit = cache_.find(key)) return parse_preference(hit->raw);

    std::promise<std::string> promise;
    std::shared_future<std::string> pending;
    {
      std::lock_guard lock(pending_mutex_);
      if (auto it = pending_.find(key); it != pending_.end()) {
        pending = it->second;
      } else if (auto hit = cache_.find(key)) {
        return parse_preference(hit->raw);
      } else {
        pending_.emplace(key, promise.get_future().share());
      }
    }
    if (pending.valid()) return parse_preference(pending.get());

    const auto release = [&] {
      std::lock_guard lock(pending_mutex_);
      pending_.erase(key);
    };
    try {
      GenerationRequest request;
      request.kind = RequestKind::kCompare;
      request.prompt = render_prompt(template_, a, b);
      request.cache_key = key;
      request.item_a = a.text;
      request.item_b = b.text;
      auto raw = backend_.generate(request);
      const auto pref = parse_preference(raw);
      cache_.insert({key, "compare", raw, std::string(1, preference_code(pref)), 0});
      promise.set_value(std::move(raw));
      release();
      return pref;
    } catch (...) {
      promise.set_exception(std::current_exception());
      release();
      throw;
    }
  }

  bool is_cached(const TextItem& x, const TextItem& other) const {
    return cache_.contains(cache_key(x, other)) && cache_.contains(cache_key(other, x));
  }

  ComparisonOutcome compare_debiased(const TextItem& x, const TextItem& other) {
    try {
      const auto forward = query(x, other);
      const auto swapped = query(other, x);
      return combine_swapped(forward, swapped);
    } catch (const TransportError& e) {
      throw ComparisonUnavailable(cache_key(x, other), cache_key(other, x), e.what());
    }
  }

  ComparisonOutcome operator()(const TextItem& x, const Demonstration& demo) {
    return compare_debiased(x, as_item(demo));
  }

 private:
  Backend& backend_;
  PromptTemplate template_;
  ResponseCache& cache_;
  std::mutex pending_mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> pending_;
};

static_assert(DemonstrationComparator<PreferenceOracle>);

// A run stopped with comparisons still missing. Finished comparisons are
// already in the cache, so rerunning with resume picks up where this left off.
class IncompleteRun : public Error {
 public:
  IncompleteRun(std::size_t outstanding, const std::string& first_cause)
      : Error(ErrorKind::kTransport, std::to_string(outstanding) +
                                         " comparisons outstanding; first failure: " + first_cause),
        outstanding_(outstanding) {}

  std::size_t outstanding() const noexcept { return outstanding_; }

 private:
  std::size_t outstanding_;
};

// Scores every item against every demonstration. Comparisons run on a bounded
// pool; results are stored by (item, demo) index and folded afterwards, so the
// scores do not depend on completion order.
inline std::vector<std::int64_t> score_batch(const std::vector<TextItem>& items,
                                             const DemonstrationSet& demos,
                                             PreferenceOracle& oracle, std::size_t parallelism) {
  const auto n_demos = demos.size();
  std::vector<ComparisonOutcome> outcomes(items.size() * n_demos, ComparisonOutcome::kTie);
  std::vector<std::string> failures(outcomes.size());
  parallel_for(outcomes.size(), parallelism, [&](std::size_t idx) {
    const auto& item = items[idx / n_demos];
    const auto& demo = demos.items()[idx % n_demos];
    try {
      outcomes[idx] = oracle(item, demo);
    } catch (const ComparisonUnavailable& e) {
      failures[idx] = e.what();
    }
  });
  std::size_t outstanding = 0;
  const std::string* first = nullptr;
  for (const auto& failure : failures) {
    if (failure.empty()) continue;
    ++outstanding;
    if (first == nullptr) first = &failure;
  }
  if (outstanding > 0) throw IncompleteRun(outstanding, *first);

  std::vector<std::int64_t> scores(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    scores[i] = score_from_outcomes(
        std::span<const ComparisonOutcome>(outcomes).subspan(i * n_demos, n_demos), demos);
  }
  return scores;
}

}  // namespace lampo
