#include "lampo/core.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "lampo/backend.hpp"
#include "lampo/cache.hpp"
#include "lampo/oracle.hpp"
#include "lampo/simulate.hpp"
#include "lampo/thresholding.hpp"

namespace lampo {
namespace {

OrderedLabelSpace three_way() { return OrderedLabelSpace({"negative", "neutral", "positive"}); }

TEST(LabelSpace, IndexFollowsOrdinalOrder) {
  EXPECT_EQ(label_index("neutral", three_way()), 1u);
  EXPECT_EQ(label_index("negative", three_way()), 0u);
  EXPECT_EQ(label_index("hate", OrderedLabelSpace({"non-hate", "hate"})), 1u);
}

TEST(LabelSpace, UnknownLabelNamesTheString) {
  try {
    label_index("happy", three_way());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("happy"), std::string::npos);
  }
}

TEST(LabelSpace, RejectsDegenerateSpaces) {
  EXPECT_THROW(OrderedLabelSpace({"only"}), ValidationError);
  EXPECT_THROW(OrderedLabelSpace({"a", "b", "a"}), ValidationError);
}

TEST(DemonstrationSet, ValidatesDeclaredBalance) {
  std::vector<Demonstration> items = {{"a", 0, {}}, {"b", 1, {}}, {"c", 2, {}}};
  EXPECT_NO_THROW(DemonstrationSet(items, three_way(), 1));
  items.push_back({"d", 2, {}});
  EXPECT_THROW(DemonstrationSet(items, three_way(), 1), ValidationError);
  EXPECT_NO_THROW(DemonstrationSet(items, three_way()));  // unbalanced is fine undeclared
}

TEST(DemonstrationSet, RejectsBadItems) {
  EXPECT_THROW(DemonstrationSet({}, three_way()), ValidationError);
  EXPECT_THROW(DemonstrationSet({{"", 0, {}}}, three_way()), ValidationError);
  EXPECT_THROW(DemonstrationSet({{"x", 3, {}}}, three_way()), ValidationError);
}

TEST(LocalScore, AddsOutcomeToLabelValue) {
  EXPECT_EQ(local_score(ComparisonOutcome::kWin, 0), 1);
  EXPECT_EQ(local_score(ComparisonOutcome::kTie, 2), 2);
  EXPECT_EQ(local_score(ComparisonOutcome::kLoss, 1), 0);
}

// Comparator answering from a fixed table keyed by demonstration text.
struct ScriptedComparator {
  std::map<std::string, ComparisonOutcome> answers;
  ComparisonOutcome operator()(const TextItem&, const Demonstration& demo) const {
    auto it = answers.find(demo.text);
    return it == answers.end() ? ComparisonOutcome::kTie : it->second;
  }
};

TEST(ScoreInstance, RunningExampleScoresSixteen) {
  // 5 demos per class over 3 classes. Beat all negatives (+5 on 0s),
  // tie neutrals (5), lose to four positives, tie one (4*1 + 2) = 5 + 5 + 6 = 16.
  std::vector<Demonstration> items;
  ScriptedComparator oracle;
  for (std::size_t j = 0; j < 3; ++j) {
    for (int i = 0; i < 5; ++i) {
      const auto text = "d" + std::to_string(j) + std::to_string(i);
      items.push_back({text, j, {}});
      if (j == 0) oracle.answers[text] = ComparisonOutcome::kWin;
      if (j == 2 && i < 4) oracle.answers[text] = ComparisonOutcome::kLoss;
    }
  }
  DemonstrationSet demos(items, three_way(), 5);
  EXPECT_EQ(score_instance({"x", {}}, demos, oracle), 16);
}

TEST(ScoreInstance, AllTiesSumLabelValues) {
  DemonstrationSet demos({{"a", 0, {}}, {"b", 1, {}}, {"c", 2, {}}}, three_way());
  EXPECT_EQ(score_instance({"x", {}}, demos, ScriptedComparator{}), 3);
}

// Brute-force re-summation, outside the scoring path, for random 2-shot 4-way
// sets scored against the simulated backend.
TEST(ScoreInstance, MatchesIndependentResummation) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> latent(0.0, 3.0);
  const auto space = synthetic_label_space(4);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Demonstration> items;
    for (std::size_t j = 0; j < 4; ++j) {
      for (int i = 0; i < 2; ++i) items.push_back({synthetic_text(latent(rng), "d" + std::to_string(i)), j, {}});
    }
    DemonstrationSet demos(items, space, 2);
    SimulatedBackend backend({.noise = 0.3, .seed = static_cast<std::uint64_t>(trial)});
    ResponseCache cache;
    PreferenceOracle oracle(backend, synthetic_template(), cache);
    const TextItem x{synthetic_text(latent(rng), "x"), {}};

    std::int64_t expected = 0;
    for (const auto& d : items) {
      const auto first = simulated_compare(*extract_latent(x.text), *extract_latent(d.text), backend.config(),
                                           compare_nonce(x.text, d.text));
      const auto second = simulated_compare(*extract_latent(d.text), *extract_latent(x.text), backend.config(),
                                            compare_nonce(d.text, x.text));
      int f = 0;
      if (first == Preference::kPrefersA && second == Preference::kPrefersB) f = 1;
      if (first == Preference::kPrefersB && second == Preference::kPrefersA) f = -1;
      expected += static_cast<std::int64_t>(d.label) + f;
    }
    EXPECT_EQ(score_instance(x, demos, oracle), expected) << "trial " << trial;
  }
}

TEST(ScoreInstance, BoundedAndPermutationInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> latent(0.0, 4.0);
  const auto space = synthetic_label_space(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Demonstration> items;
    std::uniform_int_distribution<std::size_t> label(0, 4);
    for (int i = 0; i < 12; ++i) items.push_back({synthetic_text(latent(rng), std::to_string(i)), label(rng), {}});
    SimulatedBackend backend({.noise = 0.25, .seed = 99});
    ResponseCache cache;
    PreferenceOracle oracle(backend, synthetic_template(), cache);
    const TextItem x{synthetic_text(latent(rng), "x"), {}};

    DemonstrationSet demos(items, space);
    const auto score = score_instance(x, demos, oracle);
    const auto labels = demos.labels();
    const auto range = attainable_score_range(labels);
    EXPECT_GE(score, range.lo);
    EXPECT_LE(score, range.hi);

    std::shuffle(items.begin(), items.end(), rng);
    EXPECT_EQ(score_instance(x, DemonstrationSet(items, space), oracle), score);
  }
}

TEST(ScoreInstance, NoiseFreeScoresEqualExpectedScores) {
  for (std::size_t m = 2; m <= 5; ++m) {
    for (std::size_t k : {1u, 5u, 10u}) {
      const auto demos = synthetic_demonstrations(m, k);
      SimulatedBackend backend;
      ResponseCache cache;
      PreferenceOracle oracle(backend, synthetic_template(), cache);
      const auto expected = expected_scores(demos.labels(), m);
      for (std::size_t j = 0; j < m; ++j) {
        const TextItem x{synthetic_text(static_cast<double>(j), "probe"), {}};
        EXPECT_EQ(score_instance(x, demos, oracle), expected[j]) << "m=" << m << " k=" << k << " j=" << j;
      }
    }
  }
}

}  // namespace
}  // namespace lampo
