#include "lampo/baselines.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "lampo/simulate.hpp"

namespace lampo {
namespace {

class FixedReplyBackend : public Backend {
 public:
  explicit FixedReplyBackend(std::string reply, std::size_t limit = 0) : reply_(std::move(reply)), limit_(limit) {}
  std::string id() const override { return "fixed"; }
  std::size_t context_limit_tokens() const override { return limit_; }

 protected:
  std::string do_generate(const GenerationRequest&) override { return reply_; }

 private:
  std::string reply_;
  std::size_t limit_;
};

// Label probabilities from a table keyed by the query text.
class TableProbabilityBackend : public Backend {
 public:
  std::map<std::string, std::vector<double>> table;
  std::string id() const override { return "table"; }
  std::optional<std::vector<double>> label_probabilities(const GenerationRequest& r) override {
    return table.at(r.query);
  }

 protected:
  std::string do_generate(const GenerationRequest&) override { return {}; }
};

ProbingSet spread_probes(std::size_t m, std::size_t per_class) {
  ProbingSet probing;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < per_class; ++i) {
      probing.texts.push_back(synthetic_text(static_cast<double>(j), "probe-" + std::to_string(j) + "-" + std::to_string(i)));
    }
  }
  return probing;
}

TEST(IclPrompt, Layout) {
  const auto demos = synthetic_demonstrations(2, 1);
  const auto ctx = make_context(demos, {1, 0}, 3, "Pick one.");
  const auto prompt = render_icl_prompt(ctx, {"query text", std::nullopt}, demos.label_space());
  EXPECT_EQ(prompt, "Pick one.\ninput:" + demos.items()[1].text + " type:level1\ninput:" + demos.items()[0].text +
                        " type:level0\ninput:query text type:");
  EXPECT_EQ(default_instruction(OrderedLabelSpace({"no", "yes"})),
            "Classify each input with one label from ['no', 'yes'].");
}

TEST(IclPredict, NoiseFreeSimulatorEchoesLatentLabel) {
  const auto demos = synthetic_demonstrations(3, 2);
  SimulatedBackend backend;
  const auto ctx = identity_context(demos, default_instruction(demos.label_space()));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(icl_predict(ctx, {synthetic_text(static_cast<double>(j), "q"), std::nullopt}, backend,
                          demos.label_space()),
              j);
  }
}

TEST(MatchLabel, LongestMatchWins) {
  const OrderedLabelSpace space({"very negative", "negative", "neutral", "positive", "very positive"});
  EXPECT_EQ(match_label("Very Positive", space), 4u);
  EXPECT_EQ(match_label(" negative\n", space), 1u);
  EXPECT_EQ(match_label("type: very negative.", space), 0u);
  EXPECT_EQ(match_label("no idea", space), std::nullopt);
}

TEST(IclPredict, UnparseableAndCached) {
  const auto demos = synthetic_demonstrations(2, 1);
  const auto ctx = identity_context(demos, "");
  FixedReplyBackend junk("maybe?");
  try {
    icl_predict(ctx, {"x", std::nullopt}, junk, demos.label_space());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnparseable);
  }
  FixedReplyBackend good("level1");
  ResponseCache cache;
  EXPECT_EQ(icl_predict(ctx, {"x", std::nullopt}, good, demos.label_space(), &cache), 1u);
  EXPECT_EQ(icl_predict(ctx, {"x", std::nullopt}, good, demos.label_space(), &cache), 1u);
  EXPECT_EQ(good.counters().total(), 1u);
}

TEST(IclPredict, ContextOverflowIsReported) {
  const auto demos = synthetic_demonstrations(3, 5);
  FixedReplyBackend tiny("level0", 20);
  try {
    icl_predict(identity_context(demos, ""), {"x", std::nullopt}, tiny, demos.label_space());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContextOverflow);
  }
  EXPECT_EQ(tiny.counters().total(), 0u);
}

TEST(ContextualCalibration, UniformContentFreeKeepsArgmax) {
  const ProbabilityVector p({0.2, 0.5, 0.3});
  const auto q = contextual_calibrate(p, ProbabilityVector({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(q[j], p[j], 1e-12);
  EXPECT_EQ(q.argmax(), 1u);
}

TEST(ContextualCalibration, ReweightingFlipsPrediction) {
  const ProbabilityVector p({0.6, 0.4});
  const auto q = contextual_calibrate(p, ProbabilityVector({0.8, 0.2}));
  // raw ratios 0.75 and 2.0
  EXPECT_NEAR(q[0], 0.75 / 2.75, 1e-12);
  EXPECT_NEAR(q[1], 2.0 / 2.75, 1e-12);
  EXPECT_EQ(p.argmax(), 0u);
  EXPECT_EQ(q.argmax(), 1u);
}

TEST(ContextualCalibration, InputEqualToContentFreeIsUniform) {
  const ProbabilityVector p({0.7, 0.2, 0.1});
  const auto q = contextual_calibrate(p, p);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(q[j], 1.0 / 3, 1e-12);
}

TEST(ContextualCalibration, Errors) {
  EXPECT_THROW(contextual_calibrate(ProbabilityVector({0.5, 0.5}), ProbabilityVector({1.0, 0.0})), CalibrationError);
  EXPECT_THROW(contextual_calibrate(ProbabilityVector({0.5, 0.5}), ProbabilityVector({0.2, 0.3, 0.5})),
               ValidationError);
  EXPECT_THROW(ProbabilityVector({0.5, 0.6}), ValidationError);
  EXPECT_THROW(ProbabilityVector({-0.1, 1.1}), ValidationError);
  EXPECT_THROW(ProbabilityVector({}), ValidationError);
}

TEST(CcPredict, UsesContentFreeQuery) {
  const auto demos = synthetic_demonstrations(2, 1);
  TableProbabilityBackend backend;
  backend.table["N/A"] = {0.8, 0.2};
  backend.table["x"] = {0.6, 0.4};
  EXPECT_EQ(cc_predict(identity_context(demos, ""), {"x", std::nullopt}, backend, demos.label_space()), 1u);
}

TEST(CcPredict, GenerationOnlyBackendIsUnsupported) {
  const auto demos = synthetic_demonstrations(2, 1);
  SimulatedBackend backend({.supports_probabilities = false});
  try {
    cc_predict(identity_context(demos, ""), {synthetic_text(0.0), std::nullopt}, backend, demos.label_space());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupported);
  }
}

TEST(SampleOrderings, EnumeratesSmallSetsAndSamplesLargeOnes) {
  const auto all = sample_orderings(3, 10, 0);
  EXPECT_EQ(all.size(), 6u);
  EXPECT_EQ(std::set<std::vector<std::size_t>>(all.begin(), all.end()).size(), 6u);
  const auto some = sample_orderings(6, 10, 4);
  EXPECT_EQ(some.size(), 10u);
  EXPECT_EQ(std::set<std::vector<std::size_t>>(some.begin(), some.end()).size(), 10u);
  EXPECT_EQ(sample_orderings(6, 10, 4), some);
}

TEST(GlobalE, FindsPlantedOrdering) {
  const auto demos = synthetic_demonstrations(3, 1);
  const std::vector<std::size_t> planted = {2, 0, 1};
  SimulatedBackend backend({.planted_ordering = planted});
  const auto selection = globale_select_ordering(demos, 10, spread_probes(3, 4), backend, 0, "");
  EXPECT_EQ(selection.context.ordering, planted);
  EXPECT_NEAR(selection.entropy, std::log(3.0), 1e-12);
  EXPECT_EQ(selection.candidates.size(), 6u);
  for (const auto& c : selection.candidates) {
    if (c.ordering != planted) {
      EXPECT_EQ(c.entropy, 0.0);
    }
  }
}

TEST(GlobalE, SingleCandidateAndTies) {
  const auto demos = synthetic_demonstrations(3, 1);
  SimulatedBackend backend;
  const auto one = globale_select_ordering(demos, 1, spread_probes(3, 2), backend, 5, "");
  EXPECT_EQ(one.candidates.size(), 1u);
  EXPECT_EQ(one.context.ordering_id, 0u);
  // Without a planted ordering every candidate scores the same entropy.
  const auto tied = globale_select_ordering(demos, 10, spread_probes(3, 2), backend, 5, "");
  EXPECT_EQ(tied.context.ordering_id, 0u);
  EXPECT_EQ(tied.context.ordering, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(GlobalE, AllCandidatesOverflow) {
  const auto demos = synthetic_demonstrations(3, 2);
  SimulatedBackend backend({.context_limit_tokens = 10});
  try {
    globale_select_ordering(demos, 4, spread_probes(3, 1), backend, 0, "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
}

TEST(GlobalE, ParallelismDoesNotChangeSelection) {
  const auto demos = synthetic_demonstrations(3, 1);
  SimulatedBackend a({.noise = 0.3, .seed = 11}), b({.noise = 0.3, .seed = 11});
  const auto probes = spread_probes(3, 5);
  const auto s1 = globale_select_ordering(demos, 6, probes, a, 0, "", nullptr, 1);
  const auto s8 = globale_select_ordering(demos, 6, probes, b, 0, "", nullptr, 8);
  EXPECT_EQ(s1.context.ordering, s8.context.ordering);
  EXPECT_EQ(s1.entropy, s8.entropy);
}

}  // namespace
}  // namespace lampo
