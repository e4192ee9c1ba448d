#include "lampo/oracle.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>
#include <thread>

#include "lampo/backend.hpp"
#include "lampo/cache.hpp"
#include "lampo/simulate.hpp"
#include "lampo/tasks.hpp"

namespace lampo {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "lampo_oracle_test";
  fs::create_directories(dir);
  auto p = dir / name;
  fs::remove(p);
  return p;
}

TEST(RenderPrompt, HateTemplateLayout) {
  const auto prompt = render_prompt(find_task("hate").prompt_template(), {"t1", {}}, {"t2", {}});
  EXPECT_EQ(prompt,
            "Given two Passages, compare their sentiments with labels from ['non-hate', 'hate'].\n\n"
            "Passage A: t1\n\nPassage B: t2\n\n"
            "Which Passage is more hateful in terms of its sentiment?\n\n"
            "Output Passage A or Passage B:");
}

TEST(RenderPrompt, IdenticalItemsFillBothSlots) {
  const auto prompt = render_prompt(find_task("twitter").prompt_template(), {"same", {}}, {"same", {}});
  EXPECT_NE(prompt.find("Passage A: same\n"), std::string::npos);
  EXPECT_NE(prompt.find("Passage B: same\n"), std::string::npos);
}

TEST(RenderPrompt, AspectTemplate) {
  const auto tmpl = find_task("lap14").prompt_template();
  ASSERT_TRUE(tmpl.aspect_based());
  const auto prompt = render_prompt(tmpl, {"long life", "battery"}, {"too dim", "screen"});
  EXPECT_NE(prompt.find("Passage A: long life (sentiment towards battery),"), std::string::npos);
  EXPECT_NE(prompt.find("Passage B: too dim (sentiment towards screen)"), std::string::npos);
  EXPECT_THROW(render_prompt(tmpl, {"a", {}}, {"b", "screen"}), ValidationError);
}

TEST(RenderPrompt, PlaceholderTextInsideItemsIsNotExpanded) {
  const auto prompt = render_prompt(find_task("hate").prompt_template(), {"{item2}", {}}, {"real", {}});
  EXPECT_NE(prompt.find("Passage A: {item2}\n"), std::string::npos);
  EXPECT_NE(prompt.find("Passage B: real\n"), std::string::npos);
}

TEST(PromptTemplate, ValidatesPlaceholders) {
  EXPECT_THROW(PromptTemplate("t", "only {item1}"), ConfigError);
  EXPECT_THROW(PromptTemplate("t", "{item1} {item1} {item2}"), ConfigError);
  EXPECT_THROW(PromptTemplate("t", "{item1} {item2} {aspect1}"), ConfigError);
  EXPECT_FALSE(PromptTemplate("t", "{item1} {item2}").aspect_based());
}

TEST(BuiltinTasks, SevenTasksWithOrderedLabels) {
  EXPECT_EQ(builtin_tasks().size(), 7u);
  EXPECT_EQ(find_task("sst5").labels.front(), "very negative");
  EXPECT_EQ(find_task("irony").metric.kind, MetricKind::kF1OfLabel);
  EXPECT_EQ(find_task("irony").metric.label, 1u);
  EXPECT_EQ(find_task("offensive").metric.kind, MetricKind::kMacroF1);
  EXPECT_THROW(find_task("imdb"), ConfigError);
  for (const auto& task : builtin_tasks()) EXPECT_NO_THROW(task.prompt_template());
}

// Fixture checked by hand against the rule: A iff "passage a" occurs and
// "passage b" does not, case-insensitively; symmetric for B.
TEST(ParsePreference, Fixture) {
  const std::vector<std::pair<std::string, Preference>> cases = {
      {"Passage A", Preference::kPrefersA},
      {"Passage B", Preference::kPrefersB},
      {"  the answer is passage a.", Preference::kPrefersA},
      {"PASSAGE B", Preference::kPrefersB},
      {"passage b is more positive", Preference::kPrefersB},
      {"Output: Passage A", Preference::kPrefersA},
      {"Passage A:", Preference::kPrefersA},
      {"(Passage B)", Preference::kPrefersB},
      {"Passage A\n", Preference::kPrefersA},
      {"I think Passage   A", Preference::kInconclusive},
      {"Both passages are equally hateful: Passage A, Passage B", Preference::kInconclusive},
      {"Passage A or Passage B", Preference::kInconclusive},
      {"", Preference::kInconclusive},
      {"Neither", Preference::kInconclusive},
      {"A", Preference::kInconclusive},
      {"passages", Preference::kInconclusive},
      {"Passage C", Preference::kInconclusive},
      {"The passage about cats", Preference::kInconclusive},
      {"passage a.passage a", Preference::kPrefersA},
      {"Answer -> passage b!", Preference::kPrefersB},
  };
  ASSERT_EQ(cases.size(), 20u);
  for (const auto& [raw, expected] : cases) EXPECT_EQ(parse_preference(raw), expected) << '"' << raw << '"';
}

TEST(SimulatedCompare, Examples) {
  SimulatedConfig clean;
  EXPECT_EQ(simulated_compare(2.0, 0.0, clean, 1), Preference::kPrefersA);
  EXPECT_EQ(simulated_compare(1.0, 1.0, clean, 1), Preference::kInconclusive);
  SimulatedConfig flip{.noise = 1.0};
  EXPECT_EQ(simulated_compare(2.0, 0.0, flip, 1), Preference::kPrefersB);
  SimulatedConfig margin{.tie_margin = 0.5};
  EXPECT_EQ(simulated_compare(1.4, 1.0, margin, 1), Preference::kInconclusive);
}

TEST(SimulatedCompare, NoiseRateIsRoughlyEpsilon) {
  SimulatedConfig cfg{.noise = 0.3, .seed = 5};
  int flips = 0;
  for (std::uint64_t n = 0; n < 20000; ++n) flips += simulated_compare(1.0, 0.0, cfg, n) == Preference::kPrefersB;
  EXPECT_NEAR(flips / 20000.0, 0.3, 0.02);
}

// Backend that returns scripted raw answers keyed by (item_a, item_b).
class ScriptedBackend : public Backend {
 public:
  std::map<std::pair<std::string, std::string>, std::string> answers;
  std::string id() const override { return "scripted"; }

 protected:
  std::string do_generate(const GenerationRequest& r) override {
    auto it = answers.find({r.item_a, r.item_b});
    if (it == answers.end()) throw TransportError("no scripted answer");
    return it->second;
  }
};

TEST(CompareDebiased, OutcomeTable) {
  ScriptedBackend backend;
  ResponseCache cache;
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  const TextItem x{"x", {}}, y{"y", {}};
  const auto check = [&](std::string first, std::string second, ComparisonOutcome expected) {
    backend.answers[{"x", "y"}] = first;
    backend.answers[{"y", "x"}] = second;
    ResponseCache fresh;
    PreferenceOracle o(backend, synthetic_template(), fresh);
    EXPECT_EQ(o.compare_debiased(x, y), expected) << first << " / " << second;
  };
  check("Passage A", "Passage B", ComparisonOutcome::kWin);
  check("Passage B", "Passage A", ComparisonOutcome::kLoss);
  check("Passage A", "Passage A", ComparisonOutcome::kTie);
  check("Passage B", "Passage B", ComparisonOutcome::kTie);
  check("Passage A", "unsure", ComparisonOutcome::kTie);
  check("", "", ComparisonOutcome::kTie);
}

TEST(CompareDebiased, TransportFailureCarriesBothDigests) {
  ScriptedBackend backend;
  ResponseCache cache;
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  const TextItem x{"x", {}}, y{"y", {}};
  try {
    oracle.compare_debiased(x, y);
    FAIL() << "expected ComparisonUnavailable";
  } catch (const ComparisonUnavailable& e) {
    EXPECT_EQ(e.forward_digest(), oracle.cache_key(x, y));
    EXPECT_EQ(e.swapped_digest(), oracle.cache_key(y, x));
    EXPECT_EQ(e.kind(), ErrorKind::kTransport);
  }
}

TEST(CompareDebiased, AntisymmetricUnderDeterministicNoise) {
  SimulatedBackend backend({.noise = 0.3, .tie_margin = 0.05, .seed = 17});
  ResponseCache cache;
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> latent(0.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const TextItem x{synthetic_text(latent(rng), "x" + std::to_string(i)), {}};
    const TextItem y{synthetic_text(latent(rng), "y" + std::to_string(i)), {}};
    ASSERT_EQ(oracle.compare_debiased(x, y), -oracle.compare_debiased(y, x)) << i;
  }
}

TEST(CompareDebiased, CacheKeyIsOrderAndTemplateSensitive) {
  SimulatedBackend backend;
  ResponseCache cache;
  PreferenceOracle a(backend, synthetic_template(), cache);
  PreferenceOracle b(backend, find_task("twitter").prompt_template(), cache);
  const TextItem x{"x", {}}, y{"y", {}};
  EXPECT_NE(a.cache_key(x, y), a.cache_key(y, x));
  EXPECT_NE(a.cache_key(x, y), b.cache_key(x, y));
  EXPECT_NE(a.cache_key({"x", "p"}, y), a.cache_key(x, y));
}

TEST(CompareDebiased, EachPromptHitsBackendOnce) {
  SimulatedBackend backend;
  ResponseCache cache;
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  const TextItem x{synthetic_text(1.0, "x"), {}}, y{synthetic_text(2.0, "y"), {}};
  EXPECT_EQ(oracle.compare_debiased(x, y), ComparisonOutcome::kLoss);
  EXPECT_EQ(oracle.compare_debiased(y, x), ComparisonOutcome::kWin);
  EXPECT_EQ(backend.counters().compare, 2u);
}

TEST(CompareDebiased, ConcurrentCallersShareOneBackendCall) {
  SimulatedBackend backend;
  ResponseCache cache;
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  const TextItem x{synthetic_text(1.0, "x"), {}}, y{synthetic_text(2.0, "y"), {}};
  std::vector<std::jthread> threads;
  for (int t = 0; t < 16; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) EXPECT_EQ(oracle.compare_debiased(x, y), ComparisonOutcome::kLoss);
    });
  }
  threads.clear();
  EXPECT_EQ(backend.counters().compare, 2u);
}

TEST(ScoreBatch, IndependentOfParallelism) {
  const auto demos = synthetic_demonstrations(4, 5);
  std::vector<TextItem> items;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> latent(0.0, 3.0);
  for (int i = 0; i < 40; ++i) items.push_back({synthetic_text(latent(rng), std::to_string(i)), {}});
  std::vector<std::int64_t> reference;
  for (std::size_t parallelism : {1u, 3u, 8u, 32u}) {
    SimulatedBackend backend({.noise = 0.2, .seed = 4});
    ResponseCache cache;
    PreferenceOracle oracle(backend, synthetic_template(), cache);
    const auto scores = score_batch(items, demos, oracle, parallelism);
    if (reference.empty()) reference = scores;
    EXPECT_EQ(scores, reference) << parallelism;
    EXPECT_EQ(backend.counters().compare, 2 * items.size() * demos.size());
  }
}

TEST(ScoreBatch, ReportsOutstandingComparisons) {
  ScriptedBackend backend;
  backend.answers[{"x", "d0"}] = "Passage A";
  backend.answers[{"d0", "x"}] = "Passage B";
  ResponseCache cache;
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  DemonstrationSet demos({{"d0", 0, {}}, {"d1", 1, {}}, {"d2", 1, {}}}, synthetic_label_space(2));
  try {
    score_batch({{"x", {}}}, demos, oracle, 2);
    FAIL() << "expected IncompleteRun";
  } catch (const IncompleteRun& e) {
    EXPECT_EQ(e.outstanding(), 2u);
  }
}

TEST(ResponseCache, PersistsAndResumes) {
  const auto path = temp_path("cache.jsonl");
  const TextItem x{synthetic_text(1.0, "x"), {}}, y{synthetic_text(2.0, "y"), {}};
  {
    SimulatedBackend backend;
    ResponseCache cache(path, false);
    PreferenceOracle oracle(backend, synthetic_template(), cache);
    oracle.compare_debiased(x, y);
  }
  {
    SimulatedBackend backend;
    ResponseCache cache(path, true);
    EXPECT_EQ(cache.size(), 2u);
    PreferenceOracle oracle(backend, synthetic_template(), cache);
    EXPECT_EQ(oracle.compare_debiased(x, y), ComparisonOutcome::kLoss);
    EXPECT_EQ(backend.counters().total(), 0u);
  }
  {
    ResponseCache cache(path, false);
    EXPECT_EQ(cache.size(), 0u);
  }
}

TEST(ResponseCache, SkipsTruncatedLinesAndKeepsLatest) {
  const auto path = temp_path("partial.jsonl");
  {
    std::ofstream out(path);
    out << R"({"key":"k1","kind":"compare","raw":"Passage A","parsed":"A","ts":1})" << '\n';
    out << R"({"key":"k1","kind":"compare","raw":"Passage B","parsed":"B","ts":2})" << '\n';
    out << R"({"key":"k2","kind":"compa)";
  }
  ResponseCache cache(path);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(cache.malformed_lines(), 1u);
  EXPECT_EQ(cache.find("k1")->raw, "Passage B");
}

TEST(ResponseCache, PruneCompactsAndFilters) {
  const auto path = temp_path("prune.jsonl");
  {
    std::ofstream out(path);
    out << R"({"key":"k1","kind":"compare","raw":"Passage A","parsed":"A","ts":1})" << '\n';
    out << R"({"key":"k1","kind":"compare","raw":"Passage B","parsed":"B","ts":2})" << '\n';
    out << R"({"key":"k2","kind":"compare","raw":"meh","parsed":"I","ts":3})" << '\n';
    out << "garbage\n";
  }
  const auto stats = prune_cache_file(path, [](const CacheEntry& e) { return e.parsed == "I"; });
  EXPECT_EQ(stats.kept, 1u);
  EXPECT_EQ(stats.removed, 3u);
  const auto scan = scan_cache_file(path);
  ASSERT_EQ(scan.entries.size(), 1u);
  EXPECT_EQ(scan.entries[0].raw, "Passage B");
}

TEST(ReplayBackend, AnswersFromRecordedCache) {
  const auto path = temp_path("replay.jsonl");
  const TextItem x{synthetic_text(3.0, "x"), {}}, y{synthetic_text(2.0, "y"), {}};
  {
    SimulatedBackend backend;
    ResponseCache cache(path, false);
    PreferenceOracle oracle(backend, synthetic_template(), cache);
    oracle.compare_debiased(x, y);
  }
  ReplayBackend replay(path, true);
  ResponseCache fresh;
  PreferenceOracle oracle(replay, synthetic_template(), fresh);
  EXPECT_EQ(oracle.compare_debiased(x, y), ComparisonOutcome::kWin);
  EXPECT_THROW(oracle.compare_debiased(x, {"unseen", {}}), ComparisonUnavailable);

  ReplayBackend lenient(path, false);
  ResponseCache fresh2;
  PreferenceOracle lenient_oracle(lenient, synthetic_template(), fresh2);
  EXPECT_EQ(lenient_oracle.compare_debiased(x, {"unseen", {}}), ComparisonOutcome::kTie);
}

TEST(ExtractLatent, ParsesInlineValue) {
  EXPECT_DOUBLE_EQ(*extract_latent("synthetic latent=1.7 probe"), 1.7);
  EXPECT_DOUBLE_EQ(*extract_latent(synthetic_text(2.25)), 2.25);
  EXPECT_FALSE(extract_latent("no latent here"));
  EXPECT_FALSE(extract_latent("latent=abc"));
}

}  // namespace
}  // namespace lampo
