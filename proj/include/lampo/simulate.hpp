#pragma once

// Offline sweeps with the simulated backend: synthetic demonstrations and test
// items whose latent value equals their class index.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lampo/backend.hpp"
#include "lampo/cache.hpp"
#include "lampo/core.hpp"
#include "lampo/dataset.hpp"
#include "lampo/metrics.hpp"
#include "lampo/oracle.hpp"
#include "lampo/pipeline.hpp"
#include "lampo/probing.hpp"
#include "lampo/thresholding.hpp"

namespace lampo {

inline OrderedLabelSpace synthetic_label_space(std::size_t m) {
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < m; ++j) labels.push_back("level" + std::to_string(j));
  return OrderedLabelSpace(std::move(labels));
}

inline PromptTemplate synthetic_template() {
  return PromptTemplate("synthetic",
                        "Given two Passages, compare them on an ordinal scale.\n\n"
                        "Passage A: {item1}\n\nPassage B: {item2}\n\n"
                        "Which Passage ranks higher?\n\nOutput Passage A or Passage B:");
}

// k demonstrations per class with latent == class index.
inline DemonstrationSet synthetic_demonstrations(std::size_t m, std::size_t k, const std::string& tag = "") {
  std::vector<Demonstration> items;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      items.push_back({synthetic_text(static_cast<double>(j), tag + "demo-" + std::to_string(j) + "-" +
                                                                  std::to_string(i)),
                       j, std::nullopt});
    }
  }
  return DemonstrationSet(std::move(items), synthetic_label_space(m), k);
}

// n test items cycling through the classes.
inline std::vector<LabeledItem> synthetic_test_items(std::size_t m, std::size_t n, const std::string& tag = "") {
  std::vector<LabeledItem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i % m;
    out.push_back({{synthetic_text(static_cast<double>(j), tag + "test-" + std::to_string(i)), std::nullopt}, j});
  }
  return out;
}

struct SweepConfig {
  std::vector<std::size_t> ways{3};
  std::vector<std::size_t> shots{5};
  std::vector<double> noises{0.0, 0.2, 0.4};
  std::vector<ThresholdStrategy> strategies{ThresholdStrategy::kExpected, ThresholdStrategy::kSelfSupervised,
                                            ThresholdStrategy::kMixture};
  std::size_t trials = 100;
  std::size_t test_items = 60;
  std::size_t probing_size = kDefaultProbingSize;
  double tie_margin = 0.0;
  std::uint64_t seed = 0;
  std::size_t parallelism = kDefaultParallelism;
};

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  SweepConfig c;
  c.ways = j.value("ways", c.ways);
  c.shots = j.value("shots", c.shots);
  c.noises = j.value("noises", c.noises);
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : j["strategies"]) c.strategies.push_back(parse_strategy(s.get<std::string>()));
  }
  c.trials = j.value("trials", c.trials);
  c.test_items = j.value("test_items", c.test_items);
  c.probing_size = j.value("probing_size", c.probing_size);
  c.tie_margin = j.value("tie_margin", c.tie_margin);
  c.seed = j.value("seed", c.seed);
  c.parallelism = j.value("parallelism", c.parallelism);
  for (auto m : c.ways) {
    if (m < 2) throw ConfigError("sweep ways must be >= 2");
  }
  for (auto k : c.shots) {
    if (k < 1) throw ConfigError("sweep shots must be >= 1");
  }
  for (auto e : c.noises) {
    if (e < 0.0 || e > 1.0) throw ConfigError("sweep noise must be in [0, 1]");
  }
  if (c.trials == 0 || c.test_items == 0) throw ConfigError("sweep needs trials and test items");
  return c;
}

struct SweepCell {
  std::size_t ways = 0;
  std::size_t shots = 0;
  double noise = 0.0;
  ThresholdStrategy strategy = ThresholdStrategy::kExpected;
  std::size_t trials = 0;
  double mean_accuracy = 0.0;
};

inline nlohmann::json to_json(const SweepCell& c) {
  return {{"ways", c.ways},         {"shots", c.shots},   {"noise", c.noise},
          {"strategy", strategy_name(c.strategy)}, {"trials", c.trials},
          {"mean_accuracy", c.mean_accuracy}};
}

// One trial: fresh simulated backend, scores computed once and shared by
// every strategy.
inline std::vector<double> simulate_trial(std::size_t m, std::size_t k, double noise, std::uint64_t trial_seed,
                                          const SweepConfig& cfg) {
  SimulatedConfig sim;
  sim.noise = noise;
  sim.tie_margin = cfg.tie_margin;
  sim.seed = trial_seed;
  SimulatedBackend backend(sim);
  ResponseCache cache;
  const auto tag = std::to_string(trial_seed) + ":";
  const auto demos = synthetic_demonstrations(m, k, tag);
  const auto test = synthetic_test_items(m, cfg.test_items, tag);
  std::vector<TextItem> items;
  std::vector<std::size_t> golds;
  for (const auto& t : test) {
    items.push_back(t.item);
    golds.push_back(t.gold);
  }
  PreferenceOracle oracle(backend, synthetic_template(), cache);
  const auto scores = score_batch(items, demos, oracle, cfg.parallelism);

  bool need_probing = false;
  for (auto s : cfg.strategies) need_probing = need_probing || needs_probing(s);
  std::optional<ProbingSet> probing;
  if (need_probing) {
    probing = construct_probing_set(demos, backend, cfg.probing_size, kDefaultProbingOrderings, trial_seed);
  }
  const auto calibration =
      calibrate_thresholds(demos, oracle, probing ? &*probing : nullptr, SearchConfig{}, cfg.parallelism);

  const MetricSpec accuracy{MetricKind::kAccuracy, 0};
  std::vector<double> out;
  for (auto s : cfg.strategies) {
    out.push_back(compute_metric(accuracy, decide_all(scores, calibration.select(s)), golds, m));
  }
  return out;
}

inline std::vector<SweepCell> run_sweep(const SweepConfig& cfg) {
  std::vector<SweepCell> cells;
  for (auto m : cfg.ways) {
    for (auto k : cfg.shots) {
      for (auto noise : cfg.noises) {
        std::vector<double> totals(cfg.strategies.size(), 0.0);
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          // Trial seeds depend on (m, k, trial) only, so cells at different noise
          // levels share demonstrations and differ only in the flips.
          const auto trial_seed = hash_combine(hash_combine(cfg.seed, m * 1000 + k), trial);
          const auto acc = simulate_trial(m, k, noise, trial_seed, cfg);
          for (std::size_t s = 0; s < acc.size(); ++s) totals[s] += acc[s];
        }
        for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
          cells.push_back({m, k, noise, cfg.strategies[s], cfg.trials,
                           totals[s] / static_cast<double>(cfg.trials)});
        }
      }
    }
  }
  return cells;
}

}  // namespace lampo
