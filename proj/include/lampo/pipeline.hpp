#pragma once

// End-to-end runs: scoring, calibration and decision for LAMPO, the pointwise
// baselines, and the job manifest that drives them from the CLI.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lampo/backend.hpp"
#include "lampo/baselines.hpp"
#include "lampo/cache.hpp"
#include "lampo/core.hpp"
#include "lampo/dataset.hpp"
#include "lampo/http_backend.hpp"
#include "lampo/metrics.hpp"
#include "lampo/oracle.hpp"
#include "lampo/probing.hpp"
#include "lampo/report.hpp"
#include "lampo/tasks.hpp"
#include "lampo/thresholding.hpp"

namespace lampo {

inline constexpr std::size_t kDefaultParallelism = 8;
inline constexpr std::size_t kDefaultGlobalECandidates = 10;

enum class ThresholdStrategy { kExpected, kSelfSupervised, kMixture };

inline const char* strategy_name(ThresholdStrategy s) {
  switch (s) {
    case ThresholdStrategy::kExpected: return "expected";
    case ThresholdStrategy::kSelfSupervised: return "self_supervised";
    case ThresholdStrategy::kMixture: return "mixture";
  }
  return "unknown";
}

inline ThresholdStrategy parse_strategy(std::string_view name) {
  if (name == "expected") return ThresholdStrategy::kExpected;
  if (name == "self_supervised") return ThresholdStrategy::kSelfSupervised;
  if (name == "mixture") return ThresholdStrategy::kMixture;
  throw ConfigError("unknown threshold strategy '" + std::string(name) + "'");
}

inline bool needs_probing(ThresholdStrategy s) { return s != ThresholdStrategy::kExpected; }

inline nlohmann::json to_json(const Thresholds& t) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& cut : t.cuts()) out.push_back({{"exact", to_string(cut)}, {"value", to_double(cut)}});
  return out;
}

struct SeedCalibration {
  std::vector<std::int64_t> expected_scores;
  Thresholds expected;
  std::optional<CalibrationResult> self_supervised;
  std::optional<Thresholds> mixture;
  std::vector<std::int64_t> probing_scores;
  std::optional<std::string> warning;

  const Thresholds& select(ThresholdStrategy s) const {
    switch (s) {
      case ThresholdStrategy::kExpected: return expected;
      case ThresholdStrategy::kSelfSupervised:
        if (!self_supervised) throw CalibrationError("self-supervised thresholds are unavailable");
        return self_supervised->thresholds;
      case ThresholdStrategy::kMixture:
        if (!mixture) throw CalibrationError("mixture thresholds are unavailable");
        return *mixture;
    }
    return expected;
  }
};

inline nlohmann::json to_json(const SeedCalibration& c) {
  nlohmann::json out = {{"expected_scores", c.expected_scores}, {"expected", to_json(c.expected)}};
  if (c.self_supervised) {
    out["self_supervised"] = {
        {"thresholds", to_json(c.self_supervised->thresholds)},
        {"entropy", c.self_supervised->entropy},
        {"candidates", c.self_supervised->candidates},
        {"tied_candidates", c.self_supervised->tied_candidates},
        {"tie_break_applied", c.self_supervised->tie_break_applied},
        {"probing_size", c.probing_scores.size()},
    };
  }
  if (c.mixture) out["mixture"] = to_json(*c.mixture);
  if (c.warning) out["warning"] = *c.warning;
  return out;
}

// Expected thresholds always; self-supervised and mixture when a probing set is
// given. Probing items are scored once and reused for every candidate tuple.
inline SeedCalibration calibrate_thresholds(const DemonstrationSet& demos, PreferenceOracle& oracle,
                                            const ProbingSet* probing, const SearchConfig& search,
                                            std::size_t parallelism) {
  const auto labels = demos.labels();
  const auto m = demos.label_space().size();
  SeedCalibration c{expected_scores(labels, m), expected_thresholds(labels, m), {}, {}, {}, {}};
  if (probing != nullptr) {
    c.probing_scores = score_batch(probing->items(), demos, oracle, parallelism);
    c.self_supervised = search_self_supervised_thresholds(c.probing_scores, labels, m, search);
    c.mixture = mixture_thresholds(c.expected, c.self_supervised->thresholds);
  }
  return c;
}

struct SeedRun {
  std::vector<std::int64_t> scores;
  std::vector<std::size_t> predictions;
  SeedCalibration calibration;
  Thresholds thresholds;
};

inline SeedRun classify_seed(const std::vector<TextItem>& test, const DemonstrationSet& demos,
                             PreferenceOracle& oracle, ThresholdStrategy strategy,
                             const ProbingSet* probing, const SearchConfig& search = {},
                             std::size_t parallelism = kDefaultParallelism) {
  if (needs_probing(strategy) && probing == nullptr) {
    throw CalibrationError(std::string(strategy_name(strategy)) + " thresholds need a probing set");
  }
  SeedRun run;
  run.scores = score_batch(test, demos, oracle, parallelism);
  run.calibration = calibrate_thresholds(demos, oracle, needs_probing(strategy) ? probing : nullptr,
                                         search, parallelism);
  run.thresholds = run.calibration.select(strategy);
  run.predictions = decide_all(run.scores, run.thresholds);
  return run;
}

// ---------------------------------------------------------------------------
// Job manifests.

enum class BackendKind { kSimulated, kHttp, kReplay };

struct BackendSpec {
  BackendKind kind = BackendKind::kSimulated;
  SimulatedConfig simulated;
  HttpConfig http;
  std::filesystem::path replay_file;
  bool replay_strict = true;
};

inline BackendSpec backend_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  BackendSpec spec;
  const auto kind = j.value("kind", std::string("simulated"));
  if (kind == "simulated") {
    spec.kind = BackendKind::kSimulated;
    auto& s = spec.simulated;
    s.noise = j.value("noise", 0.0);
    s.tie_margin = j.value("tie_margin", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    s.probes_per_generation = j.value("probes_per_generation", s.probes_per_generation);
    s.planted_ordering = j.value("planted_ordering", std::vector<std::size_t>{});
    s.supports_probabilities = j.value("supports_probabilities", true);
    s.context_limit_tokens = j.value("context_limit_tokens", std::size_t{0});
    if (s.noise < 0.0 || s.noise > 1.0) throw ConfigError("simulated noise must be in [0, 1]");
    if (s.tie_margin < 0.0) throw ConfigError("simulated tie_margin must be >= 0");
  } else if (kind == "http") {
    spec.kind = BackendKind::kHttp;
    auto& h = spec.http;
    h.url = j.at("url").get<std::string>();
    h.headers = j.value("headers", std::map<std::string, std::string>{});
    if (j.contains("body")) h.body_template = j["body"];
    h.response_path = j.value("response_path", h.response_path);
    h.timeout_seconds = j.value("timeout_seconds", h.timeout_seconds);
    h.max_retries = j.value("max_retries", h.max_retries);
    h.backoff_initial_seconds = j.value("backoff_initial_seconds", h.backoff_initial_seconds);
    h.backoff_max_seconds = j.value("backoff_max_seconds", h.backoff_max_seconds);
    h.rate_limit_per_second = j.value("rate_limit", h.rate_limit_per_second);
    h.max_parallel = j.value("max_parallel", h.max_parallel);
    h.context_limit_tokens = j.value("context_limit_tokens", h.context_limit_tokens);
    h.temperature_key = j.value("temperature_key", h.temperature_key);
  } else if (kind == "replay") {
    spec.kind = BackendKind::kReplay;
    spec.replay_file = base / j.at("cache_file").get<std::string>();
    spec.replay_strict = j.value("strict", true);
  } else {
    throw ConfigError("unknown backend kind '" + kind + "'");
  }
  return spec;
}

inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  switch (spec.kind) {
    case BackendKind::kSimulated: return std::make_unique<SimulatedBackend>(spec.simulated);
    case BackendKind::kHttp: return std::make_unique<HttpBackend>(spec.http);
    case BackendKind::kReplay: return std::make_unique<ReplayBackend>(spec.replay_file, spec.replay_strict);
  }
  throw ConfigError("unknown backend kind");
}

struct ProbingOptions {
  std::optional<std::filesystem::path> file;
  std::size_t size = kDefaultProbingSize;
  std::size_t orderings = kDefaultProbingOrderings;
  std::size_t max_tokens = kDefaultProbingMaxTokens;
  std::uint64_t seed = 0;
};

struct JobManifest {
  std::string dataset_name;
  std::filesystem::path dataset_path;
  std::vector<std::string> labels;
  std::string template_name;
  std::string template_text;
  std::string metric;
  std::optional<std::size_t> shots;
  std::vector<int> seeds;  // empty = every seed in the file
  std::string method = "lampo";
  ThresholdStrategy strategy = ThresholdStrategy::kMixture;
  BackendSpec backend;
  ProbingOptions probing;
  SearchConfig search;
  std::size_t globale_candidates = kDefaultGlobalECandidates;
  std::string content_free{kDefaultContentFree};
  std::optional<std::string> instruction;
  std::filesystem::path output_dir = "lampo-out";
  bool resume = true;
  std::size_t parallelism = kDefaultParallelism;
  bool dry_run = false;

  OrderedLabelSpace label_space() const { return OrderedLabelSpace(labels); }
  PromptTemplate prompt_template() const { return PromptTemplate(template_name, template_text); }
  std::filesystem::path cache_path() const { return output_dir / "cache.jsonl"; }

  void validate() const {
    if (parallelism == 0) throw ConfigError("parallelism must be >= 1");
    if (method != "lampo" && method != "icl" && method != "cc" && method != "globale") {
      throw ConfigError("unknown method '" + method + "'");
    }
    const auto space = label_space();
    const auto spec = parse_metric(metric, space);
    for (const auto& task : builtin_tasks()) {
      if (task.name == dataset_name && !(task.metric == spec)) {
        throw ConfigError("metric '" + metric + "' does not match the " + dataset_name + " task (" +
                          metric_name(task.metric, space) + ")");
      }
    }
    (void)prompt_template();
  }
};

// Paths in the manifest are relative to `base`.
inline JobManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base = ".") {
  JobManifest m;
  m.dataset_path = base / j.at("dataset").get<std::string>();
  m.dataset_name = j.value("dataset_name", j.value("task", m.dataset_path.stem().string()));
  const TaskSpec* task = nullptr;
  if (j.contains("task")) task = &find_task(j["task"].get<std::string>());
  if (j.contains("labels")) {
    m.labels = j["labels"].get<std::vector<std::string>>();
  } else if (task) {
    m.labels = task->labels;
  } else {
    throw ConfigError("manifest needs 'task' or 'labels'");
  }
  if (j.contains("template_file")) {
    auto t = load_template(base / j["template_file"].get<std::string>());
    m.template_name = t.name();
    m.template_text = t.text();
  } else if (task) {
    m.template_name = task->name;
    m.template_text = task->template_text;
  } else {
    throw ConfigError("manifest needs 'task' or 'template_file'");
  }
  if (j.contains("metric")) {
    m.metric = j["metric"].get<std::string>();
  } else {
    m.metric = task ? metric_name(task->metric, OrderedLabelSpace(m.labels)) : "accuracy";
  }
  if (j.contains("shots")) m.shots = j["shots"].get<std::size_t>();
  m.seeds = j.value("seeds", std::vector<int>{});
  m.method = j.value("method", m.method);
  if (j.contains("thresholds")) m.strategy = parse_strategy(j["thresholds"].get<std::string>());
  m.backend = backend_spec_from_json(j.value("backend", nlohmann::json::object()), base);
  if (j.contains("probing")) {
    const auto& p = j["probing"];
    if (p.contains("file")) m.probing.file = base / p["file"].get<std::string>();
    m.probing.size = p.value("size", m.probing.size);
    m.probing.orderings = p.value("orderings", m.probing.orderings);
    m.probing.max_tokens = p.value("max_tokens", m.probing.max_tokens);
    m.probing.seed = p.value("seed", m.probing.seed);
  }
  if (j.contains("search")) {
    const auto& s = j["search"];
    if (s.contains("window") && !s["window"].is_null()) m.search.window = s["window"].get<std::int64_t>();
    m.search.unwindowed = s.value("unwindowed", false);
    if (s.value("tie_break", std::string("nearest_prior")) == "lexicographic") {
      m.search.tie_break = TieBreak::kLexicographic;
    }
  }
  m.globale_candidates = j.value("globale_candidates", m.globale_candidates);
  m.content_free = j.value("content_free", m.content_free);
  if (j.contains("instruction")) m.instruction = j["instruction"].get<std::string>();
  if (j.contains("output_dir")) m.output_dir = base / j["output_dir"].get<std::string>();
  m.resume = j.value("resume", m.resume);
  m.parallelism = j.value("parallelism", m.parallelism);
  m.dry_run = j.value("dry_run", m.dry_run);
  m.validate();
  return m;
}

inline JobManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return manifest_from_json(j, path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
}

// Every default that shaped the run, recorded in reports.
inline nlohmann::json manifest_settings(const JobManifest& m, std::string_view backend_id) {
  return {
      {"backend", backend_id},
      {"template", m.template_name},
      {"parallelism", m.parallelism},
      {"probing_size", m.probing.size},
      {"probing_orderings", m.probing.orderings},
      {"probing_max_tokens", m.probing.max_tokens},
      {"search_window", m.search.window ? nlohmann::json(*m.search.window) : nlohmann::json("|C|")},
      {"search_unwindowed", m.search.unwindowed},
      {"tie_break", m.search.tie_break == TieBreak::kLexicographic ? "lexicographic" : "nearest_prior"},
      {"decoding", "greedy (temperature 0)"},
      {"globale_candidates", m.globale_candidates},
      {"content_free", m.content_free},
  };
}

struct CallPlan {
  std::size_t comparison_calls = 0;
  std::size_t probing_comparison_calls = 0;
  std::size_t generation_calls = 0;  // upper bound for probing construction
  std::size_t already_cached = 0;

  std::size_t total() const { return comparison_calls + probing_comparison_calls + generation_calls; }
};

struct JobOutput {
  MetricReport report;
  std::vector<SeedCalibration> calibrations;
  std::vector<std::vector<std::size_t>> predictions;
  CallPlan plan;
  std::vector<std::string> warnings;
};

class JobRunner {
 public:
  explicit JobRunner(JobManifest manifest, std::unique_ptr<Backend> backend = nullptr)
      : manifest_(std::move(manifest)),
        backend_(backend ? std::move(backend) : make_backend(manifest_.backend)),
        space_(manifest_.label_space()) {
    DatasetOptions options;
    options.aspect_based = manifest_.prompt_template().aspect_based();
    options.shots_per_class = manifest_.shots;
    data_ = load_dataset(manifest_.dataset_path, space_, options);
    if (data_.demos_by_seed.empty()) throw ValidationError("dataset has no demonstration rows");
    if (data_.test.empty()) throw ValidationError("dataset has no test rows");
    seeds_ = manifest_.seeds;
    if (seeds_.empty()) {
      for (const auto& [seed, _] : data_.demos_by_seed) seeds_.push_back(seed);
    }
    for (auto seed : seeds_) {
      if (!data_.demos_by_seed.contains(seed)) {
        throw ConfigError("dataset has no demonstrations for seed " + std::to_string(seed));
      }
    }
  }

  Backend& backend() noexcept { return *backend_; }
  const LoadedDataset& dataset() const noexcept { return data_; }
  const JobManifest& manifest() const noexcept { return manifest_; }

  CallPlan plan(bool lampo) const {
    CallPlan plan;
    for (auto seed : seeds_) {
      const auto& demos = data_.demos_by_seed.at(seed);
      if (lampo) {
        plan.comparison_calls += 2 * demos.size() * data_.test.size();
        if (needs_probing(manifest_.strategy)) {
          std::size_t probes = manifest_.probing.size;
          if (const auto file = probing_file(seed); std::filesystem::exists(file)) {
            probes = load_probing_set(file).texts.size();
          } else {
            plan.generation_calls += manifest_.probing.orderings;
          }
          plan.probing_comparison_calls += 2 * demos.size() * probes;
        }
      }
    }
    if (lampo && manifest_.resume && std::filesystem::exists(manifest_.cache_path())) {
      std::unordered_map<std::string, bool> keys;
      for (const auto& e : scan_cache_file(manifest_.cache_path()).entries) keys[e.key] = true;
      plan.already_cached = keys.size();
    }
    return plan;
  }

  JobOutput run() {
    JobOutput out;
    const bool lampo = manifest_.method == "lampo";
    out.plan = plan(lampo);
    out.warnings = data_.warnings;
    auto& report = out.report;
    report.dataset = manifest_.dataset_name;
    report.method = manifest_.method;
    report.strategy = lampo ? strategy_name(manifest_.strategy) : "";
    report.shots = manifest_.shots.value_or(0);
    report.metric = metric_name(parse_metric(manifest_.metric, space_), space_);
    report.settings = manifest_settings(manifest_, backend_->id());
    if (manifest_.dry_run) return out;

    std::filesystem::create_directories(manifest_.output_dir);
    ResponseCache cache(manifest_.cache_path(), manifest_.resume);
    const auto metric = parse_metric(manifest_.metric, space_);
    const auto golds = data_.test_golds();

    for (auto seed : seeds_) {
      const auto& demos = data_.demos_by_seed.at(seed);
      SeedResult result{seed, std::nullopt, std::nullopt};
      std::vector<std::size_t> predictions;
      std::vector<std::int64_t> scores;
      if (lampo) {
        auto run = run_lampo_seed(seed, demos, cache, out.warnings);
        predictions = run.predictions;
        scores = run.scores;
        write_json(manifest_.output_dir / ("calibration_seed" + std::to_string(seed) + ".json"),
                   to_json(run.calibration));
        out.calibrations.push_back(std::move(run.calibration));
      } else {
        try {
          predictions = run_baseline_seed(seed, demos, cache);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kContextOverflow && e.kind() != ErrorKind::kUnsupported &&
              e.kind() != ErrorKind::kInfeasible) {
            throw;
          }
          result.failure = error_kind_name(e.kind());
        }
      }
      if (!result.failure) {
        result.value = compute_metric(metric, predictions, golds, space_.size());
        write_predictions(seed, predictions, scores);
      }
      report.seeds.push_back(std::move(result));
      out.predictions.push_back(std::move(predictions));
    }
    report.backend_calls = backend_->counters().total();
    report.cache_hits = cache.hits();

    const auto doc = emit_report({report});
    write_json(manifest_.output_dir / "report.json", doc.machine);
    std::ofstream(manifest_.output_dir / "report.md", std::ios::binary | std::ios::trunc) << doc.table;
    return out;
  }

  // Thresholds for every strategy, per seed. A probing failure falls back to
  // expected thresholds and records a warning instead of aborting.
  nlohmann::json calibrate() {
    std::filesystem::create_directories(manifest_.output_dir);
    ResponseCache cache(manifest_.cache_path(), manifest_.resume);
    PreferenceOracle oracle(*backend_, manifest_.prompt_template(), cache);
    nlohmann::json out = {{"seeds", nlohmann::json::array()},
                          {"settings", manifest_settings(manifest_, backend_->id())}};
    for (auto seed : seeds_) {
      const auto& demos = data_.demos_by_seed.at(seed);
      SeedCalibration calibration;
      try {
        const auto probing = obtain_probing(seed, demos);
        calibration = calibrate_thresholds(demos, oracle, &probing, manifest_.search, manifest_.parallelism);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kValidation && e.kind() != ErrorKind::kCalibration) throw;
        calibration = calibrate_thresholds(demos, oracle, nullptr, manifest_.search, manifest_.parallelism);
        calibration.warning = std::string("fell back to expected thresholds: ") + e.what();
      }
      auto j = to_json(calibration);
      j["seed"] = seed;
      out["seeds"].push_back(std::move(j));
    }
    out["backend_calls"] = backend_->counters().total();
    write_json(manifest_.output_dir / "calibration.json", out);
    return out;
  }

 private:
  std::filesystem::path probing_file(int seed) const {
    if (manifest_.probing.file) return *manifest_.probing.file;
    return manifest_.output_dir / ("probing_seed" + std::to_string(seed) + ".txt");
  }

  // The probing set for a seed: the configured file, a previously generated
  // one, or a fresh generation (saved for reuse by every method).
  ProbingSet obtain_probing(int seed, const DemonstrationSet& demos) {
    const auto file = probing_file(seed);
    if (manifest_.probing.file || std::filesystem::exists(file)) return load_probing_set(file);
    auto probing = construct_probing_set(demos, *backend_, manifest_.probing.size, manifest_.probing.orderings,
                                         manifest_.probing.seed + static_cast<std::uint64_t>(seed),
                                         manifest_.probing.max_tokens);
    save_probing_set(file, probing);
    return probing;
  }

  SeedRun run_lampo_seed(int seed, const DemonstrationSet& demos, ResponseCache& cache,
                         std::vector<std::string>& warnings) {
    PreferenceOracle oracle(*backend_, manifest_.prompt_template(), cache);
    std::optional<ProbingSet> probing;
    if (needs_probing(manifest_.strategy)) probing = obtain_probing(seed, demos);
    if (probing && probing->texts.size() < manifest_.probing.size) {
      warnings.push_back("seed " + std::to_string(seed) + ": probing set has only " +
                         std::to_string(probing->texts.size()) + " texts");
    }
    return classify_seed(data_.test_items(), demos, oracle, manifest_.strategy,
                         probing ? &*probing : nullptr, manifest_.search, manifest_.parallelism);
  }

  std::vector<std::size_t> run_baseline_seed(int seed, const DemonstrationSet& demos, ResponseCache& cache) {
    const auto instruction = manifest_.instruction.value_or(default_instruction(space_));
    PromptContext ctx = identity_context(demos, instruction);
    if (manifest_.method == "globale") {
      const auto probing = obtain_probing(seed, demos);
      ctx = globale_select_ordering(demos, manifest_.globale_candidates, probing, *backend_,
                                    static_cast<std::uint64_t>(seed), instruction, &cache,
                                    manifest_.parallelism)
                .context;
    }
    const auto test = data_.test_items();
    std::vector<std::size_t> predictions(test.size(), space_.size());
    parallel_for(test.size(), manifest_.parallelism, [&](std::size_t i) {
      try {
        predictions[i] = manifest_.method == "cc"
                             ? cc_predict(ctx, test[i], *backend_, space_, manifest_.content_free)
                             : icl_predict(ctx, test[i], *backend_, space_, &cache);
      } catch (const Error& e) {
        // Unparseable answers count as wrong; index m matches no class.
        if (e.kind() != ErrorKind::kUnparseable) throw;
      }
    });
    return predictions;
  }

  void write_predictions(int seed, const std::vector<std::size_t>& predictions,
                         const std::vector<std::int64_t>& scores) const {
    std::ofstream out(manifest_.output_dir / ("predictions_seed" + std::to_string(seed) + ".jsonl"),
                      std::ios::binary | std::ios::trunc);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      nlohmann::json row = {
          {"index", i},
          {"prediction", predictions[i] < space_.size() ? nlohmann::json(space_[predictions[i]])
                                                        : nlohmann::json(nullptr)},
          {"gold", space_[data_.test[i].gold]},
      };
      if (i < scores.size()) row["score"] = scores[i];
      out << row.dump() << '\n';
    }
  }

  static void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << j.dump(2) << '\n';
  }

  JobManifest manifest_;
  std::unique_ptr<Backend> backend_;
  OrderedLabelSpace space_;
  LoadedDataset data_;
  std::vector<int> seeds_;
};

}  // namespace lampo
