// lampo: command-line runner for pairwise-preference ordinal classification.
//
// Exit codes: 0 success, 2 configuration, 3 transport, 4 validation, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lampo/cache.hpp"
#include "lampo/dataset.hpp"
#include "lampo/pipeline.hpp"
#include "lampo/simulate.hpp"

namespace fs = std::filesystem;
using namespace lampo;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTransport = 3;
constexpr int kExitValidation = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kTransport: return kExitTransport;
    case ErrorKind::kValidation: return kExitValidation;
    default: return kExitOther;
  }
}

struct JobFlags {
  std::string config;
  std::string output;
  bool fresh = false;
  bool resume = false;
  std::optional<std::size_t> parallelism;
  bool dry_run = false;
  std::string strategy;
  std::string probing_file;
};

void add_job_flags(CLI::App* cmd, JobFlags& f, bool with_strategy) {
  cmd->add_option("-c,--config", f.config, "job manifest (JSON)")->required();
  cmd->add_option("-o,--output", f.output, "output directory (overrides the manifest)");
  auto* fresh = cmd->add_flag("--fresh", f.fresh, "ignore and overwrite any existing cache");
  cmd->add_flag("--resume", f.resume, "reuse cached responses (default)")->excludes(fresh);
  cmd->add_option("-j,--parallelism", f.parallelism, "concurrent backend requests")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--dry-run", f.dry_run, "print the call plan and exit");
  cmd->add_option("--probing-file", f.probing_file, "probing set, one text per line");
  if (with_strategy) {
    cmd->add_option("-s,--strategy", f.strategy, "expected | self_supervised | mixture");
  }
}

// Removes artifacts of earlier runs that a fresh run must not reuse.
void clear_previous_run(const JobManifest& m) {
  fs::remove(m.cache_path());
  if (m.probing.file || !fs::exists(m.output_dir)) return;
  for (const auto& entry : fs::directory_iterator(m.output_dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("probing_seed")) fs::remove(entry.path());
  }
}

JobManifest load_job(const JobFlags& f) {
  auto m = load_manifest(f.config);
  if (!f.output.empty()) m.output_dir = f.output;
  if (f.fresh) m.resume = false;
  if (f.resume) m.resume = true;
  if (f.parallelism) m.parallelism = *f.parallelism;
  if (f.dry_run) m.dry_run = true;
  if (!f.strategy.empty()) m.strategy = parse_strategy(f.strategy);
  if (!f.probing_file.empty()) m.probing.file = f.probing_file;
  m.validate();
  if (!m.resume && !m.dry_run) clear_previous_run(m);
  return m;
}

void print_plan(const CallPlan& plan) {
  std::cout << "planned backend calls: " << plan.total() << " (comparisons " << plan.comparison_calls
            << ", probing comparisons " << plan.probing_comparison_calls << ", probing generations <= "
            << plan.generation_calls << ")";
  if (plan.already_cached > 0) std::cout << "; " << plan.already_cached << " responses already cached";
  std::cout << '\n';
}

std::string format_thresholds(const nlohmann::json& cuts) {
  std::string out = "{";
  for (std::size_t j = 0; j < cuts.size(); ++j) {
    if (j) out += ", ";
    out += cuts[j]["exact"].get<std::string>();
  }
  return out + "}";
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void print_predictions(const JobManifest& m, const JobOutput& out) {
  for (const auto& seed : out.report.seeds) {
    std::ifstream in(m.output_dir / ("predictions_seed" + std::to_string(seed.seed) + ".jsonl"));
    std::string line;
    while (std::getline(in, line)) {
      auto row = nlohmann::json::parse(line);
      row["seed"] = seed.seed;
      std::cout << row.dump() << '\n';
    }
  }
}

int cmd_classify(const JobFlags& f) {
  auto m = load_job(f);
  m.method = "lampo";
  JobRunner runner(m);
  print_plan(runner.plan(true));
  if (m.dry_run) return 0;
  const auto out = runner.run();
  print_warnings(out.warnings);
  print_predictions(m, out);
  std::cout << emit_report({out.report}).table;
  std::cout << "backend calls: " << out.report.backend_calls << ", cache hits: " << out.report.cache_hits
            << "\nreport: " << (m.output_dir / "report.json").string() << '\n';
  return 0;
}

int cmd_calibrate(const JobFlags& f) {
  auto m = load_job(f);
  JobRunner runner(m);
  if (m.dry_run) {
    auto plan = runner.plan(true);
    plan.comparison_calls = 0;
    print_plan(plan);
    return 0;
  }
  const auto out = runner.calibrate();
  for (const auto& seed : out["seeds"]) {
    std::cout << "seed " << seed["seed"].get<int>() << '\n';
    std::cout << "  expected: " << format_thresholds(seed["expected"]) << '\n';
    if (seed.contains("self_supervised")) {
      const auto& s = seed["self_supervised"];
      std::printf("  self_supervised: %s (entropy %.6f, %zu candidates, %zu tied)\n",
                  format_thresholds(s["thresholds"]).c_str(), s["entropy"].get<double>(),
                  s["candidates"].get<std::size_t>(), s["tied_candidates"].get<std::size_t>());
      std::fflush(stdout);
    }
    if (seed.contains("mixture")) std::cout << "  mixture: " << format_thresholds(seed["mixture"]) << '\n';
    if (seed.contains("warning")) std::cout << "  warning: " << seed["warning"].get<std::string>() << '\n';
  }
  std::cout << "report: " << (m.output_dir / "calibration.json").string() << '\n';
  return 0;
}

int cmd_baseline(const JobFlags& f, const std::string& method, bool generation_only,
                 std::optional<std::size_t> candidates) {
  auto m = load_job(f);
  m.method = method;
  if (generation_only) m.backend.simulated.supports_probabilities = false;
  if (candidates) m.globale_candidates = *candidates;
  m.validate();
  JobRunner runner(m);
  if (m.dry_run) {
    std::cout << "planned backend calls: unknown for baselines (one per test item and ordering)\n";
    return 0;
  }
  const auto out = runner.run();
  print_warnings(out.warnings);
  for (const auto& seed : out.report.seeds) {
    if (seed.failure) std::cout << "seed " << seed.seed << ": NA(" << *seed.failure << ")\n";
  }
  std::cout << emit_report({out.report}).table;
  std::cout << "report: " << (m.output_dir / "report.json").string() << '\n';
  return 0;
}

struct SimulateFlags {
  std::string config;
  std::vector<std::size_t> ways, shots;
  std::vector<double> noises;
  std::vector<std::string> strategies;
  std::optional<std::size_t> trials, test_items, probing_size, parallelism;
  std::optional<std::uint64_t> seed;
  std::optional<double> tie_margin;
  std::string output;
};

int cmd_simulate(const SimulateFlags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot open sweep config " + f.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("sweep config " + f.config + ": " + e.what());
    }
  }
  if (!f.ways.empty()) j["ways"] = f.ways;
  if (!f.shots.empty()) j["shots"] = f.shots;
  if (!f.noises.empty()) j["noises"] = f.noises;
  if (!f.strategies.empty()) j["strategies"] = f.strategies;
  if (f.trials) j["trials"] = *f.trials;
  if (f.test_items) j["test_items"] = *f.test_items;
  if (f.probing_size) j["probing_size"] = *f.probing_size;
  if (f.parallelism) j["parallelism"] = *f.parallelism;
  if (f.seed) j["seed"] = *f.seed;
  if (f.tie_margin) j["tie_margin"] = *f.tie_margin;
  SweepConfig cfg;
  try {
    cfg = sweep_config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep config: ") + e.what());
  }

  const auto cells = run_sweep(cfg);
  std::printf("%5s %5s %6s %-16s %7s %9s\n", "ways", "shots", "noise", "strategy", "trials", "accuracy");
  nlohmann::json report = {{"cells", nlohmann::json::array()}};
  for (const auto& c : cells) {
    std::printf("%5zu %5zu %6.2f %-16s %7zu %9.4f\n", c.ways, c.shots, c.noise, strategy_name(c.strategy),
                c.trials, c.mean_accuracy);
    report["cells"].push_back(to_json(c));
  }
  std::fflush(stdout);
  std::cout << "cells: " << cells.size() << '\n';
  if (!f.output.empty()) {
    const fs::path out(f.output);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream(out, std::ios::binary | std::ios::trunc) << report.dump(2) << '\n';
    std::cout << "report: " << out.string() << '\n';
  }
  return 0;
}

struct ConvertFlags {
  std::vector<std::string> demos;
  std::string test;
  std::string output;
  ConvertOptions options;
  std::vector<std::string> label_map;
  std::string aspect_column;
};

int cmd_convert(ConvertFlags f) {
  for (const auto& pair : f.label_map) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw ConfigError("label map entries look like raw=label, got '" + pair + "'");
    f.options.label_map[pair.substr(0, eq)] = pair.substr(eq + 1);
  }
  if (!f.aspect_column.empty()) f.options.aspect_column = f.aspect_column;
  std::vector<fs::path> demo_files(f.demos.begin(), f.demos.end());
  std::ofstream out(f.output, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + f.output);
  const auto rows = convert_dataset(demo_files, f.test, f.options, out);
  std::cout << "wrote " << rows << " rows (" << demo_files.size() << " demonstration seeds) to " << f.output
            << '\n';
  return 0;
}

int cmd_cache_inspect(const std::string& file) {
  if (!fs::exists(file)) throw ConfigError("cache file not found: " + file);
  const auto scan = scan_cache_file(file);
  std::map<std::string, std::size_t> latest_by_kind;
  std::unordered_map<std::string, const CacheEntry*> latest;
  for (const auto& e : scan.entries) latest[e.key] = &e;
  for (const auto& [key, e] : latest) ++latest_by_kind[e->kind.empty() ? "unknown" : e->kind];
  std::cout << "lines: " << scan.entries.size() + scan.malformed_lines << '\n'
            << "entries: " << latest.size() << '\n'
            << "superseded: " << scan.entries.size() - latest.size() << '\n'
            << "malformed: " << scan.malformed_lines << '\n';
  for (const auto& [kind, n] : latest_by_kind) std::cout << "  " << kind << ": " << n << '\n';
  return 0;
}

int cmd_cache_prune(const std::string& file, const std::vector<std::string>& kinds, bool drop_empty) {
  if (!fs::exists(file)) throw ConfigError("cache file not found: " + file);
  const auto stats = prune_cache_file(file, [&](const CacheEntry& e) {
    if (drop_empty && e.raw.empty()) return true;
    return std::find(kinds.begin(), kinds.end(), e.kind) != kinds.end();
  });
  std::cout << "kept: " << stats.kept << "\nremoved: " << stats.removed << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ordinal text classification with an LLM as a pairwise preference oracle"};
  app.require_subcommand(1);

  JobFlags classify_flags, calibrate_flags, baseline_flags;
  auto* classify = app.add_subcommand("classify", "score, calibrate and label the test split");
  add_job_flags(classify, classify_flags, true);
  auto* calibrate = app.add_subcommand("calibrate", "report expected, self-supervised and mixture thresholds");
  add_job_flags(calibrate, calibrate_flags, false);

  auto* baseline = app.add_subcommand("baseline", "run a pointwise in-context baseline");
  add_job_flags(baseline, baseline_flags, false);
  std::string method = "icl";
  bool generation_only = false;
  std::optional<std::size_t> candidates;
  baseline->add_option("-m,--method", method, "icl | cc | globale")
      ->check(CLI::IsMember({"icl", "cc", "globale"}));
  baseline->add_flag("--generation-only", generation_only,
                     "treat a simulated backend as exposing text only, no label probabilities");
  baseline->add_option("--candidates", candidates, "GlobalE candidate orderings")->check(CLI::PositiveNumber);

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "sweep the simulated oracle over ways, shots and noise");
  simulate->add_option("-c,--config", sim.config, "sweep config (JSON)");
  simulate->add_option("--ways", sim.ways, "label-space sizes");
  simulate->add_option("--shots", sim.shots, "demonstrations per class");
  simulate->add_option("--noise", sim.noises, "per-call flip probabilities");
  simulate->add_option("--strategy", sim.strategies, "threshold strategies");
  simulate->add_option("--trials", sim.trials, "trials per cell")->check(CLI::PositiveNumber);
  simulate->add_option("--test-items", sim.test_items, "test items per trial")->check(CLI::PositiveNumber);
  simulate->add_option("--probing-size", sim.probing_size, "probing texts per trial")->check(CLI::PositiveNumber);
  simulate->add_option("--tie-margin", sim.tie_margin, "latent gap treated as a tie");
  simulate->add_option("--seed", sim.seed, "sweep seed");
  simulate->add_option("-j,--parallelism", sim.parallelism, "worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("-o,--output", sim.output, "write the sweep report (JSON) here");

  ConvertFlags conv;
  auto* convert = app.add_subcommand("convert-dataset", "convert CSV/TSV/JSONL tables to the dataset format");
  convert->add_option("--demo", conv.demos, "demonstration table, one per seed, in seed order")->required();
  convert->add_option("--test", conv.test, "test table")->required();
  convert->add_option("-o,--output", conv.output, "output dataset file")->required();
  convert->add_option("--text-column", conv.options.text_column, "text column name");
  convert->add_option("--label-column", conv.options.label_column, "label column name");
  convert->add_option("--aspect-column", conv.aspect_column, "aspect column name");
  convert->add_option("--label-map", conv.label_map, "raw=label pairs, e.g. 0=negative");

  auto* cache = app.add_subcommand("cache", "inspect or prune a response cache");
  cache->require_subcommand(1);
  std::string cache_file;
  std::vector<std::string> prune_kinds;
  bool drop_empty = false;
  auto* inspect = cache->add_subcommand("inspect", "summarize a cache file");
  inspect->add_option("file", cache_file, "cache file")->required();
  auto* prune = cache->add_subcommand("prune", "drop superseded and selected entries");
  prune->add_option("file", cache_file, "cache file")->required();
  prune->add_option("--kind", prune_kinds, "drop entries of this kind (compare, classify)");
  prune->add_flag("--drop-empty", drop_empty, "drop entries with an empty response");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*classify) return cmd_classify(classify_flags);
    if (*calibrate) return cmd_calibrate(calibrate_flags);
    if (*baseline) return cmd_baseline(baseline_flags, method, generation_only, candidates);
    if (*simulate) return cmd_simulate(sim);
    if (*convert) return cmd_convert(conv);
    if (*inspect) return cmd_cache_inspect(cache_file);
    if (*prune) return cmd_cache_prune(cache_file, prune_kinds, drop_empty);
  } catch (const IncompleteRun& e) {
    std::cerr << "error: " << e.what() << "\nrerun with --resume to continue from the cache\n";
    return kExitTransport;
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
