#pragma once

// Throwaway jobs on synthetic data for pipeline-level tests.

#include <filesystem>
#include <fstream>
#include <string>

#include "lampo/pipeline.hpp"
#include "lampo/simulate.hpp"

namespace lampo::testing {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lampo_job_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// m-way, k-shot demonstrations (one seed per entry of `seeds`) and n test items,
// all with latent == class index, written as a dataset file in `dir`.
inline void write_synthetic_dataset(const fs::path& dir, std::size_t m, std::size_t k, std::size_t n,
                                    int seeds = 1) {
  const auto space = synthetic_label_space(m);
  std::ofstream out(dir / "dataset.jsonl");
  for (int seed = 0; seed < seeds; ++seed) {
    const auto demos = synthetic_demonstrations(m, k, "s" + std::to_string(seed) + ":");
    for (const auto& d : demos.items()) {
      out << nlohmann::json{{"split", "demo"}, {"seed", seed}, {"text", d.text}, {"label", space[d.label]}}.dump()
          << '\n';
    }
  }
  for (const auto& t : synthetic_test_items(m, n)) {
    out << nlohmann::json{{"split", "test"}, {"text", t.item.text}, {"label", space[t.gold]}}.dump() << '\n';
  }
  std::ofstream(dir / "template.txt", std::ios::binary) << synthetic_template().text();
}

inline void write_probing_file(const fs::path& path, std::size_t m, std::size_t n) {
  std::ofstream out(path);
  for (std::size_t i = 0; i < n; ++i) {
    out << synthetic_text(static_cast<double>(i % (4 * (m - 1) + 1)) / 4.0, "probe-" + std::to_string(i)) << '\n';
  }
}

inline nlohmann::json synthetic_job_json(std::size_t m, std::size_t k, const std::string& strategy) {
  const auto space = synthetic_label_space(m);
  return {
      {"dataset_name", "synthetic"},
      {"dataset", "dataset.jsonl"},
      {"labels", space.labels()},
      {"template_file", "template.txt"},
      {"metric", "accuracy"},
      {"shots", k},
      {"thresholds", strategy},
      {"backend", {{"kind", "simulated"}, {"seed", 3}}},
      {"output_dir", "out"},
      {"parallelism", 4},
  };
}

}  // namespace lampo::testing
