#pragma once

// Persistent response cache: one JSON object per line, appended as results
// arrive. Later lines win on duplicate keys. A truncated trailing line (from an
// interrupted write) is skipped on load.
//
//   {"key":"<sha256>","kind":"compare","raw":"Passage A","parsed":"A","ts":1700000000}

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lampo/error.hpp"

namespace lampo {

struct CacheEntry {
  std::string key;
  std::string kind;    // "compare", "classify", ...
  std::string raw;     // backend text as returned
  std::string parsed;  // "A", "B", "I" for comparisons; label index for classify
  std::int64_t timestamp = 0;
};

inline nlohmann::json to_json(const CacheEntry& entry) {
  return {{"key", entry.key}, {"kind", entry.kind}, {"raw", entry.raw},
          {"parsed", entry.parsed}, {"ts", entry.timestamp}};
}

inline CacheEntry cache_entry_from_json(const nlohmann::json& j) {
  CacheEntry entry;
  entry.key = j.at("key").get<std::string>();
  entry.kind = j.value("kind", std::string{});
  entry.raw = j.at("raw").get<std::string>();
  entry.parsed = j.value("parsed", std::string{});
  entry.timestamp = j.value("ts", std::int64_t{0});
  return entry;
}

struct CacheFileScan {
  std::vector<CacheEntry> entries;  // in file order, duplicates included
  std::size_t malformed_lines = 0;
};

inline CacheFileScan scan_cache_file(const std::filesystem::path& path) {
  CacheFileScan scan;
  std::ifstream in(path, std::ios::binary);
  if (!in) return scan;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      scan.entries.push_back(cache_entry_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception&) {
      ++scan.malformed_lines;
    }
  }
  return scan;
}

// Thread-safe: concurrent lookups, serialized inserts.
class ResponseCache {
 public:
  // In-memory only.
  ResponseCache() = default;

  // Backed by `path`. With `load_existing` false the file is truncated.
  explicit ResponseCache(std::filesystem::path path, bool load_existing = true)
      : path_(std::move(path)) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    if (load_existing) {
      auto scan = scan_cache_file(*path_);
      malformed_lines_ = scan.malformed_lines;
      for (auto& entry : scan.entries) entries_[entry.key] = std::move(entry);
    }
    out_.open(*path_, load_existing ? std::ios::app | std::ios::binary
                                    : std::ios::trunc | std::ios::binary);
    if (!out_) throw ConfigError("cannot open cache file " + path_->string());
  }

  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  std::optional<CacheEntry> find(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      misses_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    hits_.fetch_add(1, std::memory_order_relaxed);
    return it->second;
  }

  bool contains(const std::string& key) const {
    std::shared_lock lock(mutex_);
    return entries_.contains(key);
  }

  void insert(CacheEntry entry) {
    if (entry.timestamp == 0) {
      entry.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
    }
    std::unique_lock lock(mutex_);
    if (out_.is_open()) {
      out_ << to_json(entry).dump() << '\n';
      out_.flush();
    }
    entries_[entry.key] = std::move(entry);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }
  std::size_t malformed_lines() const noexcept { return malformed_lines_; }
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, CacheEntry> entries_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
  std::size_t malformed_lines_ = 0;
};

struct PruneStats {
  std::size_t kept = 0;
  std::size_t removed = 0;
};

// Rewrites the file with one line per surviving key (latest value wins).
inline PruneStats prune_cache_file(const std::filesystem::path& path,
                                   const std::function<bool(const CacheEntry&)>& drop) {
  auto scan = scan_cache_file(path);
  std::unordered_map<std::string, std::size_t> latest;
  for (std::size_t i = 0; i < scan.entries.size(); ++i) latest[scan.entries[i].key] = i;

  PruneStats stats;
  stats.removed = scan.malformed_lines;
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    for (std::size_t i = 0; i < scan.entries.size(); ++i) {
      const auto& entry = scan.entries[i];
      if (latest.at(entry.key) != i || drop(entry)) {
        ++stats.removed;
        continue;
      }
      out << to_json(entry).dump() << '\n';
      ++stats.kept;
    }
  }
  std::filesystem::rename(tmp, path);
  return stats;
}

}  // namespace lampo
