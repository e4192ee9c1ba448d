#pragma once

// Comparison prompt templates.

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lampo/core.hpp"
#include "lampo/digest.hpp"
#include "lampo/error.hpp"

namespace lampo {

inline constexpr std::string_view kItem1 = "{item1}";
inline constexpr std::string_view kItem2 = "{item2}";
inline constexpr std::string_view kAspect1 = "{aspect1}";
inline constexpr std::string_view kAspect2 = "{aspect2}";

namespace detail {

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace detail

class PromptTemplate {
 public:
  PromptTemplate(std::string name, std::string text) : name_(std::move(name)), text_(std::move(text)) {
    if (detail::count_occurrences(text_, kItem1) != 1 ||
        detail::count_occurrences(text_, kItem2) != 1) {
      throw ConfigError("template '" + name_ + "' must contain {item1} and {item2} exactly once");
    }
    const auto a1 = detail::count_occurrences(text_, kAspect1);
    const auto a2 = detail::count_occurrences(text_, kAspect2);
    if (a1 != a2 || a1 > 1) {
      throw ConfigError("template '" + name_ + "' must contain both aspect placeholders once, or neither");
    }
    aspect_based_ = a1 == 1;
    digest_ = sha256_hex(text_);
  }

  const std::string& name() const noexcept { return name_; }
  const std::string& text() const noexcept { return text_; }
  bool aspect_based() const noexcept { return aspect_based_; }
  // Identity used in cache keys; changes whenever the template text changes.
  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string name_;
  std::string text_;
  bool aspect_based_ = false;
  std::string digest_;
};

// Single left-to-right pass, so placeholder-like text inside the items is
// copied verbatim rather than substituted again.
inline std::string render_prompt(const PromptTemplate& tmpl, const TextItem& a, const TextItem& b) {
  if (tmpl.aspect_based() && (!a.aspect || !b.aspect)) {
    throw ValidationError("template '" + tmpl.name() + "' requires an aspect for both passages");
  }
  const std::array<std::pair<std::string_view, const std::string*>, 4> slots{{
      {kItem1, &a.text},
      {kItem2, &b.text},
      {kAspect1, a.aspect ? &*a.aspect : nullptr},
      {kAspect2, b.aspect ? &*b.aspect : nullptr},
  }};
  std::string_view text = tmpl.text();
  std::string out;
  out.reserve(text.size() + a.text.size() + b.text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool replaced = false;
    if (text[pos] == '{') {
      for (const auto& [placeholder, value] : slots) {
        if (value != nullptr && text.compare(pos, placeholder.size(), placeholder) == 0) {
          out += *value;
          pos += placeholder.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(text[pos++]);
  }
  return out;
}

inline PromptTemplate load_template(const std::filesystem::path& path, std::string name = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open template file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (name.empty()) name = path.stem().string();
  return PromptTemplate(std::move(name), buf.str());
}

}  // namespace lampo
