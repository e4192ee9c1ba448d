#pragma once

// Built-in tasks.

#include <string>
#include <string_view>
#include <vector>

#include "lampo/core.hpp"
#include "lampo/prompt_template.hpp"

namespace lampo {

enum class MetricKind { kAccuracy, kMacroF1, kF1OfLabel };

struct MetricSpec {
  MetricKind kind = MetricKind::kAccuracy;
  std::size_t label = 0;  // only for kF1OfLabel

  bool operator==(const MetricSpec&) const = default;
};

// A dataset known to the tool: label order, reporting metric and comparison prompt.
struct TaskSpec {
  std::string name;
  std::vector<std::string> labels;
  MetricSpec metric;
  std::string template_text;

  OrderedLabelSpace label_space() const { return OrderedLabelSpace(labels); }
  PromptTemplate prompt_template() const { return PromptTemplate(name, template_text); }
};

namespace detail {

inline std::string comparison_template(std::string_view label_list, std::string_view adjective) {
  std::string out = "Given two Passages, compare their sentiments with labels from [";
  out += label_list;
  out += "].\n\nPassage A: {item1}\n\nPassage B: {item2}\n\nWhich Passage is more ";
  out += adjective;
  out += " in terms of its sentiment?\n\nOutput Passage A or Passage B:";
  return out;
}

}  // namespace detail

inline const std::vector<TaskSpec>& builtin_tasks() {
  static const std::vector<TaskSpec> tasks = [] {
    const std::string five_way =
        "'very negative', 'negative', 'neutral', 'positive', 'very positive'";
    std::vector<TaskSpec> t;
    t.push_back({"twitter",
                 {"negative", "neutral", "positive"},
                 {MetricKind::kAccuracy, 0},
                 detail::comparison_template("'negative', 'neutral', 'positive'", "positive")});
    t.push_back({"sst5",
                 {"very negative", "negative", "neutral", "positive", "very positive"},
                 {MetricKind::kAccuracy, 0},
                 detail::comparison_template(five_way, "positive")});
    t.push_back({"yelp5",
                 {"very negative", "negative", "neutral", "positive", "very positive"},
                 {MetricKind::kAccuracy, 0},
                 detail::comparison_template(five_way, "positive")});
    t.push_back({"lap14",
                 {"negative", "neutral", "positive"},
                 {MetricKind::kAccuracy, 0},
                 "Given two Passages, compare their sentiments towards their respective aspects "
                 "with labels from ['negative', 'neutral', 'positive'].\n\n"
                 "Passage A: {item1} (sentiment towards {aspect1}),\n\n"
                 "Passage B: {item2} (sentiment towards {aspect2})\n\n"
                 "Which Passage is more positive in terms of its sentiment towards its aspect?\n\n"
                 "Output Passage A or Passage B:"});
    t.push_back({"hate",
                 {"non-hate", "hate"},
                 {MetricKind::kMacroF1, 0},
                 detail::comparison_template("'non-hate', 'hate'", "hateful")});
    t.push_back({"offensive",
                 {"non-offensive", "offensive"},
                 {MetricKind::kMacroF1, 0},
                 detail::comparison_template("'non-offensive', 'offensive'", "offensive")});
    t.push_back({"irony",
                 {"non_irony", "irony"},
                 {MetricKind::kF1OfLabel, 1},
                 "Given two Passages, compare their irony with labels from ['non_irony', 'irony'].\n\n"
                 "Passage A: {item1}\n\nPassage B: {item2}\n\n"
                 "Which Passage is more ironic in terms of its sentiment?\n\n"
                 "Output Passage A or Passage B:"});
    return t;
  }();
  return tasks;
}

inline const TaskSpec& find_task(std::string_view name) {
  for (const auto& task : builtin_tasks()) {
    if (task.name == name) return task;
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

}  // namespace lampo
