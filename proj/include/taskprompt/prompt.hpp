#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "taskprompt/scene.hpp"

namespace taskprompt {

enum class Style { Terse, Colloquial, Predicate };
enum class FeatureScope { NameOnly, Full };

std::string_view to_string(Style style);
std::string_view to_string(FeatureScope scope);
Style parse_style(std::string_view s);
FeatureScope parse_feature_scope(std::string_view s);

struct PromptConfig {
  Style style = Style::Terse;
  bool delimiters = true;
  std::size_t n_examples = 1;
  ContextScope context_scope = ContextScope::Partial;
  FeatureScope feature_scope = FeatureScope::Full;
  bool elicit_goal = false;

  bool operator==(const PromptConfig&) const = default;
};

/// A hand-authored worked task. Steps carry no numbers; numbering is
/// applied when rendered.
struct PromptExample {
  std::string name;
  std::string goal;
  std::vector<std::string> context_clauses;
  std::vector<std::string> steps;
  std::optional<std::string> result_clause;

  bool operator==(const PromptExample&) const = default;
};

using ExampleLibrary = std::vector<PromptExample>;

ExampleLibrary load_example_library(std::string_view text);
ExampleLibrary load_example_library_file(const std::string& path);

/// Template slot bindings used for one rendering.
struct PromptSlots {
  std::string object;
  std::vector<std::string> feature_clauses;
  std::string object_location;
  std::string agent_location;
};

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> stop_sequences;
  PromptSlots slots;
};

inline constexpr std::string_view kEndTask = "(END TASK)";
inline constexpr std::string_view kEndResult = "(END RESULT)";

/// Per-object clauses. Terse/Colloquial: "<name> <attr> is <value>" for each
/// feature then "<name> is in <location>". Predicate: "Located-on(<name>,
/// <location>)" then "<Attr>(<name>, <value>)". NameOnly keeps only the
/// location clause.
std::vector<std::string> render_feature_clauses(const ObjectDescriptor& obj, Style style,
                                                FeatureScope scope);

RenderedPrompt render_prompt(const Scene& scene, std::size_t target_index,
                             const PromptConfig& config, const ExampleLibrary& library);

/// Same as render_prompt with elicit_goal forced on.
RenderedPrompt render_goal_eliciting_prompt(const Scene& scene, std::size_t target_index,
                                            const PromptConfig& config,
                                            const ExampleLibrary& library);

/// Appends accepted steps to a prompt that ends at "1. " and opens the next
/// step number, e.g. "...Steps: 1. Pick up can\n2. ". Empty `steps` returns
/// the prompt unchanged.
std::string append_steps(std::string_view prompt_text, const std::vector<std::string>& steps);

}  // namespace taskprompt
