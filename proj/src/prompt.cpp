#include "taskprompt/prompt.hpp"

#include <cctype>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

namespace {

std::string sentence(std::string_view s) {
  std::string out(text::trim(s));
  if (!out.empty() && out.back() != '.' && out.back() != '?' && out.back() != '!') out += '.';
  return out;
}

std::string indefinite_article(std::string_view next_word) {
  if (next_word.empty()) return "a";
  switch (std::tolower(static_cast<unsigned char>(next_word.front()))) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
    default: return "a";
  }
}

// "Tidy(conference room)" from "tidy conference room".
std::string predicate_goal(std::string_view task) {
  auto sp = task.find(' ');
  if (sp == std::string_view::npos) return text::capitalize(task) + "()";
  return text::capitalize(task.substr(0, sp)) + "(" + std::string(task.substr(sp + 1)) + ")";
}

// Sentences describing one object in a given style.
std::string describe_object(const ObjectDescriptor& obj, Style style, FeatureScope scope) {
  switch (style) {
    case Style::Terse: {
      std::string out = "Aware of " + obj.name;
      for (const auto& clause : render_feature_clauses(obj, style, scope)) out += ", " + clause;
      return out + ".";
    }
    case Style::Colloquial: {
      std::string adjectives;
      if (scope == FeatureScope::Full)
        for (const auto& f : obj.features) adjectives += f.value + " ";
      std::string phrase = adjectives + obj.name;
      return "I see " + indefinite_article(phrase) + " " + phrase + " in " + obj.location + ".";
    }
    case Style::Predicate: {
      std::string out = "Observe(" + obj.name + ").";
      for (const auto& clause : render_feature_clauses(obj, style, scope)) out += " " + clause + ".";
      return out;
    }
  }
  return {};
}

std::string render_example(const PromptExample& ex, const PromptConfig& config) {
  std::string out;
  if (config.delimiters) out += "(TASK) ";
  out += "Goal: " + sentence(ex.goal) + " ";
  if (!ex.context_clauses.empty()) {
    out += "Task context:";
    for (const auto& c : ex.context_clauses) out += " " + sentence(c);
    out += " ";
  }
  out += "Steps: ";
  if (config.elicit_goal) out += "(RESULT) " + *ex.result_clause + " (END RESULT) ";
  out += "\n";
  for (std::size_t i = 0; i < ex.steps.size(); ++i) {
    if (i) out += " \n";
    out += std::to_string(i + 1) + ". " + ex.steps[i];
  }
  out += config.delimiters ? " (END TASK)\n" : "\n\n";
  return out;
}

std::string render_full_context(const Scene& scene, std::size_t target_index,
                                 const PromptConfig& config) {
  auto view = select_context(scene, target_index, ContextScope::Full);
  std::vector<std::string> parts;
  for (std::size_t i = 1; i < view.objects.size(); ++i)
    parts.push_back(describe_object(*view.objects[i], config.style, config.feature_scope));
  if (parts.empty()) return {};
  if (config.delimiters) return "(CONTEXT) " + text::join(parts, " ") + " (END CONTEXT) \n";
  return "Context: " + text::join(parts, " ") + "\n";
}

std::string render_partial_task(const Scene& scene, std::size_t target_index,
                                const PromptConfig& config) {
  const auto& target = scene.objects[target_index];
  const bool with_context = config.context_scope != ContextScope::None;
  std::string out = config.delimiters ? "(TASK) " : "";

  switch (config.style) {
    case Style::Terse:
      out += "Goal: " + sentence(scene.task_phrase) + " ";
      if (with_context) {
        out += "Task context: I am in " + scene.agent_location + ". " +
               describe_object(target, config.style, config.feature_scope) + " ";
      }
      break;
    case Style::Colloquial:
      if (with_context) {
        out += "I am in " + scene.agent_location + ". " +
               describe_object(target, config.style, config.feature_scope) +
               " What are steps to " + scene.task_phrase + " with " + target.name + " in it? ";
      } else {
        out += "What are steps to " + scene.task_phrase + "? ";
      }
      break;
    case Style::Predicate:
      out += predicate_goal(scene.task_phrase) + ". ";
      if (with_context) out += describe_object(target, config.style, config.feature_scope) + " ";
      break;
  }

  if (config.elicit_goal) {
    out += "Steps: (RESULT) ";
  } else if (config.style == Style::Predicate) {
    out += "Steps:";
  } else {
    out += "Steps: 1. ";
  }
  return out;
}

RenderedPrompt render(const Scene& scene, std::size_t target_index, const PromptConfig& config,
                      const ExampleLibrary& library) {
  check_object_index(scene, target_index);
  if (config.n_examples > library.size()) {
    throw Error(ErrorCode::NotEnoughExamples,
                "requested " + std::to_string(config.n_examples) + " examples, library has " +
                    std::to_string(library.size()));
  }
  if (config.elicit_goal) {
    for (std::size_t i = 0; i < config.n_examples; ++i) {
      if (!library[i].result_clause) {
        Error e(ErrorCode::ExampleMissingResult,
                "example '" + library[i].name + "' has no result clause");
        e.index = i;
        throw e;
      }
    }
  }

  RenderedPrompt prompt;
  if (config.n_examples > 0) {
    if (config.delimiters) prompt.text += "(EXAMPLES) ";
    for (std::size_t i = 0; i < config.n_examples; ++i)
      prompt.text += render_example(library[i], config);
    if (config.delimiters) prompt.text += "\n(END EXAMPLES) \n";
  }
  if (config.context_scope == ContextScope::Full)
    prompt.text += render_full_context(scene, target_index, config);
  prompt.text += render_partial_task(scene, target_index, config);

  if (config.elicit_goal) prompt.stop_sequences.emplace_back(kEndResult);
  if (config.delimiters) {
    prompt.stop_sequences.emplace_back(kEndTask);
  } else {
    prompt.stop_sequences.emplace_back("\n\n");
  }

  const auto& target = scene.objects[target_index];
  prompt.slots.object = target.name;
  prompt.slots.object_location = target.location;
  if (config.context_scope != ContextScope::None) {
    prompt.slots.agent_location = scene.agent_location;
    prompt.slots.feature_clauses = render_feature_clauses(target, config.style, config.feature_scope);
  }
  return prompt;
}

}  // namespace

std::string_view to_string(Style style) {
  switch (style) {
    case Style::Terse: return "terse";
    case Style::Colloquial: return "colloquial";
    case Style::Predicate: return "predicate";
  }
  return "?";
}

std::string_view to_string(FeatureScope scope) {
  return scope == FeatureScope::Full ? "full" : "name-only";
}

Style parse_style(std::string_view s) {
  auto v = text::to_lower(s);
  if (v == "terse") return Style::Terse;
  if (v == "colloquial") return Style::Colloquial;
  if (v == "predicate") return Style::Predicate;
  throw Error(ErrorCode::InvalidArgument, "unknown style '" + std::string(s) + "'");
}

FeatureScope parse_feature_scope(std::string_view s) {
  auto v = text::to_lower(s);
  if (v == "full") return FeatureScope::Full;
  if (v == "name-only" || v == "nameonly" || v == "none") return FeatureScope::NameOnly;
  throw Error(ErrorCode::InvalidArgument, "unknown feature scope '" + std::string(s) + "'");
}

ExampleLibrary load_example_library(std::string_view contents) {
  ExampleLibrary lib;
  for (const auto& line : text::keyed_lines(contents)) {
    if (line.key == "example") {
      lib.push_back(PromptExample{line.value, {}, {}, {}, std::nullopt});
      continue;
    }
    if (lib.empty())
      throw error_at_line(ErrorCode::MalformedLine, line.line_no, "entry before any 'example:' line");
    auto& ex = lib.back();
    if (line.key == "goal") {
      ex.goal = line.value;
    } else if (line.key == "context") {
      ex.context_clauses.push_back(line.value);
    } else if (line.key == "step") {
      if (!line.value.empty() && std::isdigit(static_cast<unsigned char>(line.value.front())))
        throw error_at_line(ErrorCode::MalformedLine, line.line_no, "steps must not carry numbers");
      ex.steps.push_back(line.value);
    } else if (line.key == "result") {
      ex.result_clause = line.value;
    } else {
      throw error_at_line(ErrorCode::MalformedLine, line.line_no, "unknown key '" + line.key + "'");
    }
  }
  for (const auto& ex : lib) {
    if (ex.goal.empty() || ex.steps.empty())
      throw Error(ErrorCode::MalformedLine, "example '" + ex.name + "' needs a goal and steps");
  }
  return lib;
}

ExampleLibrary load_example_library_file(const std::string& path) {
  return load_example_library(text::read_file(path));
}

std::vector<std::string> render_feature_clauses(const ObjectDescriptor& obj, Style style,
                                                FeatureScope scope) {
  std::vector<std::string> out;
  if (style == Style::Predicate) {
    out.push_back("Located-on(" + obj.name + ", " + obj.location + ")");
    if (scope == FeatureScope::Full)
      for (const auto& f : obj.features)
        out.push_back(text::capitalize(f.attribute) + "(" + obj.name + ", " + f.value + ")");
    return out;
  }
  if (scope == FeatureScope::Full)
    for (const auto& f : obj.features) out.push_back(obj.name + " " + f.attribute + " is " + f.value);
  out.push_back(obj.name + " is in " + obj.location);
  return out;
}

RenderedPrompt render_prompt(const Scene& scene, std::size_t target_index,
                             const PromptConfig& config, const ExampleLibrary& library) {
  return render(scene, target_index, config, library);
}

RenderedPrompt render_goal_eliciting_prompt(const Scene& scene, std::size_t target_index,
                                            const PromptConfig& config,
                                            const ExampleLibrary& library) {
  PromptConfig c = config;
  c.elicit_goal = true;
  return render(scene, target_index, c, library);
}

std::string append_steps(std::string_view prompt_text, const std::vector<std::string>& steps) {
  std::string out(prompt_text);
  if (steps.empty()) return out;
  if (out.size() < 3 || out.compare(out.size() - 3, 3, "1. ") != 0) out += " 1. ";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out += steps[i];
    out += "\n" + std::to_string(i + 2) + ". ";
  }
  return out;
}

}  // namespace taskprompt
