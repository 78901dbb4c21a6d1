#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "taskprompt/decoder.hpp"
#include "taskprompt/scene.hpp"

namespace taskprompt {

/// The agent's restricted command grammar:
///   Step := Verb [Particle] ObjectNP [Prep DestNP]
struct AgentGrammar {
  std::set<std::string> verbs;
  std::set<std::string> verb_particles;  // "pick up", "put down", ...
  std::set<std::string> prepositions{"in", "into", "on", "onto", "to", "from"};
  std::set<std::string> determiners{"a", "an", "the", "all"};
  std::set<std::string> locations;  // known places beyond the scene's own

  /// Sections `verb:`, `verb-particle:`, `preposition:`, `location:` with one
  /// entry per following line; `key: value` on one line also works.
  static AgentGrammar parse(std::string_view contents);
  static AgentGrammar load_file(const std::string& path);

  /// Adds every lexicon word as a single-word verb.
  void add_lexicon(const ActionLexicon& lexicon);
};

struct Destination {
  std::string preposition;
  std::string phrase;

  bool operator==(const Destination&) const = default;
};

struct ParsedStep {
  std::size_t index = 0;
  std::string verb;
  std::string object_phrase;
  std::optional<Destination> destination;
  std::string raw;

  bool operator==(const ParsedStep&) const = default;
};

enum class UnparsableReason { UnknownVerb, NoObject, TrailingGarbage };
std::string_view to_string(UnparsableReason r);

struct UnparsableStep {
  std::size_t index = 0;
  std::string raw;
  UnparsableReason reason = UnparsableReason::UnknownVerb;

  bool operator==(const UnparsableStep&) const = default;
};

using StepResult = std::variant<ParsedStep, UnparsableStep>;

struct RawStep {
  std::size_t index = 0;
  std::string raw;

  bool operator==(const RawStep&) const = default;
};

struct StepList {
  std::vector<StepResult> steps;
  bool terminated_by_delimiter = false;

  bool all_parsed() const;
};

/// Raw split of a response continuing from "1. ". Text before the first
/// numbered line belongs to step 1. A trailing "(END TASK)" is stripped and
/// recorded. Throws EmptyResponse.
struct SplitResult {
  std::vector<RawStep> steps;
  bool terminated_by_delimiter = false;
};
SplitResult split_steps(std::string_view response_text);

/// Never throws; failures come back as UnparsableStep.
StepResult parse_step(std::string_view raw_step, const AgentGrammar& grammar, std::size_t index = 1);

StepList parse_response(std::string_view response_text, const AgentGrammar& grammar);

struct TaskGoal {
  std::string object_phrase;
  std::string relation;
  std::string target_phrase;
  std::string raw;

  bool operator==(const TaskGoal&) const = default;
};

/// "The goal is that <NP> is <prep> <NP>". Throws GoalPatternMismatch.
TaskGoal parse_goal(std::string_view response_text, const AgentGrammar& grammar);

struct InterpretabilityVerdict {
  bool interpretable = false;
  std::vector<std::string> ungrounded_phrases;
};

/// Interpretable iff every step parsed and every object/destination phrase
/// names a scene object, a scene location or a grammar location.
InterpretabilityVerdict judge_interpretable(const StepList& list, const AgentGrammar& grammar,
                                            const Scene& scene);

/// Lowercase, drop determiners and trailing punctuation, collapse spaces.
std::string normalize_phrase(std::string_view phrase, const AgentGrammar& grammar);

}  // namespace taskprompt
