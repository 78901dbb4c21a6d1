#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "taskprompt/llm.hpp"
#include "taskprompt/prompt.hpp"

namespace taskprompt {

/// Words the agent can act on. Matching is case-insensitive on the
/// candidate token with leading whitespace and trailing punctuation removed.
class ActionLexicon {
 public:
  ActionLexicon() = default;
  explicit ActionLexicon(std::set<std::string> words);

  static ActionLexicon parse(std::string_view contents);
  static ActionLexicon load_file(const std::string& path);

  bool contains(std::string_view token) const;
  const std::set<std::string>& words() const { return words_; }
  bool empty() const { return words_.empty(); }

 private:
  std::set<std::string> words_;
};

/// Candidate word for a token: leading whitespace and trailing punctuation removed.
std::string candidate_word(std::string_view token);

struct DecodePolicy {
  double known_threshold = 0.10;
  double fallback_threshold = 0.60;
  std::size_t max_branches_per_step = 3;
  std::size_t max_steps = 10;
  int max_tokens_per_step = 128;
  int top_logprobs = 5;

  void validate() const;
};

enum class Provenance { Known, Fallback, ArgmaxMiss };
std::string_view to_string(Provenance p);

struct WordChoice {
  std::string word;
  double probability = 0.0;
  Provenance provenance = Provenance::Known;

  bool operator==(const WordChoice&) const = default;
};

struct ForcedWord {
  std::size_t step = 0;
  std::string word;
  double probability = 0.0;
  Provenance provenance = Provenance::Known;

  bool operator==(const ForcedWord&) const = default;
};

struct DecodedResponse {
  std::string text;
  std::vector<ForcedWord> forced_words;
  bool complete = false;        // terminated by the end delimiter
  std::optional<std::string> error;  // gateway failure that ended this branch

  double score() const;  // product of forced-word probabilities
  bool operator==(const DecodedResponse&) const = default;
};

/// Three tiers: known words at or above known_threshold; otherwise any word
/// at or above fallback_threshold; otherwise the argmax. Capped at
/// max_branches_per_step by descending probability. Never empty for a
/// non-empty distribution.
std::vector<WordChoice> select_first_words(const TokenDistribution& dist, const ActionLexicon& lexicon,
                                           const DecodePolicy& policy);

/// One candidate step produced at a step boundary.
struct StepExpansion {
  WordChoice choice;
  std::string step_text;  // forced word plus its continuation up to the boundary
  bool ends_task = false;  // continuation stopped without reaching another step
  bool truncated = false;  // hit the token limit mid-step
};

/// Queries the first-word distribution at `prompt_text` (which must end at a
/// step-number position), forces each admissible word and fetches the rest
/// of that step.
std::vector<StepExpansion> expand_step(std::string_view prompt_text,
                                       const std::vector<std::string>& stop_sequences,
                                       Gateway& gateway, const ActionLexicon& lexicon,
                                       const DecodePolicy& policy, double temperature = 0.0);

/// Breadth-limited search over forced first words, one level per step.
/// Leaves come back sorted by descending score, then text.
std::vector<DecodedResponse> decode_iteratively(const RenderedPrompt& prompt, Gateway& gateway,
                                                const ActionLexicon& lexicon,
                                                const DecodePolicy& policy,
                                                double temperature = 0.0);

}  // namespace taskprompt
