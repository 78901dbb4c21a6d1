#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskprompt/decoder.hpp"
#include "taskprompt/harness.hpp"
#include "taskprompt/llm.hpp"
#include "taskprompt/parser.hpp"
#include "taskprompt/prompt.hpp"
#include "taskprompt/scene.hpp"

namespace taskprompt {

enum class ProposalSource { Batch, IterativeBranch };
std::string_view to_string(ProposalSource s);

struct Proposal {
  std::string id;
  std::string step_text;  // kEndTask for a proposal to stop here
  ProposalSource source = ProposalSource::Batch;
  double score = 0.0;
  bool ends_task = false;  // the generation stopped after this step

  bool is_end() const { return step_text == kEndTask; }
  bool operator==(const Proposal&) const = default;
};

enum class SessionStatus { Active, Finished, Abandoned };
std::string_view to_string(SessionStatus s);

struct SessionConfig {
  PromptConfig prompt;
  GenerationParams generation;  // stop sequences come from the rendered prompt
  Strategy strategy = Strategy::Batch;

  bool operator==(const SessionConfig&) const = default;
};

struct LearnedTask {
  std::string task_phrase;
  std::string object;
  std::vector<std::string> steps;
  std::optional<TaskGoal> goal;
  bool goal_unparsed = false;  // a goal was requested but did not parse

  bool operator==(const LearnedTask&) const = default;
};

struct Session {
  std::string id;
  std::string scene_id;
  Scene scene;
  std::size_t target_index = 0;
  SessionConfig config;
  std::string prompt;  // rendered without accepted steps
  std::vector<std::string> stop_sequences;
  std::vector<ParsedStep> accepted_steps;
  std::vector<Proposal> pending_proposals;
  std::vector<std::string> rejected_texts;  // normalized, for the current step
  SessionStatus status = SessionStatus::Active;
  bool needs_instruction = false;
  std::optional<LearnedTask> learned;
  std::size_t next_proposal = 1;

  /// Prompt with every accepted step appended, ending at the next step number.
  std::string current_prompt() const;
  bool operator==(const Session&) const = default;
};

enum class Verdict { Accept, Reject, Edit };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

struct Decision {
  std::string proposal_id;  // may be empty for Edit while NeedsInstruction
  Verdict verdict = Verdict::Accept;
  std::string edited_text;
};

/// Stateless rules of the instructor loop; sessions are plain values.
class SessionEngine {
 public:
  SessionEngine(Gateway& gateway, AgentGrammar grammar, ActionLexicon lexicon, ExampleLibrary library,
                DecodePolicy policy = {});

  Session open(std::string id, std::string scene_id, const Scene& scene, std::size_t target_index,
               const SessionConfig& config) const;
  void apply(Session& session, const Decision& decision) const;
  const LearnedTask& finish(Session& session, bool elicit_goal) const;

  const AgentGrammar& grammar() const { return grammar_; }

 private:
  std::vector<Proposal> fetch_proposals(Session& session) const;
  void refresh(Session& session) const;
  void accept_step(Session& session, const std::string& text, bool ends_task) const;

  Gateway& gateway_;
  AgentGrammar grammar_;
  ActionLexicon lexicon_;
  ExampleLibrary library_;
  DecodePolicy policy_;
};

nlohmann::ordered_json to_json(const Session& s);
nlohmann::ordered_json to_json(const LearnedTask& t);
nlohmann::ordered_json to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);

}  // namespace taskprompt
