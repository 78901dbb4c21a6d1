#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>

#include "taskprompt/backends.hpp"
#include "taskprompt/decoder.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/harness.hpp"
#include "taskprompt/llm.hpp"
#include "taskprompt/parser.hpp"
#include "taskprompt/prompt.hpp"
#include "taskprompt/scene.hpp"

namespace testing_support {

std::string data_path(const std::string& relative);
std::string golden_path(const std::string& relative);

taskprompt::Scene conference_room();
taskprompt::Scene kitchen();
taskprompt::Scene banquet();
taskprompt::ExampleLibrary library();
taskprompt::ActionLexicon lexicon();
/// Shipped grammar with the shipped lexicon folded in as verbs.
taskprompt::AgentGrammar grammar();
taskprompt::GoldStandard gold();

/// Scripted transcripts shipped under data/fixtures.
std::shared_ptr<taskprompt::ScriptedBackend> transcripts();

std::unique_ptr<taskprompt::Gateway> make_gateway(std::shared_ptr<taskprompt::CompletionBackend> backend,
                                                  const std::filesystem::path& cache_dir = {},
                                                  bool cache_only = false);

/// Every conference-room object rendered in one style, in the golden-file layout.
std::string render_all_objects(taskprompt::Style style);

/// Model label the checked-in replay cache was recorded under.
inline constexpr const char* kReplayModel = "text-davinci-001";

/// Cache-only gateway over data/cache; any miss is an error, never a call.
std::unique_ptr<taskprompt::Gateway> replay_gateway();

/// All three shipped scenes with gold, library, grammar, lexicon and a fixed clock.
taskprompt::SweepInputs sweep_inputs();

/// Reference can prompt: can target, terse, delimiters, one example, partial context.
taskprompt::RenderedPrompt can_prompt();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Backend that fails every call with a fixed error, counting attempts.
class FailingBackend : public taskprompt::CompletionBackend {
 public:
  explicit FailingBackend(taskprompt::ErrorCode code, bool retryable = true) : code_(code), retryable_(retryable) {}
  std::string send(const nlohmann::ordered_json& request) override;
  int calls() const { return calls_; }

 private:
  taskprompt::ErrorCode code_;
  bool retryable_;
  std::atomic<int> calls_{0};
};

}  // namespace testing_support
