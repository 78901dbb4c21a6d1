#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace taskprompt {

enum class ErrorCode {
  // scene files
  MalformedLine,
  MissingTask,
  MissingAgentLocation,
  DuplicateAttribute,
  IndexOutOfRange,
  // prompt rendering
  NotEnoughExamples,
  ExampleMissingResult,
  // completion backend
  BackendUnavailable,
  RateLimited,
  AuthFailure,
  MalformedBackendReply,
  CacheMiss,
  InvalidParams,
  // decoding
  BranchBudgetExceeded,
  // response parsing
  EmptyResponse,
  GoalPatternMismatch,
  // evaluation
  MissingGoldEntry,
  MissingConsensus,
  DuplicateRating,
  UnknownResponse,
  // sessions
  UnknownScene,
  UnknownSession,
  UnknownProposal,
  UneditableParse,
  SessionNotActive,
  NoAcceptedSteps,
  // general
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries a machine-readable code.
/// `line` is set for file-format errors; `index` for object/step indices.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  std::optional<std::size_t> line;
  std::optional<std::size_t> index;
  bool retryable = false;
  std::optional<std::chrono::milliseconds> retry_after;

 private:
  ErrorCode code_;
};

inline Error error_at_line(ErrorCode code, std::size_t line_no, const std::string& message) {
  Error e(code, "line " + std::to_string(line_no) + ": " + message);
  e.line = line_no;
  return e;
}

}  // namespace taskprompt
