#include "taskprompt/error.hpp"

namespace taskprompt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::MissingTask: return "MissingTask";
    case ErrorCode::MissingAgentLocation: return "MissingAgentLocation";
    case ErrorCode::DuplicateAttribute: return "DuplicateAttribute";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NotEnoughExamples: return "NotEnoughExamples";
    case ErrorCode::ExampleMissingResult: return "ExampleMissingResult";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::MalformedBackendReply: return "MalformedBackendReply";
    case ErrorCode::CacheMiss: return "CacheMiss";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::BranchBudgetExceeded: return "BranchBudgetExceeded";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::GoalPatternMismatch: return "GoalPatternMismatch";
    case ErrorCode::MissingGoldEntry: return "MissingGoldEntry";
    case ErrorCode::MissingConsensus: return "MissingConsensus";
    case ErrorCode::DuplicateRating: return "DuplicateRating";
    case ErrorCode::UnknownResponse: return "UnknownResponse";
    case ErrorCode::UnknownScene: return "UnknownScene";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::UnknownProposal: return "UnknownProposal";
    case ErrorCode::UneditableParse: return "UneditableParse";
    case ErrorCode::SessionNotActive: return "SessionNotActive";
    case ErrorCode::NoAcceptedSteps: return "NoAcceptedSteps";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace taskprompt
