#include "taskprompt/session.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::regex kBoundary(R"(\n\s*\d+\.\s)");

// First step of a batch completion and whether the model stopped right after it.
std::pair<std::string, bool> first_step(const Choice& c) {
  std::smatch m;
  if (std::regex_search(c.text, m, kBoundary))
    return {std::string(text::trim(c.text.substr(0, m.position(0)))), false};
  return {std::string(text::trim(c.text)), c.finish_reason == FinishReason::Stop};
}

}  // namespace

std::string_view to_string(ProposalSource s) { return s == ProposalSource::Batch ? "batch" : "iterative"; }

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Active: return "active";
    case SessionStatus::Finished: return "finished";
    case SessionStatus::Abandoned: return "abandoned";
  }
  return "active";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Accept: return "accept";
    case Verdict::Reject: return "reject";
    case Verdict::Edit: return "edit";
  }
  return "accept";
}

Verdict parse_verdict(std::string_view s) {
  auto v = text::to_lower(s);
  if (v == "accept") return Verdict::Accept;
  if (v == "reject") return Verdict::Reject;
  if (v == "edit") return Verdict::Edit;
  throw Error(ErrorCode::InvalidArgument, "unknown verdict '" + std::string(s) + "'");
}

std::string Session::current_prompt() const {
  std::vector<std::string> steps;
  for (const auto& s : accepted_steps) steps.push_back(s.raw);
  return append_steps(prompt, steps);
}

SessionEngine::SessionEngine(Gateway& gateway, AgentGrammar grammar, ActionLexicon lexicon,
                             ExampleLibrary library, DecodePolicy policy)
    : gateway_(gateway),
      grammar_(std::move(grammar)),
      lexicon_(std::move(lexicon)),
      library_(std::move(library)),
      policy_(policy) {
  grammar_.add_lexicon(lexicon_);
}

Session SessionEngine::open(std::string id, std::string scene_id, const Scene& scene,
                            std::size_t target_index, const SessionConfig& config) const {
  config.generation.validate();
  auto rendered = render_prompt(scene, target_index, config.prompt, library_);
  Session s;
  s.id = std::move(id);
  s.scene_id = std::move(scene_id);
  s.scene = scene;
  s.target_index = target_index;
  s.config = config;
  s.prompt = rendered.text;
  s.stop_sequences = rendered.stop_sequences;
  refresh(s);
  return s;
}

std::vector<Proposal> SessionEngine::fetch_proposals(Session& s) const {
  const auto prompt = s.current_prompt();
  const auto source =
      s.config.strategy == Strategy::Batch ? ProposalSource::Batch : ProposalSource::IterativeBranch;
  std::vector<Proposal> raw;
  if (s.config.strategy == Strategy::Batch) {
    auto params = s.config.generation;
    params.stop_sequences = s.stop_sequences;
    for (const auto& c : gateway_.complete(prompt, params).choices) {
      auto [step, ends] = first_step(c);
      if (step.empty()) {
        raw.push_back({{}, std::string(kEndTask), source, std::exp(c.mean_logprob()), true});
      } else {
        raw.push_back({{}, step, source, std::exp(c.mean_logprob()), ends});
      }
    }
  } else {
    for (const auto& e : expand_step(prompt, s.stop_sequences, gateway_, lexicon_, policy_,
                                     s.config.generation.temperature)) {
      if (e.step_text.empty()) {
        raw.push_back({{}, std::string(kEndTask), source, e.choice.probability, true});
      } else {
        raw.push_back({{}, e.step_text, source, e.choice.probability, e.ends_task});
      }
    }
  }

  std::vector<Proposal> out;
  std::vector<std::string> seen;
  for (auto& p : raw) {
    auto key = normalize_step(p.step_text);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    if (std::find(s.rejected_texts.begin(), s.rejected_texts.end(), key) != s.rejected_texts.end()) continue;
    seen.push_back(key);
    out.push_back(std::move(p));
  }
  return out;
}

void SessionEngine::refresh(Session& s) const {
  s.pending_proposals = fetch_proposals(s);
  for (auto& p : s.pending_proposals) p.id = "p" + std::to_string(s.next_proposal++);
  s.needs_instruction = s.pending_proposals.empty();
}

void SessionEngine::accept_step(Session& s, const std::string& text, bool ends_task) const {
  auto parsed = parse_step(text, grammar_, s.accepted_steps.size() + 1);
  if (const auto* u = std::get_if<UnparsableStep>(&parsed)) {
    throw Error(ErrorCode::UneditableParse, std::string(to_string(u->reason)) + ": '" + text + "'");
  }
  s.accepted_steps.push_back(std::get<ParsedStep>(parsed));
  s.rejected_texts.clear();
  if (ends_task) {
    s.pending_proposals = {Proposal{"p" + std::to_string(s.next_proposal++), std::string(kEndTask),
                                    s.config.strategy == Strategy::Batch ? ProposalSource::Batch
                                                                         : ProposalSource::IterativeBranch,
                                    1.0, true}};
    s.needs_instruction = false;
    return;
  }
  refresh(s);
}

void SessionEngine::apply(Session& s, const Decision& d) const {
  if (s.status != SessionStatus::Active)
    throw Error(ErrorCode::SessionNotActive, "session '" + s.id + "' is " + std::string(to_string(s.status)));

  auto it = std::find_if(s.pending_proposals.begin(), s.pending_proposals.end(),
                         [&](const Proposal& p) { return p.id == d.proposal_id; });
  const bool free_edit = d.verdict == Verdict::Edit && d.proposal_id.empty() && s.needs_instruction;
  if (it == s.pending_proposals.end() && !free_edit)
    throw Error(ErrorCode::UnknownProposal, "no pending proposal '" + d.proposal_id + "'");

  switch (d.verdict) {
    case Verdict::Accept:
      if (it->is_end()) {
        finish(s, false);
        return;
      }
      accept_step(s, it->step_text, it->ends_task);
      return;
    case Verdict::Edit: {
      auto edited = std::string(text::trim(d.edited_text));
      if (edited.empty()) throw Error(ErrorCode::InvalidArgument, "edit needs edited_text");
      accept_step(s, edited, false);
      return;
    }
    case Verdict::Reject: {
      s.rejected_texts.push_back(normalize_step(it->step_text));
      s.pending_proposals.erase(it);
      if (s.pending_proposals.empty()) refresh(s);
      return;
    }
  }
}

const LearnedTask& SessionEngine::finish(Session& s, bool elicit_goal) const {
  if (s.status != SessionStatus::Active)
    throw Error(ErrorCode::SessionNotActive, "session '" + s.id + "' is " + std::string(to_string(s.status)));
  if (s.accepted_steps.empty()) throw Error(ErrorCode::NoAcceptedSteps, "session '" + s.id + "' has no steps");

  LearnedTask task;
  task.task_phrase = s.scene.task_phrase;
  task.object = s.scene.objects.at(s.target_index).name;
  for (const auto& step : s.accepted_steps) task.steps.push_back(step.raw);
  if (elicit_goal) {
    auto rendered = render_goal_eliciting_prompt(s.scene, s.target_index, s.config.prompt, library_);
    auto params = s.config.generation;
    params.n_responses = 1;
    params.stop_sequences = rendered.stop_sequences;
    auto completion = gateway_.complete(rendered.text, params);
    try {
      task.goal = parse_goal(completion.choices.front().text, grammar_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::GoalPatternMismatch) throw;
      task.goal_unparsed = true;
    }
  }
  s.learned = std::move(task);
  s.pending_proposals.clear();
  s.needs_instruction = false;
  s.status = SessionStatus::Finished;
  return *s.learned;
}

ordered_json to_json(const SessionConfig& c) {
  ordered_json j;
  j["style"] = to_string(c.prompt.style);
  j["delimiters"] = c.prompt.delimiters;
  j["n_examples"] = c.prompt.n_examples;
  j["context"] = to_string(c.prompt.context_scope);
  j["features"] = to_string(c.prompt.feature_scope);
  j["strategy"] = to_string(c.strategy);
  j["temperature"] = c.generation.temperature;
  j["n_responses"] = c.generation.n_responses;
  j["max_tokens"] = c.generation.max_tokens;
  return j;
}

SessionConfig session_config_from_json(const json& j) {
  SessionConfig c;
  try {
    c.prompt.style = parse_style(j.value("style", "terse"));
    c.prompt.delimiters = j.value("delimiters", true);
    c.prompt.n_examples = j.value("n_examples", std::size_t{1});
    c.prompt.context_scope = parse_context_scope(j.value("context", "partial"));
    c.prompt.feature_scope = parse_feature_scope(j.value("features", "full"));
    c.strategy = parse_strategy(j.value("strategy", "batch"));
    c.generation.temperature = j.value("temperature", 0.0);
    c.generation.n_responses = j.value("n_responses", 1);
    c.generation.max_tokens = j.value("max_tokens", 128);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad session config: ") + e.what());
  }
  c.generation.validate();
  return c;
}

ordered_json to_json(const LearnedTask& t) {
  ordered_json j;
  j["task_phrase"] = t.task_phrase;
  j["object"] = t.object;
  j["steps"] = t.steps;
  if (t.goal) {
    j["goal"] = {{"object", t.goal->object_phrase},
                 {"relation", t.goal->relation},
                 {"target", t.goal->target_phrase},
                 {"raw", t.goal->raw}};
  } else {
    j["goal"] = nullptr;
  }
  j["goal_unparsed"] = t.goal_unparsed;
  return j;
}

ordered_json to_json(const Session& s) {
  ordered_json j;
  j["id"] = s.id;
  j["scene_id"] = s.scene_id;
  j["task_phrase"] = s.scene.task_phrase;
  j["target_index"] = s.target_index;
  j["object"] = s.scene.objects.at(s.target_index).name;
  j["config"] = to_json(s.config);
  j["status"] = to_string(s.status);
  j["needs_instruction"] = s.needs_instruction;
  j["prompt"] = s.current_prompt();
  auto steps = ordered_json::array();
  for (const auto& p : s.accepted_steps) {
    ordered_json st;
    st["index"] = p.index;
    st["text"] = p.raw;
    st["verb"] = p.verb;
    st["object"] = p.object_phrase;
    if (p.destination) {
      st["destination"] = {{"preposition", p.destination->preposition}, {"phrase", p.destination->phrase}};
    }
    steps.push_back(std::move(st));
  }
  j["accepted_steps"] = std::move(steps);
  auto props = ordered_json::array();
  for (const auto& p : s.pending_proposals) {
    props.push_back({{"id", p.id},
                     {"step_text", p.step_text},
                     {"source", to_string(p.source)},
                     {"score", p.score},
                     {"ends_task", p.ends_task}});
  }
  j["pending_proposals"] = std::move(props);
  j["learned_task"] = s.learned ? to_json(*s.learned) : ordered_json(nullptr);
  return j;
}

}  // namespace taskprompt
