#include "taskprompt/parser.hpp"

#include <algorithm>
#include <cctype>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

namespace {

const std::set<std::string> kConjunctions{"and", "or", "then", "but", "if", "while", "until"};

bool word_ok(std::string_view w) {
  return std::all_of(w.begin(), w.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '\'';
  });
}

std::string_view strip_trailing_punct(std::string_view s) {
  s = text::rtrim(s);
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == ',' || s.back() == ';'))
    s = text::rtrim(s.substr(0, s.size() - 1));
  return s;
}

// "<digits>." at the start of a line; returns the offset of the step text.
std::optional<std::size_t> numbered_prefix(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  std::size_t j = i;
  while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
  if (j == i || j >= line.size() || line[j] != '.') return std::nullopt;
  if (j + 1 < line.size() && !std::isspace(static_cast<unsigned char>(line[j + 1]))) return std::nullopt;
  return j + 1;
}

std::vector<std::string> drop_determiners(const std::vector<std::string>& words, const AgentGrammar& g) {
  std::vector<std::string> out;
  for (const auto& w : words)
    if (!g.determiners.count(w)) out.push_back(w);
  return out;
}

}  // namespace

std::string_view to_string(UnparsableReason r) {
  switch (r) {
    case UnparsableReason::UnknownVerb: return "UnknownVerb";
    case UnparsableReason::NoObject: return "NoObject";
    case UnparsableReason::TrailingGarbage: return "TrailingGarbage";
  }
  return "?";
}

AgentGrammar AgentGrammar::parse(std::string_view contents) {
  AgentGrammar g;
  bool custom_preps = false;
  bool custom_dets = false;
  std::string section;
  auto add = [&](const std::string& key, std::string value, std::size_t line_no) {
    value = text::squeeze(text::to_lower(value));
    if (value.empty()) return;
    if (key == "verb") {
      g.verbs.insert(value);
    } else if (key == "verb-particle") {
      if (value.find(' ') == std::string::npos)
        throw error_at_line(ErrorCode::MalformedLine, line_no, "verb-particle entries are two words");
      g.verb_particles.insert(value);
    } else if (key == "preposition") {
      if (!custom_preps) g.prepositions.clear();
      custom_preps = true;
      g.prepositions.insert(value);
    } else if (key == "determiner") {
      if (!custom_dets) g.determiners.clear();
      custom_dets = true;
      g.determiners.insert(value);
    } else if (key == "location") {
      g.locations.insert(value);
    } else {
      throw error_at_line(ErrorCode::MalformedLine, line_no, "unknown grammar section '" + key + "'");
    }
  };

  auto lines = text::split(contents, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = text::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    auto colon = line.find(':');
    if (colon != std::string_view::npos) {
      auto key = text::to_lower(text::trim(line.substr(0, colon)));
      if (key.find(' ') == std::string::npos) {
        section = key;
        add(section, std::string(text::trim(line.substr(colon + 1))), i + 1);
        continue;
      }
    }
    if (section.empty())
      throw error_at_line(ErrorCode::MalformedLine, i + 1, "entry before any section header");
    add(section, std::string(line), i + 1);
  }
  return g;
}

AgentGrammar AgentGrammar::load_file(const std::string& path) { return parse(text::read_file(path)); }

void AgentGrammar::add_lexicon(const ActionLexicon& lexicon) {
  verbs.insert(lexicon.words().begin(), lexicon.words().end());
}

bool StepList::all_parsed() const {
  return std::all_of(steps.begin(), steps.end(),
                     [](const StepResult& s) { return std::holds_alternative<ParsedStep>(s); });
}

SplitResult split_steps(std::string_view response_text) {
  SplitResult out;
  std::string_view body = response_text;
  auto end = body.find(kEndTask);
  if (end != std::string_view::npos) {
    body = body.substr(0, end);
    out.terminated_by_delimiter = true;
  }
  if (text::trim(body).empty()) throw Error(ErrorCode::EmptyResponse, "response has no steps");

  for (const auto& line : text::split(body, '\n')) {
    auto numbered = numbered_prefix(line);
    if (numbered) {
      out.steps.push_back({out.steps.size() + 1, std::string(text::trim(std::string_view(line).substr(*numbered)))});
      continue;
    }
    auto content = text::trim(line);
    if (content.empty()) continue;
    if (out.steps.empty()) {
      out.steps.push_back({1, std::string(content)});
    } else {
      auto& raw = out.steps.back().raw;
      raw = raw.empty() ? std::string(content) : raw + " " + std::string(content);
    }
  }
  return out;
}

StepResult parse_step(std::string_view raw_step, const AgentGrammar& grammar, std::size_t index) {
  const std::string raw(text::trim(raw_step));
  auto fail = [&](UnparsableReason r) -> StepResult { return UnparsableStep{index, raw, r}; };

  auto words = text::split_words(text::to_lower(strip_trailing_punct(raw)));
  if (words.empty()) return fail(UnparsableReason::UnknownVerb);

  ParsedStep step;
  step.index = index;
  step.raw = raw;
  std::size_t i = 0;
  if (words.size() >= 2 && grammar.verb_particles.count(words[0] + " " + words[1])) {
    step.verb = words[0] + " " + words[1];
    i = 2;
  } else if (grammar.verbs.count(words[0])) {
    step.verb = words[0];
    i = 1;
  } else {
    return fail(UnparsableReason::UnknownVerb);
  }

  std::size_t prep = words.size();
  for (std::size_t k = i; k < words.size(); ++k) {
    if (grammar.prepositions.count(words[k])) {
      prep = k;
      break;
    }
  }
  std::vector<std::string> object(words.begin() + static_cast<long>(i), words.begin() + static_cast<long>(prep));
  object = drop_determiners(object, grammar);
  if (object.empty()) return fail(UnparsableReason::NoObject);

  auto garbage = [&](const std::vector<std::string>& ws) {
    return std::any_of(ws.begin(), ws.end(), [&](const std::string& w) {
      return !word_ok(w) || kConjunctions.count(w) || grammar.prepositions.count(w);
    });
  };
  if (garbage(object)) return fail(UnparsableReason::TrailingGarbage);
  step.object_phrase = text::join(object, " ");

  if (prep < words.size()) {
    std::vector<std::string> dest(words.begin() + static_cast<long>(prep) + 1, words.end());
    dest = drop_determiners(dest, grammar);
    if (dest.empty() || garbage(dest)) return fail(UnparsableReason::TrailingGarbage);
    step.destination = Destination{words[prep], text::join(dest, " ")};
  }
  return step;
}

StepList parse_response(std::string_view response_text, const AgentGrammar& grammar) {
  auto split = split_steps(response_text);
  StepList list;
  list.terminated_by_delimiter = split.terminated_by_delimiter;
  for (const auto& s : split.steps) list.steps.push_back(parse_step(s.raw, grammar, s.index));
  return list;
}

TaskGoal parse_goal(std::string_view response_text, const AgentGrammar& grammar) {
  std::string_view body = response_text;
  auto end = body.find(kEndResult);
  if (end != std::string_view::npos) body = body.substr(0, end);
  body = text::trim(body);
  auto mismatch = [&]() {
    return Error(ErrorCode::GoalPatternMismatch,
                 "expected 'The goal is that <object> is <preposition> <target>': '" + std::string(body) + "'");
  };
  static constexpr std::string_view kLead = "the goal is that";
  if (!text::istarts_with(body, kLead)) throw mismatch();

  auto words = text::split_words(text::to_lower(strip_trailing_punct(body.substr(kLead.size()))));
  for (std::size_t k = 1; k + 1 < words.size(); ++k) {
    if (words[k] != "is") continue;
    if (k + 1 >= words.size() || !grammar.prepositions.count(words[k + 1])) continue;
    auto object = drop_determiners({words.begin(), words.begin() + static_cast<long>(k)}, grammar);
    auto target = drop_determiners({words.begin() + static_cast<long>(k) + 2, words.end()}, grammar);
    if (object.empty() || target.empty()) break;
    return TaskGoal{text::join(object, " "), words[k + 1], text::join(target, " "), std::string(body)};
  }
  throw mismatch();
}

std::string normalize_phrase(std::string_view phrase, const AgentGrammar& grammar) {
  auto words = text::split_words(text::to_lower(strip_trailing_punct(phrase)));
  return text::join(drop_determiners(words, grammar), " ");
}

InterpretabilityVerdict judge_interpretable(const StepList& list, const AgentGrammar& grammar,
                                            const Scene& scene) {
  std::set<std::string> known;
  for (const auto& o : scene.objects) known.insert(o.name);
  for (const auto& l : scene.known_locations()) known.insert(text::to_lower(l));
  known.insert(grammar.locations.begin(), grammar.locations.end());

  InterpretabilityVerdict v;
  v.interpretable = !list.steps.empty();
  auto ground = [&](const std::string& phrase) {
    if (known.count(phrase)) return;
    v.interpretable = false;
    if (std::find(v.ungrounded_phrases.begin(), v.ungrounded_phrases.end(), phrase) == v.ungrounded_phrases.end())
      v.ungrounded_phrases.push_back(phrase);
  };
  for (const auto& s : list.steps) {
    const auto* parsed = std::get_if<ParsedStep>(&s);
    if (!parsed) {
      v.interpretable = false;
      continue;
    }
    ground(parsed->object_phrase);
    if (parsed->destination) ground(parsed->destination->phrase);
  }
  return v;
}

}  // namespace taskprompt
