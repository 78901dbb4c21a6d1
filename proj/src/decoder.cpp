#include "taskprompt/decoder.hpp"

#include <algorithm>
#include <cctype>
#include <exception>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

namespace {

// Position and length of the first "\n<digits>. " step boundary.
std::pair<std::size_t, std::size_t> find_boundary(std::string_view s) {
  for (std::size_t i = s.find('\n'); i != std::string_view::npos; i = s.find('\n', i + 1)) {
    std::size_t j = i + 1;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i + 1 && j < s.size() && s[j] == '.' && (j + 1 == s.size() || s[j + 1] == ' '))
      return {i, std::min(j + 2, s.size()) - i};
  }
  return {std::string_view::npos, 0};
}

bool is_end_marker(std::string_view word) { return word.empty() || word.front() == '('; }

struct Node {
  std::string text;
  std::vector<ForcedWord> forced;
  std::size_t step = 1;
};

// Node text minus the trailing "\nK. " that was opened for the next step.
std::string without_open_number(const Node& node) {
  auto text = node.text;
  const auto open = "\n" + std::to_string(node.step) + ". ";
  if (text.size() >= open.size() && text.compare(text.size() - open.size(), open.size(), open) == 0)
    text.resize(text.size() - open.size());
  return std::string(text::rtrim(text));
}

}  // namespace

ActionLexicon::ActionLexicon(std::set<std::string> words) {
  for (const auto& w : words) {
    auto v = text::to_lower(text::trim(w));
    if (!v.empty()) words_.insert(std::move(v));
  }
}

ActionLexicon ActionLexicon::parse(std::string_view contents) {
  std::set<std::string> words;
  for (const auto& line : text::split(contents, '\n')) {
    auto w = text::trim(line);
    if (w.empty() || w.front() == '#') continue;
    words.emplace(w);
  }
  return ActionLexicon(std::move(words));
}

ActionLexicon ActionLexicon::load_file(const std::string& path) { return parse(text::read_file(path)); }

std::string candidate_word(std::string_view token) {
  auto w = text::ltrim(token);
  while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back())) && w.back() != '\'' &&
         w.back() != ')')
    w.remove_suffix(1);
  return std::string(w);
}

bool ActionLexicon::contains(std::string_view token) const {
  auto w = text::to_lower(candidate_word(token));
  return !w.empty() && words_.count(w) > 0;
}

void DecodePolicy::validate() const {
  if (!(known_threshold >= 0.0 && known_threshold <= fallback_threshold && fallback_threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "thresholds must satisfy 0 <= known <= fallback <= 1");
  if (max_branches_per_step < 1) throw Error(ErrorCode::InvalidArgument, "max_branches_per_step must be >= 1");
  if (top_logprobs < 1 || top_logprobs > 5) throw Error(ErrorCode::InvalidArgument, "top_logprobs must be in [1,5]");
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Known: return "known";
    case Provenance::Fallback: return "fallback";
    case Provenance::ArgmaxMiss: return "argmax-miss";
  }
  return "?";
}

double DecodedResponse::score() const {
  double s = 1.0;
  for (const auto& f : forced_words) s *= f.probability;
  return s;
}

std::vector<WordChoice> select_first_words(const TokenDistribution& dist, const ActionLexicon& lexicon,
                                           const DecodePolicy& policy) {
  auto entries = dist.entries;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  // One candidate per normalized word; the most probable spelling wins.
  std::vector<std::pair<std::string, double>> unique;
  std::set<std::string> seen;
  for (const auto& [token, p] : entries) {
    if (seen.insert(text::to_lower(candidate_word(token))).second)
      unique.emplace_back(std::string(text::ltrim(token)), p);
  }

  std::vector<WordChoice> out;
  auto take = [&](auto pred, Provenance prov) {
    for (const auto& [word, p] : unique) {
      if (out.size() == policy.max_branches_per_step) break;
      if (pred(word, p)) out.push_back({word, p, prov});
    }
  };
  take([&](const std::string& w, double p) { return p >= policy.known_threshold && lexicon.contains(w); },
       Provenance::Known);
  if (out.empty())
    take([&](const std::string&, double p) { return p >= policy.fallback_threshold; }, Provenance::Fallback);
  if (out.empty() && !unique.empty())
    out.push_back({unique.front().first, unique.front().second, Provenance::ArgmaxMiss});
  return out;
}

std::vector<StepExpansion> expand_step(std::string_view prompt_text,
                                       const std::vector<std::string>& stop_sequences,
                                       Gateway& gateway, const ActionLexicon& lexicon,
                                       const DecodePolicy& policy, double temperature) {
  auto dist = gateway.first_token_distribution(prompt_text, stop_sequences, policy.top_logprobs);
  if (dist.entries.empty())
    throw Error(ErrorCode::MalformedBackendReply, "empty first-token distribution");

  std::vector<StepExpansion> out;
  for (const auto& choice : select_first_words(dist, lexicon, policy)) {
    StepExpansion e{choice, {}, false, false};
    if (is_end_marker(choice.word)) {
      e.ends_task = true;
      out.push_back(std::move(e));
      continue;
    }
    GenerationParams params;
    params.temperature = temperature;
    params.max_tokens = policy.max_tokens_per_step;
    params.stop_sequences = stop_sequences;
    std::string forced_prompt(prompt_text);
    forced_prompt += choice.word;
    auto completion = gateway.complete(forced_prompt, params);
    const auto& c = completion.choices.front();

    auto [pos, len] = find_boundary(c.text);
    if (pos != std::string::npos) {
      e.step_text = std::string(text::rtrim(choice.word + c.text.substr(0, pos)));
    } else {
      e.step_text = std::string(text::rtrim(choice.word + c.text));
      if (c.finish_reason == FinishReason::Length) {
        e.truncated = true;
      } else {
        e.ends_task = true;
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<DecodedResponse> decode_iteratively(const RenderedPrompt& prompt, Gateway& gateway,
                                                const ActionLexicon& lexicon,
                                                const DecodePolicy& policy, double temperature) {
  policy.validate();
  if (lexicon.empty()) throw Error(ErrorCode::InvalidArgument, "iterative decoding needs a non-empty lexicon");

  std::vector<DecodedResponse> leaves;
  if (policy.max_steps == 0) {
    leaves.emplace_back();
    return leaves;
  }

  const std::size_t leaf_budget = policy.max_branches_per_step * policy.max_branches_per_step;
  std::vector<Node> frontier{Node{}};
  while (!frontier.empty()) {
    const auto count = static_cast<long>(frontier.size());
    std::vector<std::vector<StepExpansion>> expansions(frontier.size());
    std::vector<std::exception_ptr> failures(frontier.size());

#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) {
      try {
        expansions[i] = expand_step(prompt.text + frontier[i].text, prompt.stop_sequences, gateway,
                                    lexicon, policy, temperature);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }

    std::vector<Node> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto& node = frontier[i];
      if (failures[i]) {
        if (node.forced.empty()) std::rethrow_exception(failures[i]);
        DecodedResponse failed{without_open_number(node), node.forced, false, std::nullopt};
        try {
          std::rethrow_exception(failures[i]);
        } catch (const Error& e) {
          failed.error = std::string(to_string(e.code()));
        } catch (const std::exception& e) {
          failed.error = e.what();
        }
        leaves.push_back(std::move(failed));
        continue;
      }
      for (const auto& e : expansions[i]) {
        if (e.step_text.empty() && e.ends_task) {
          // The model closed the task at this boundary.
          leaves.push_back({without_open_number(node), node.forced, true, std::nullopt});
          continue;
        }
        Node child = node;
        child.forced.push_back({node.step, e.choice.word, e.choice.probability, e.choice.provenance});
        child.text += e.step_text;
        if (e.ends_task || e.truncated || child.step >= policy.max_steps) {
          leaves.push_back({std::string(text::rtrim(child.text)), std::move(child.forced), e.ends_task,
                            std::nullopt});
          continue;
        }
        child.text += "\n" + std::to_string(child.step + 1) + ". ";
        ++child.step;
        next.push_back(std::move(child));
      }
    }
    if (leaves.size() + next.size() > leaf_budget) {
      throw Error(ErrorCode::BranchBudgetExceeded,
                  "iterative decoding would exceed " + std::to_string(leaf_budget) + " leaves");
    }
    frontier = std::move(next);
  }

  std::stable_sort(leaves.begin(), leaves.end(), [](const DecodedResponse& a, const DecodedResponse& b) {
    if (a.score() != b.score()) return a.score() > b.score();
    return a.text < b.text;
  });
  return leaves;
}

}  // namespace taskprompt
