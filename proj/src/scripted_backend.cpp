#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include "taskprompt/backends.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

using nlohmann::ordered_json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Length of a "\n<digits>. " boundary starting at i, or 0.
std::size_t boundary_len(std::string_view s, std::size_t i) {
  if (i >= s.size() || s[i] != '\n') return 0;
  std::size_t j = i + 1;
  while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  if (j == i + 1 || j + 1 >= s.size() || s[j] != '.' || s[j + 1] != ' ') return 0;
  return j + 2 - i;
}

// Length of an optional space plus "(END ...)" starting at i, or 0.
std::size_t delimiter_len(std::string_view s, std::size_t i) {
  std::size_t j = i;
  if (j < s.size() && s[j] == ' ') ++j;
  if (s.substr(j, 5) != "(END ") return 0;
  auto close = s.find(')', j);
  if (close == std::string_view::npos) return 0;
  return close + 1 - i;
}

std::vector<ScriptToken> sample_from_json(const nlohmann::json& j) {
  std::vector<ScriptToken> out;
  if (j.contains("tokens")) {
    for (const auto& t : j.at("tokens")) {
      ScriptToken tok{t.at(0).get<std::string>(), t.size() > 1 ? t.at(1).get<double>() : 0.0, {}};
      if (t.size() > 2)
        for (auto it = t.at(2).begin(); it != t.at(2).end(); ++it)
          tok.alternatives.push_back({it.key(), it.value().get<double>()});
      out.push_back(std::move(tok));
    }
    return out;
  }
  const double default_lp = j.value("logprob", -0.05);
  std::vector<std::vector<TokenAlternative>> step_alts;
  if (j.contains("step_alternatives")) {
    for (const auto& step : j.at("step_alternatives")) {
      std::vector<TokenAlternative> alts;
      if (step.is_object()) {
        for (auto it = step.begin(); it != step.end(); ++it)
          alts.push_back({it.key(), std::log(it.value().get<double>())});
      } else {
        for (const auto& pair : step)
          alts.push_back({pair.at(0).get<std::string>(), std::log(pair.at(1).get<double>())});
      }
      step_alts.push_back(std::move(alts));
    }
  }
  std::size_t step = 0;
  bool step_start = true;
  for (auto& piece : tokenize_transcript(j.at("text").get<std::string>())) {
    ScriptToken tok{piece, default_lp, {}};
    if (step_start && step < step_alts.size()) {
      tok.alternatives = step_alts[step];
      auto word = text::trim(piece);
      for (const auto& a : tok.alternatives)
        if (text::trim(a.token) == word) tok.logprob = a.logprob;
      ++step;
    }
    step_start = boundary_len(piece, 0) == piece.size();
    out.push_back(std::move(tok));
  }
  return out;
}

std::string sample_text(const std::vector<ScriptToken>& sample) {
  std::string out;
  for (const auto& t : sample) out += t.text;
  return out;
}

struct Emitted {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::vector<std::vector<TokenAlternative>> alternatives;
  bool stopped = true;
};

Emitted generate(const std::vector<ScriptToken>& sample, std::size_t offset, int max_tokens,
                 const std::vector<std::string>& stops) {
  Emitted out;
  out.stopped = true;
  std::size_t pos = 0;
  int emitted = 0;
  for (const auto& tok : sample) {
    const std::size_t end = pos + tok.text.size();
    if (end <= offset) {
      pos = end;
      continue;
    }
    if (emitted == max_tokens) {
      out.stopped = false;
      break;
    }
    std::string piece = tok.text;
    std::vector<TokenAlternative> alts = tok.alternatives;
    if (pos < offset) {
      piece = tok.text.substr(offset - pos);
      alts.clear();
    }
    if (alts.empty()) alts.push_back({piece, tok.logprob});
    out.text += piece;
    out.tokens.push_back(piece);
    out.logprobs.push_back(tok.logprob);
    out.alternatives.push_back(std::move(alts));
    ++emitted;
    pos = end;

    std::size_t cut = std::string::npos;
    for (const auto& s : stops) {
      if (s.empty()) continue;
      cut = std::min(cut, out.text.find(s));
    }
    if (cut != std::string::npos) {
      out.text.resize(cut);
      std::size_t len = 0, keep = 0;
      while (keep < out.tokens.size() && len < cut) len += out.tokens[keep++].size();
      out.tokens.resize(keep);
      out.logprobs.resize(keep);
      out.alternatives.resize(keep);
      if (keep > 0 && len > cut) out.tokens.back().resize(out.tokens.back().size() - (len - cut));
      out.stopped = true;
      return out;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize_transcript(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (auto n = boundary_len(s, i)) {
      out.emplace_back(s.substr(i, n));
      i += n;
      continue;
    }
    if (auto n = delimiter_len(s, i)) {
      out.emplace_back(s.substr(i, n));
      i += n;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_space(s[j]) && !boundary_len(s, j) && !delimiter_len(s, j)) ++j;
    if (j > i && (j == s.size() || boundary_len(s, j) || delimiter_len(s, j))) {
      out.emplace_back(s.substr(i, j - i));
      i = j;
      continue;
    }
    while (j < s.size() && !is_space(s[j])) ++j;
    out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<Script> scripts, std::chrono::microseconds latency)
    : scripts_(std::move(scripts)), latency_(latency) {}

ScriptedBackend ScriptedBackend::from_json(const nlohmann::json& j) {
  std::vector<Script> scripts;
  for (const auto& s : j.at("scripts")) {
    Script script{s.value("contains", ""), s.value("after", ""), {}};
    for (const auto& sample : s.at("samples")) script.samples.push_back(sample_from_json(sample));
    scripts.push_back(std::move(script));
  }
  return ScriptedBackend(std::move(scripts),
                         std::chrono::microseconds(j.value("latency_us", 0)));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(text::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "bad script file '" + path.string() + "': " + e.what());
  }
}

std::string ScriptedBackend::send(const ordered_json& request) {
  ++calls_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  const auto prompt = request.at("prompt").get<std::string>();
  const int n = request.value("n", 1);
  const int max_tokens = request.value("max_tokens", 16);
  const int top = request.value("logprobs", 0);
  std::vector<std::string> stops;
  if (request.contains("stop")) stops = request.at("stop").get<std::vector<std::string>>();

  const Script* best_script = nullptr;
  std::size_t best_overlap = 0;
  std::vector<std::pair<std::size_t, std::size_t>> best;  // (sample, offset)

  for (const auto& script : scripts_) {
    if (!script.contains.empty() && prompt.find(script.contains) == std::string::npos) continue;
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    std::size_t overlap = 0;
    for (std::size_t si = 0; si < script.samples.size(); ++si) {
      const auto full = sample_text(script.samples[si]);
      std::optional<std::size_t> sample_best;
      if (script.after.empty()) {
        sample_best = 0;
      } else {
        for (auto pos = prompt.find(script.after); pos != std::string::npos;
             pos = prompt.find(script.after, pos + 1)) {
          auto rest = std::string_view(prompt).substr(pos + script.after.size());
          if (full.compare(0, rest.size(), rest) == 0 && rest.size() <= full.size())
            if (!sample_best || rest.size() > *sample_best) sample_best = rest.size();
        }
      }
      if (!sample_best) continue;
      if (matches.empty() || *sample_best > overlap) {
        matches.clear();
        overlap = *sample_best;
      }
      if (*sample_best == overlap) matches.emplace_back(si, overlap);
    }
    if (matches.empty()) continue;
    if (!best_script || overlap > best_overlap) {
      best_script = &script;
      best_overlap = overlap;
      best = std::move(matches);
    }
  }
  if (!best_script) {
    Error e(ErrorCode::BackendUnavailable, "scripted backend has no reply for this prompt");
    throw e;
  }

  ordered_json reply;
  reply["id"] = "scripted";
  reply["object"] = "text_completion";
  reply["choices"] = ordered_json::array();
  for (int i = 0; i < n; ++i) {
    const auto& [si, offset] = best[static_cast<std::size_t>(i) % best.size()];
    auto out = generate(best_script->samples[si], offset, max_tokens, stops);
    ordered_json choice;
    choice["index"] = i;
    choice["text"] = out.text;
    ordered_json lp;
    lp["tokens"] = out.tokens;
    lp["token_logprobs"] = out.logprobs;
    if (top > 0) {
      ordered_json tops = ordered_json::array();
      for (auto alts : out.alternatives) {
        std::stable_sort(alts.begin(), alts.end(),
                         [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
        ordered_json m = ordered_json::object();
        for (std::size_t k = 0; k < alts.size() && k < static_cast<std::size_t>(top); ++k)
          m[alts[k].token] = alts[k].logprob;
        tops.push_back(std::move(m));
      }
      lp["top_logprobs"] = std::move(tops);
    }
    choice["logprobs"] = std::move(lp);
    choice["finish_reason"] = out.stopped ? "stop" : "length";
    reply["choices"].push_back(std::move(choice));
  }
  return reply.dump();
}

}  // namespace taskprompt
