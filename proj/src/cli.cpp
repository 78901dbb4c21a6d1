#include "taskprompt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "taskprompt/backends.hpp"
#include "taskprompt/decoder.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/harness.hpp"
#include "taskprompt/llm.hpp"
#include "taskprompt/parser.hpp"
#include "taskprompt/prompt.hpp"
#include "taskprompt/scene.hpp"
#include "taskprompt/service.hpp"
#include "taskprompt/text.hpp"

#ifndef TASKPROMPT_DATA_DIR
#define TASKPROMPT_DATA_DIR "data"
#endif

namespace taskprompt {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string data = TASKPROMPT_DATA_DIR;
  std::string grammar;
  std::string lexicon;
  std::string examples;
  std::vector<std::string> gold;
  std::string cache_dir = ".taskprompt-cache";
  bool cache_only = false;
  std::string script;
  std::string config;
  std::string model;
  bool json = false;
};

struct PromptOpts {
  std::string scene;
  std::size_t object = 0;
  std::string style = "terse";
  bool no_delimiters = false;
  std::size_t n_examples = 1;
  std::string context = "partial";
  std::string features = "full";
  bool elicit_goal = false;
};

std::string data_path(const Common& c, const std::string& explicit_path, const char* name) {
  return explicit_path.empty() ? (fs::path(c.data) / name).string() : explicit_path;
}

std::vector<std::string> files_with_extension(const fs::path& dir, const std::string& ext) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

AgentGrammar load_grammar(const Common& c) {
  auto g = AgentGrammar::load_file(data_path(c, c.grammar, "grammar.txt"));
  g.add_lexicon(ActionLexicon::load_file(data_path(c, c.lexicon, "lexicon.txt")));
  return g;
}

GoldStandard load_gold(const Common& c) {
  auto files = c.gold.empty() ? files_with_extension(fs::path(c.data) / "gold", ".gold") : c.gold;
  GoldStandard gold;
  for (const auto& f : files) gold.merge(GoldStandard::load_file(f));
  return gold;
}

std::unique_ptr<Gateway> make_gateway(const Common& c) {
  auto http = HttpBackendConfig::from_env();
  if (!c.config.empty()) http.apply_file(c.config);
  std::shared_ptr<CompletionBackend> backend;
  if (!c.script.empty()) {
    backend = std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(c.script));
  } else {
    backend = std::make_shared<HttpBackend>(http);
  }
  GatewayOptions opts;
  opts.cache_dir = c.cache_dir;
  opts.cache_only = c.cache_only;
  opts.model = c.model.empty() ? http.model : c.model;
  return std::make_unique<Gateway>(backend, opts);
}

PromptConfig prompt_config(const PromptOpts& p) {
  PromptConfig pc;
  pc.style = parse_style(p.style);
  pc.delimiters = !p.no_delimiters;
  pc.n_examples = p.n_examples;
  pc.context_scope = parse_context_scope(p.context);
  pc.feature_scope = parse_feature_scope(p.features);
  pc.elicit_goal = p.elicit_goal;
  return pc;
}

RenderedPrompt build_prompt(const Common& c, const PromptOpts& p) {
  auto scene = load_scene_file(p.scene);
  auto library = load_example_library_file(data_path(c, c.examples, "examples.lib"));
  return render_prompt(scene, p.object, prompt_config(p), library);
}

void add_common(CLI::App* cmd, Common& c, bool with_json) {
  cmd->add_option("--data", c.data, "Directory holding grammar, lexicon, examples, scenes and gold files");
  cmd->add_option("--grammar", c.grammar, "Agent grammar file");
  cmd->add_option("--lexicon", c.lexicon, "Action lexicon file");
  cmd->add_option("--library", c.examples, "Prompt example library");
  cmd->add_option("--gold", c.gold, "Gold standard files (default: every .gold under <data>/gold)");
  cmd->add_option("--cache-dir", c.cache_dir, "Completion cache directory");
  cmd->add_flag("--cache-only", c.cache_only, "Never call the backend; a cache miss is an error");
  cmd->add_option("--script", c.script, "Serve completions from a scripted transcript file");
  cmd->add_option("--config", c.config, "Backend config JSON (endpoint, api_key, model)");
  cmd->add_option("--model", c.model, "Model name sent to the backend");
  if (with_json) cmd->add_flag("--json", c.json, "Machine-readable output");
}

void add_prompt(CLI::App* cmd, PromptOpts& p) {
  cmd->add_option("--scene", p.scene, "Scene file")->required();
  cmd->add_option("--object", p.object, "Target object index");
  cmd->add_option("--style", p.style, "terse | colloquial | predicate");
  cmd->add_flag("--no-delimiters", p.no_delimiters, "Omit the (TASK)/(END TASK) markers");
  cmd->add_option("--examples,--n-examples", p.n_examples, "Number of worked examples (0-3)");
  cmd->add_option("--context", p.context, "none | partial | full");
  cmd->add_option("--features", p.features, "name-only | full");
}

ordered_json choice_json(const Choice& ch) {
  ordered_json j;
  j["text"] = ch.text;
  j["finish_reason"] = ch.finish_reason == FinishReason::Stop ? "stop" : "length";
  j["mean_logprob"] = ch.mean_logprob();
  return j;
}

ordered_json step_json(const StepResult& s) {
  ordered_json j;
  if (const auto* p = std::get_if<ParsedStep>(&s)) {
    j["index"] = p->index;
    j["raw"] = p->raw;
    j["status"] = "ok";
    j["verb"] = p->verb;
    j["object"] = p->object_phrase;
    if (p->destination)
      j["destination"] = {{"preposition", p->destination->preposition}, {"phrase", p->destination->phrase}};
  } else {
    const auto& u = std::get<UnparsableStep>(s);
    j["index"] = u.index;
    j["raw"] = u.raw;
    j["status"] = to_string(u.reason);
  }
  return j;
}

bool ask(std::istream& in, std::ostream& out, const std::string& question, bool& answer) {
  for (;;) {
    out << question << " [y/n] " << std::flush;
    std::string line;
    if (!std::getline(in, line)) return false;
    auto v = text::to_lower(text::trim(line));
    if (v == "y" || v == "yes") {
      answer = true;
      return true;
    }
    if (v == "n" || v == "no") {
      answer = false;
      return true;
    }
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Prompt construction, decoding and evaluation for online task learning"};
  app.require_subcommand(1);

  Common c;
  PromptOpts p;

  auto* build = app.add_subcommand("build-prompt", "Print the rendered prompt for one object");
  add_common(build, c, true);
  add_prompt(build, p);
  build->add_flag("--elicit-goal", p.elicit_goal, "Ask for a (RESULT) goal before the steps");

  double temperature = 0.0;
  int responses = 1;
  int max_tokens = 128;
  auto* complete = app.add_subcommand("complete", "Run one batch completion");
  add_common(complete, c, true);
  add_prompt(complete, p);
  complete->add_flag("--elicit-goal", p.elicit_goal, "Ask for a (RESULT) goal before the steps");
  complete->add_option("--temperature", temperature, "Sampling temperature in [0,1]");
  complete->add_option("--responses", responses, "Number of choices");
  complete->add_option("--max-tokens", max_tokens, "Token limit per choice");

  DecodePolicy policy;
  auto* decode = app.add_subcommand("decode", "Run iterative decoding with forced first words");
  add_common(decode, c, true);
  add_prompt(decode, p);
  decode->add_option("--temperature", temperature, "Continuation temperature in [0,1]");
  decode->add_option("--known-threshold", policy.known_threshold, "Minimum probability of a known word");
  decode->add_option("--fallback-threshold", policy.fallback_threshold, "Minimum probability of any word");
  decode->add_option("--max-branches", policy.max_branches_per_step, "Branches kept per step");
  decode->add_option("--max-steps", policy.max_steps, "Step limit");

  std::string response_file;
  bool goal = false;
  std::string parse_scene;
  auto* parse = app.add_subcommand("parse", "Parse a response file into agent steps");
  add_common(parse, c, true);
  parse->add_option("file,--in", response_file, "Response text file, or - for stdin")->required();
  parse->add_flag("--goal", goal, "Parse a goal sentence instead of steps");
  parse->add_option("--scene", parse_scene, "Scene file for the interpretability verdict");

  std::string preset = "primary";
  std::vector<std::string> scene_files;
  std::vector<std::string> strategies;
  std::string mode = "auto";
  std::string output;
  std::string records_dir;
  auto* sweep = app.add_subcommand("sweep", "Run a prompt sweep and write the metrics CSV");
  add_common(sweep, c, false);
  sweep->add_option("--preset", preset, "primary | context | features")
      ->check(CLI::IsMember({"primary", "context", "features"}));
  sweep->add_option("--scenes", scene_files, "Scene files (default: every .scene under <data>/scenes)");
  sweep->add_option("--strategy", strategies, "batch | iterative (repeatable)");
  sweep->add_option("--mode", mode, "auto | human")->check(CLI::IsMember({"auto", "human"}));
  sweep->add_option("--out", output, "CSV output path (default: stdout)");
  sweep->add_option("--records", records_dir, "Directory of the record logs to append to and read ratings from");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  add_common(serve, c, false);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--records", records_dir, "Directory of the record logs")->required();

  std::string experiment;
  std::string rater;
  auto* rate = app.add_subcommand("rate", "Rate pending responses at the terminal");
  add_common(rate, c, false);
  rate->add_option("--records", records_dir, "Directory of the record logs")->required();
  rate->add_option("--experiment", experiment, "Experiment whose responses to rate")->required();
  rate->add_option("--rater", rater, "Rater id (use 'consensus' for the agreed rating)")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << "\n";
    if (args.empty()) err << app.help();
    return 2;
  }

  try {
    if (*build) {
      auto rendered = build_prompt(c, p);
      if (c.json) {
        ordered_json j;
        j["text"] = rendered.text;
        j["stop_sequences"] = rendered.stop_sequences;
        out << j.dump(2) << "\n";
      } else {
        out << rendered.text << "\n";
      }
      return 0;
    }

    if (*complete) {
      auto rendered = build_prompt(c, p);
      GenerationParams params;
      params.temperature = temperature;
      params.n_responses = responses;
      params.max_tokens = max_tokens;
      params.stop_sequences = rendered.stop_sequences;
      auto gateway = make_gateway(c);
      auto completion = gateway->complete(rendered.text, params);
      if (c.json) {
        auto arr = ordered_json::array();
        for (const auto& ch : completion.choices) arr.push_back(choice_json(ch));
        out << arr.dump(2) << "\n";
      } else {
        for (std::size_t i = 0; i < completion.choices.size(); ++i) {
          const auto& ch = completion.choices[i];
          char head[96];
          std::snprintf(head, sizeof head, "--- choice %zu (mean logprob %.4f)\n", i + 1, ch.mean_logprob());
          out << head << ch.text << "\n";
        }
      }
      return 0;
    }

    if (*decode) {
      auto rendered = build_prompt(c, p);
      auto gateway = make_gateway(c);
      auto lexicon = ActionLexicon::load_file(data_path(c, c.lexicon, "lexicon.txt"));
      auto leaves = decode_iteratively(rendered, *gateway, lexicon, policy, temperature);
      if (c.json) {
        auto arr = ordered_json::array();
        for (const auto& leaf : leaves) {
          ordered_json j;
          j["text"] = leaf.text;
          j["score"] = leaf.score();
          j["complete"] = leaf.complete;
          auto words = ordered_json::array();
          for (const auto& w : leaf.forced_words)
            words.push_back({{"step", w.step},
                             {"word", w.word},
                             {"probability", w.probability},
                             {"provenance", to_string(w.provenance)}});
          j["forced_words"] = std::move(words);
          if (leaf.error) j["error"] = *leaf.error;
          arr.push_back(std::move(j));
        }
        out << arr.dump(2) << "\n";
      } else {
        for (const auto& leaf : leaves) {
          char head[64];
          std::snprintf(head, sizeof head, "--- score %.4f%s\n", leaf.score(), leaf.complete ? "" : " (open)");
          out << head << leaf.text << "\n";
        }
      }
      return 0;
    }

    if (*parse) {
      std::string body;
      if (response_file == "-") {
        body.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      } else {
        body = text::read_file(response_file);
      }
      auto grammar = load_grammar(c);
      if (goal) {
        auto g = parse_goal(body, grammar);
        if (c.json) {
          out << ordered_json{{"object", g.object_phrase}, {"relation", g.relation}, {"target", g.target_phrase}}
                     .dump(2)
              << "\n";
        } else {
          out << g.object_phrase << " | " << g.relation << " | " << g.target_phrase << "\n";
        }
        return 0;
      }
      auto list = parse_response(body, grammar);
      std::optional<InterpretabilityVerdict> verdict;
      if (!parse_scene.empty()) verdict = judge_interpretable(list, grammar, load_scene_file(parse_scene));
      if (c.json) {
        ordered_json j;
        auto steps = ordered_json::array();
        for (const auto& s : list.steps) steps.push_back(step_json(s));
        j["steps"] = std::move(steps);
        j["terminated_by_delimiter"] = list.terminated_by_delimiter;
        if (verdict) {
          j["interpretable"] = verdict->interpretable;
          j["ungrounded"] = verdict->ungrounded_phrases;
        }
        out << j.dump(2) << "\n";
      } else {
        for (const auto& s : list.steps) {
          auto j = step_json(s);
          out << j["index"].get<std::size_t>() << ". [" << j["status"].get<std::string>() << "] "
              << j["raw"].get<std::string>() << "\n";
        }
        if (verdict) out << "interpretable: " << (verdict->interpretable ? "yes" : "no") << "\n";
      }
      return 0;
    }

    if (*sweep) {
      SweepConfig config = preset == "context"    ? SweepConfig::context_experiment()
                           : preset == "features" ? SweepConfig::feature_experiment()
                                                  : SweepConfig::primary();
      if (!strategies.empty()) {
        config.strategies.clear();
        for (const auto& s : strategies) config.strategies.push_back(parse_strategy(s));
      }
      SweepInputs inputs;
      if (scene_files.empty()) scene_files = files_with_extension(fs::path(c.data) / "scenes", ".scene");
      if (scene_files.empty()) throw Error(ErrorCode::InvalidArgument, "no scene files");
      for (const auto& f : scene_files) inputs.scenes.push_back(load_scene_file(f));
      inputs.gold = load_gold(c);
      inputs.library = load_example_library_file(data_path(c, c.examples, "examples.lib"));
      inputs.grammar = load_grammar(c);
      inputs.lexicon = ActionLexicon::load_file(data_path(c, c.lexicon, "lexicon.txt"));

      auto gateway = make_gateway(c);
      auto result = run_sweep(inputs, config, *gateway);
      std::vector<RatingRecord> ratings;
      if (!records_dir.empty()) {
        RecordStore store(records_dir);
        store.append_responses(result.records);
        ratings = store.ratings();
      } else if (mode == "human") {
        throw Error(ErrorCode::InvalidArgument, "--mode human needs --records with consensus ratings");
      }
      auto csv = report_csv(aggregate(result.records, ratings, inputs.gold,
                                      mode == "human" ? AggregateMode::HumanFirst : AggregateMode::AutoOnly));
      if (output.empty()) {
        out << csv;
      } else {
        text::write_file(output, csv);
      }
      auto stats = gateway->stats();
      err << "sweep: " << result.cells.size() << " cells, " << result.records.size() << " responses, "
          << stats.live_calls << " live calls, " << stats.cache_hits << " cache hits\n";
      bool ok = true;
      for (const auto& cell : result.cells) {
        if (cell.complete) continue;
        ok = false;
        for (const auto& e : cell.errors) err << "incomplete cell " << cell.key.domain << ": " << e << "\n";
      }
      return ok ? 0 : 1;
    }

    if (*serve) {
      ServiceResources res;
      res.grammar = AgentGrammar::load_file(data_path(c, c.grammar, "grammar.txt"));
      res.lexicon = ActionLexicon::load_file(data_path(c, c.lexicon, "lexicon.txt"));
      res.library = load_example_library_file(data_path(c, c.examples, "examples.lib"));
      res.gold = load_gold(c);
      for (const auto& f : files_with_extension(fs::path(c.data) / "scenes", ".scene"))
        res.preset_scenes[fs::path(f).stem().string()] = load_scene_file(f);
      auto gateway = make_gateway(c);
      SessionService service(*gateway, std::move(res), records_dir);
      httplib::Server server;
      service.mount(server);
      err << "serving on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
      return 0;
    }

    if (*rate) {
      RecordStore store(records_dir);
      auto pending = store.pending(experiment, rater);
      std::size_t rated = 0;
      for (const auto& r : pending) {
        out << "\n[" << r.id << "] " << r.task << " / object " << r.object_index << "\n" << r.response << "\n";
        RatingRecord rating;
        rating.response_id = r.id;
        rating.rater = rater;
        if (!ask(in, out, "reasonable?", rating.reasonable)) break;
        if (!ask(in, out, "relevant?", rating.relevant)) break;
        if (!ask(in, out, "interpretable?", rating.interpretable)) break;
        store.append_rating(rating);
        ++rated;
      }
      out << "\nrated " << rated << " of " << pending.size() << " pending responses\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace taskprompt
