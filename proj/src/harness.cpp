#include "taskprompt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string format_temperature(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '-';
  return out;
}

std::string cell_label(const CellKey& k) {
  return slug(k.domain) + "-n" + std::to_string(k.n_examples) + "-t" + format_temperature(k.temperature) +
         "-" + std::string(to_string(k.context)) + "-" + std::string(to_string(k.features)) + "-" +
         std::string(to_string(k.strategy));
}

struct WorkItem {
  std::size_t cell = 0;
  std::size_t scene = 0;
  std::size_t object = 0;
};

struct WorkOutput {
  std::vector<ResponseRecord> records;
  std::optional<std::string> error;
};

WorkOutput run_item(const SweepInputs& in, const SweepConfig& config, const CellKey& key,
                    const Scene& scene, std::size_t object, Gateway& gateway) {
  WorkOutput out;
  try {
    PromptConfig pc;
    pc.style = config.style;
    pc.delimiters = config.delimiters;
    pc.n_examples = key.n_examples;
    pc.context_scope = key.context;
    pc.feature_scope = key.features;
    auto prompt = render_prompt(scene, object, pc, in.library);

    ResponseRecord base;
    base.experiment = config.experiment;
    base.domain = key.domain;
    base.task = scene.task_phrase;
    base.object_index = object;
    base.style = config.style;
    base.delimiters = config.delimiters;
    base.n_examples = key.n_examples;
    base.temperature = key.temperature;
    base.context = key.context;
    base.features = key.features;
    base.strategy = key.strategy;
    base.prompt = prompt.text;
    const auto id_prefix = config.experiment + "/" + cell_label(key) + "/o" + std::to_string(object) + "/r";

    std::vector<std::string> texts;
    if (key.strategy == Strategy::Batch) {
      GenerationParams params;
      params.temperature = key.temperature;
      params.n_responses = key.temperature > 0.0 ? config.samples_above_zero : 1;
      params.max_tokens = config.max_tokens;
      params.stop_sequences = prompt.stop_sequences;
      base.cache_key = gateway.key_for(prompt.text, params);
      for (const auto& c : gateway.complete(prompt.text, params).choices) texts.push_back(c.text);
    } else {
      GenerationParams first;
      first.max_tokens = 1;
      first.top_logprobs = in.policy.top_logprobs;
      first.stop_sequences = prompt.stop_sequences;
      base.cache_key = gateway.key_for(prompt.text, first);
      for (const auto& leaf : decode_iteratively(prompt, gateway, in.lexicon, in.policy, key.temperature))
        texts.push_back(leaf.text);
    }

    for (std::size_t k = 0; k < texts.size(); ++k) {
      ResponseRecord r = base;
      r.id = id_prefix + std::to_string(k);
      r.response = texts[k];
      r.created_at = in.clock ? in.clock() : utc_timestamp();
      judge_record(r, in.grammar, scene);
      out.records.push_back(std::move(r));
    }
  } catch (const Error& e) {
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

void check_gold(const SweepInputs& in, const SweepConfig& config) {
  for (const auto& scene : in.scenes) {
    if (!config.domains.empty() &&
        std::find(config.domains.begin(), config.domains.end(), scene.task_phrase) == config.domains.end())
      continue;
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      if (!in.gold.find(scene.task_phrase, i))
        throw Error(ErrorCode::MissingGoldEntry,
                    "no gold entry for '" + scene.task_phrase + "' / " + std::to_string(i));
  }
}

std::vector<WorkItem> plan(const SweepInputs& in, const std::vector<CellKey>& cells) {
  std::vector<WorkItem> items;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < in.scenes.size(); ++s) {
      if (in.scenes[s].task_phrase != cells[c].domain) continue;
      for (std::size_t o = 0; o < in.scenes[s].objects.size(); ++o) items.push_back({c, s, o});
    }
  }
  return items;
}

SweepResult assemble(const SweepInputs& in, const std::vector<CellKey>& cells,
                     const std::vector<WorkItem>& items, std::vector<WorkOutput>& outputs) {
  SweepResult result;
  for (const auto& key : cells) result.cells.push_back({key, 0, 0, true, {}});
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& cell = result.cells[items[i].cell];
    ++cell.prompts;
    if (outputs[i].error) {
      cell.complete = false;
      cell.errors.push_back("object " + std::to_string(items[i].object) + ": " + *outputs[i].error);
    }
    cell.records += outputs[i].records.size();
    for (auto& r : outputs[i].records) result.records.push_back(std::move(r));
  }
  for (auto& cell : result.cells) {
    if (cell.prompts == 0) {
      cell.complete = false;
      cell.errors.push_back("no objects in scene");
    }
  }
  (void)in;
  return result;
}

}  // namespace

std::string_view to_string(Strategy s) { return s == Strategy::Batch ? "batch" : "iterative"; }

Strategy parse_strategy(std::string_view s) {
  auto v = text::to_lower(s);
  if (v == "batch") return Strategy::Batch;
  if (v == "iterative") return Strategy::Iterative;
  throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

std::string normalize_step(std::string_view step) {
  auto s = text::trim(step);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && s[i] == '.') s = text::trim(s.substr(i + 1));
  static const AgentGrammar kDefault;
  return normalize_phrase(s, kDefault);
}

GoldStandard GoldStandard::parse(std::string_view contents) {
  GoldStandard gold;
  std::optional<std::pair<std::string, std::size_t>> current;
  GoldEntry entry;
  auto flush = [&]() {
    if (!current) return;
    while (!entry.sequences.empty() && entry.sequences.back().empty()) entry.sequences.pop_back();
    if (entry.sequences.empty())
      throw Error(ErrorCode::MalformedLine, "gold entry '" + current->first + " / " +
                                                std::to_string(current->second) + "' has no steps");
    gold.add(current->first, current->second, std::move(entry));
    entry = {};
  };
  for (const auto& line : text::keyed_lines(contents)) {
    if (line.key == "gold") {
      flush();
      auto slash = line.value.rfind('/');
      if (slash == std::string::npos)
        throw error_at_line(ErrorCode::MalformedLine, line.line_no, "expected 'gold: <task> / <index>'");
      std::size_t index = 0;
      try {
        index = std::stoul(std::string(text::trim(line.value.substr(slash + 1))));
      } catch (const std::exception&) {
        throw error_at_line(ErrorCode::MalformedLine, line.line_no, "bad object index");
      }
      current = {text::squeeze(line.value.substr(0, slash)), index};
      entry.sequences.emplace_back();
      continue;
    }
    if (!current) throw error_at_line(ErrorCode::MalformedLine, line.line_no, "entry before any 'gold:' line");
    if (line.key == "step") {
      entry.sequences.back().push_back(normalize_step(line.value));
    } else if (line.key == "alt") {
      entry.sequences.emplace_back();
    } else if (line.key == "summary") {
      entry.summary = line.value;
    } else {
      throw error_at_line(ErrorCode::MalformedLine, line.line_no, "unknown key '" + line.key + "'");
    }
  }
  flush();
  return gold;
}

GoldStandard GoldStandard::load_file(const std::string& path) { return parse(text::read_file(path)); }

void GoldStandard::merge(const GoldStandard& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

const GoldEntry* GoldStandard::find(const std::string& task, std::size_t object_index) const {
  auto it = entries_.find({task, object_index});
  return it == entries_.end() ? nullptr : &it->second;
}

void GoldStandard::add(const std::string& task, std::size_t object_index, GoldEntry entry) {
  entries_[{task, object_index}] = std::move(entry);
}

SweepConfig SweepConfig::primary() { return SweepConfig{}; }

SweepConfig SweepConfig::context_experiment() {
  SweepConfig c;
  c.experiment = "context";
  c.domains = {"tidy conference room"};
  c.n_examples = {1};
  c.temperatures = {0.0};
  c.contexts = {ContextScope::None, ContextScope::Partial, ContextScope::Full};
  return c;
}

SweepConfig SweepConfig::feature_experiment() {
  SweepConfig c;
  c.experiment = "features";
  c.domains = {"tidy conference room"};
  c.n_examples = {1};
  c.temperatures = {0.0};
  c.features = {FeatureScope::NameOnly, FeatureScope::Full};
  return c;
}

bool SweepResult::complete() const {
  return std::all_of(cells.begin(), cells.end(), [](const SweepCell& c) { return c.complete; });
}

std::vector<CellKey> enumerate_cells(const std::vector<Scene>& scenes, const SweepConfig& config) {
  std::vector<CellKey> cells;
  for (const auto& scene : scenes) {
    if (!config.domains.empty() &&
        std::find(config.domains.begin(), config.domains.end(), scene.task_phrase) == config.domains.end())
      continue;
    for (auto strategy : config.strategies)
      for (auto context : config.contexts)
        for (auto features : config.features)
          for (auto n : config.n_examples)
            for (auto t : config.temperatures)
              cells.push_back({scene.task_phrase, n, t, context, features, strategy});
  }
  return cells;
}

SweepResult run_sweep_serial(const SweepInputs& inputs, const SweepConfig& config, Gateway& gateway) {
  check_gold(inputs, config);
  auto cells = enumerate_cells(inputs.scenes, config);
  auto items = plan(inputs, cells);
  std::vector<WorkOutput> outputs(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    outputs[i] = run_item(inputs, config, cells[it.cell], inputs.scenes[it.scene], it.object, gateway);
  }
  return assemble(inputs, cells, items, outputs);
}

SweepResult run_sweep(const SweepInputs& inputs, const SweepConfig& config, Gateway& gateway) {
  check_gold(inputs, config);
  auto cells = enumerate_cells(inputs.scenes, config);
  auto items = plan(inputs, cells);
  std::vector<WorkOutput> outputs(items.size());
  const auto count = static_cast<long>(items.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    const auto& it = items[i];
    outputs[i] = run_item(inputs, config, cells[it.cell], inputs.scenes[it.scene], it.object, gateway);
  }
  return assemble(inputs, cells, items, outputs);
}

void judge_record(ResponseRecord& record, const AgentGrammar& grammar, const Scene& scene) {
  record.steps.clear();
  record.parse_status.clear();
  record.ungrounded.clear();
  record.auto_interpretable = false;
  StepList list;
  try {
    list = parse_response(record.response, grammar);
  } catch (const Error&) {
    return;
  }
  for (const auto& s : list.steps) {
    if (const auto* p = std::get_if<ParsedStep>(&s)) {
      record.steps.push_back(p->raw);
      record.parse_status.emplace_back("ok");
    } else {
      const auto& u = std::get<UnparsableStep>(s);
      record.steps.push_back(u.raw);
      record.parse_status.emplace_back(to_string(u.reason));
    }
  }
  auto verdict = judge_interpretable(list, grammar, scene);
  record.auto_interpretable = verdict.interpretable;
  record.ungrounded = verdict.ungrounded_phrases;
}

bool auto_relevance(const ResponseRecord& record, const GoldStandard& gold) {
  const auto* entry = gold.find(record.task, record.object_index);
  if (!entry)
    throw Error(ErrorCode::MissingGoldEntry,
                "no gold entry for '" + record.task + "' / " + std::to_string(record.object_index));
  if (record.steps.empty()) return false;
  std::vector<std::string> normalized;
  for (const auto& s : record.steps) normalized.push_back(normalize_step(s));
  return std::find(entry->sequences.begin(), entry->sequences.end(), normalized) != entry->sequences.end();
}

ExperimentReport aggregate(const std::vector<ResponseRecord>& records,
                           const std::vector<RatingRecord>& ratings, const GoldStandard& gold,
                           AggregateMode mode) {
  std::map<std::string, const RatingRecord*> consensus;
  for (const auto& r : ratings)
    if (r.rater == kConsensusRater) consensus[r.response_id] = &r;

  struct Acc {
    std::size_t n = 0, reasonable = 0, rated = 0, relevant = 0, interpretable = 0, both = 0;
  };
  std::map<CellKey, Acc> cells;
  for (const auto& rec : records) {
    auto it = consensus.find(rec.id);
    const RatingRecord* c = it == consensus.end() ? nullptr : it->second;
    bool relevant = false;
    bool interpretable = false;
    if (mode == AggregateMode::HumanFirst) {
      if (!c) throw Error(ErrorCode::MissingConsensus, "no consensus rating for response '" + rec.id + "'");
      relevant = c->relevant;
      interpretable = c->interpretable;
    } else {
      relevant = auto_relevance(rec, gold);
      interpretable = rec.auto_interpretable;
    }
    auto& acc = cells[rec.cell()];
    ++acc.n;
    if (c) {
      ++acc.rated;
      acc.reasonable += c->reasonable ? 1 : 0;
    }
    acc.relevant += relevant ? 1 : 0;
    acc.interpretable += interpretable ? 1 : 0;
    acc.both += (relevant && interpretable) ? 1 : 0;
  }

  ExperimentReport report;
  for (const auto& [key, acc] : cells) {
    auto pct = [](std::size_t k, std::size_t n) { return 100.0 * static_cast<double>(k) / static_cast<double>(n); };
    ReportRow row;
    row.key = key;
    row.n = acc.n;
    if (acc.rated > 0) row.pct_reasonable = pct(acc.reasonable, acc.rated);
    row.pct_relevant = pct(acc.relevant, acc.n);
    row.pct_interpretable = pct(acc.interpretable, acc.n);
    row.pct_relevant_and_interpretable = pct(acc.both, acc.n);
    report.rows.push_back(row);
  }
  return report;
}

std::string report_csv(const ExperimentReport& report) {
  std::string out =
      "domain,n_examples,temperature,context,features,strategy,n,pct_reasonable,pct_relevant,"
      "pct_interpretable,pct_relevant_and_interpretable\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  for (const auto& r : report.rows) {
    out += quote(r.key.domain) + "," + std::to_string(r.key.n_examples) + "," +
           format_temperature(r.key.temperature) + "," + std::string(to_string(r.key.context)) + "," +
           std::string(to_string(r.key.features)) + "," + std::string(to_string(r.key.strategy)) + "," +
           std::to_string(r.n) + "," + (r.pct_reasonable ? pct(*r.pct_reasonable) : "") + "," +
           pct(r.pct_relevant) + "," + pct(r.pct_interpretable) + "," +
           pct(r.pct_relevant_and_interpretable) + "\n";
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json to_json(const ResponseRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["experiment"] = r.experiment;
  j["domain"] = r.domain;
  j["task"] = r.task;
  j["object_index"] = r.object_index;
  j["style"] = to_string(r.style);
  j["delimiters"] = r.delimiters;
  j["n_examples"] = r.n_examples;
  j["temperature"] = r.temperature;
  j["context"] = to_string(r.context);
  j["features"] = to_string(r.features);
  j["strategy"] = to_string(r.strategy);
  j["cache_key"] = r.cache_key;
  j["prompt"] = r.prompt;
  j["response"] = r.response;
  j["steps"] = r.steps;
  j["parse_status"] = r.parse_status;
  j["auto_interpretable"] = r.auto_interpretable;
  j["ungrounded"] = r.ungrounded;
  j["created_at"] = r.created_at;
  return j;
}

ResponseRecord response_from_json(const json& j) {
  ResponseRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.experiment = j.value("experiment", "");
    r.domain = j.at("domain").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.object_index = j.at("object_index").get<std::size_t>();
    r.style = parse_style(j.value("style", "terse"));
    r.delimiters = j.value("delimiters", true);
    r.n_examples = j.at("n_examples").get<std::size_t>();
    r.temperature = j.at("temperature").get<double>();
    r.context = parse_context_scope(j.at("context").get<std::string>());
    r.features = parse_feature_scope(j.at("features").get<std::string>());
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.cache_key = j.value("cache_key", "");
    r.prompt = j.value("prompt", "");
    r.response = j.at("response").get<std::string>();
    r.steps = j.value("steps", std::vector<std::string>{});
    r.parse_status = j.value("parse_status", std::vector<std::string>{});
    r.auto_interpretable = j.value("auto_interpretable", false);
    r.ungrounded = j.value("ungrounded", std::vector<std::string>{});
    r.created_at = j.value("created_at", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad response record: ") + e.what());
  }
  return r;
}

ordered_json to_json(const RatingRecord& r) {
  ordered_json j;
  j["response_id"] = r.response_id;
  j["rater"] = r.rater;
  j["reasonable"] = r.reasonable;
  j["relevant"] = r.relevant;
  j["interpretable"] = r.interpretable;
  j["note"] = r.note;
  return j;
}

RatingRecord rating_from_json(const json& j) {
  RatingRecord r;
  try {
    r.response_id = j.at("response_id").get<std::string>();
    r.rater = j.at("rater").get<std::string>();
    r.reasonable = j.at("reasonable").get<bool>();
    r.relevant = j.at("relevant").get<bool>();
    r.interpretable = j.at("interpretable").get<bool>();
    r.note = j.value("note", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad rating record: ") + e.what());
  }
  if (r.response_id.empty() || r.rater.empty())
    throw Error(ErrorCode::InvalidArgument, "rating needs response_id and rater");
  return r;
}

RecordStore::RecordStore(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
  std::filesystem::create_directories(dir_);
}

void RecordStore::append_line(const std::string& file, const ordered_json& j) {
  std::lock_guard lock(mutex_);
  std::ofstream out(dir_ / file, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to '" + (dir_ / file).string() + "'");
  out << j.dump() << '\n';
}

std::vector<json> RecordStore::read_lines(const std::string& file) const {
  std::vector<json> out;
  std::ifstream in(dir_ / file, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, "corrupt line in '" + file + "': " + e.what());
    }
  }
  return out;
}

void RecordStore::append_responses(const std::vector<ResponseRecord>& records) {
  std::lock_guard lock(mutex_);
  std::ofstream out(dir_ / "responses.jsonl", std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to responses.jsonl");
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<ResponseRecord> RecordStore::responses(std::string_view experiment) const {
  std::vector<ResponseRecord> out;
  std::set<std::string> seen;
  std::lock_guard lock(mutex_);
  for (const auto& j : read_lines("responses.jsonl")) {
    auto r = response_from_json(j);
    if (!experiment.empty() && r.experiment != experiment) continue;
    if (!seen.insert(r.id).second) continue;
    out.push_back(std::move(r));
  }
  return out;
}

std::optional<ResponseRecord> RecordStore::response(std::string_view id) const {
  for (auto& r : responses())
    if (r.id == id) return r;
  return std::nullopt;
}

void RecordStore::append_rating(const RatingRecord& rating) {
  std::lock_guard lock(mutex_);
  for (const auto& j : read_lines("ratings.jsonl")) {
    auto r = rating_from_json(j);
    if (r.response_id == rating.response_id && r.rater == rating.rater)
      throw Error(ErrorCode::DuplicateRating,
                  "rater '" + rating.rater + "' already rated '" + rating.response_id + "'");
  }
  std::ofstream out(dir_ / "ratings.jsonl", std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to ratings.jsonl");
  out << to_json(rating).dump() << '\n';
}

std::vector<RatingRecord> RecordStore::ratings() const {
  std::lock_guard lock(mutex_);
  std::vector<RatingRecord> out;
  for (const auto& j : read_lines("ratings.jsonl")) out.push_back(rating_from_json(j));
  return out;
}

std::vector<ResponseRecord> RecordStore::pending(std::string_view experiment, std::string_view rater) const {
  std::set<std::string> rated;
  for (const auto& r : ratings())
    if (r.rater == rater) rated.insert(r.response_id);
  std::vector<ResponseRecord> out;
  for (auto& r : responses(experiment))
    if (!rated.count(r.id)) out.push_back(std::move(r));
  return out;
}

}  // namespace taskprompt
