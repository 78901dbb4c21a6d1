#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskprompt/decoder.hpp"
#include "taskprompt/llm.hpp"
#include "taskprompt/parser.hpp"
#include "taskprompt/prompt.hpp"
#include "taskprompt/scene.hpp"

namespace taskprompt {

enum class Strategy { Batch, Iterative };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// Preferred step sequences per (task, object index).
struct GoldEntry {
  std::vector<std::vector<std::string>> sequences;  // normalized step strings
  std::string summary;
};

class GoldStandard {
 public:
  /// gold: <task> / <index>, summary: .., step: .., alt: (starts another sequence)
  static GoldStandard parse(std::string_view contents);
  static GoldStandard load_file(const std::string& path);
  void merge(const GoldStandard& other);

  const GoldEntry* find(const std::string& task, std::size_t object_index) const;
  void add(const std::string& task, std::size_t object_index, GoldEntry entry);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<std::string, std::size_t>, GoldEntry> entries_;
};

/// Lowercase, strip a leading step number, determiners and trailing punctuation.
std::string normalize_step(std::string_view step);

struct CellKey {
  std::string domain;
  std::size_t n_examples = 1;
  double temperature = 0.0;
  ContextScope context = ContextScope::Partial;
  FeatureScope features = FeatureScope::Full;
  Strategy strategy = Strategy::Batch;

  auto tie() const { return std::tie(domain, n_examples, temperature, context, features, strategy); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
  bool operator==(const CellKey& o) const { return tie() == o.tie(); }
};

struct ResponseRecord {
  std::string id;
  std::string experiment;
  std::string domain;
  std::string task;
  std::size_t object_index = 0;
  Style style = Style::Terse;
  bool delimiters = true;
  std::size_t n_examples = 1;
  double temperature = 0.0;
  ContextScope context = ContextScope::Partial;
  FeatureScope features = FeatureScope::Full;
  Strategy strategy = Strategy::Batch;
  std::string cache_key;
  std::string prompt;
  std::string response;
  std::vector<std::string> steps;          // raw split; empty when unsplittable
  std::vector<std::string> parse_status;   // "ok" or the unparsable reason, per step
  bool auto_interpretable = false;
  std::vector<std::string> ungrounded;
  std::string created_at;

  CellKey cell() const { return {domain, n_examples, temperature, context, features, strategy}; }
  bool operator==(const ResponseRecord&) const = default;
};

inline constexpr std::string_view kConsensusRater = "consensus";

struct RatingRecord {
  std::string response_id;
  std::string rater;
  bool reasonable = false;
  bool relevant = false;
  bool interpretable = false;
  std::string note;

  bool operator==(const RatingRecord&) const = default;
};

nlohmann::ordered_json to_json(const ResponseRecord& r);
ResponseRecord response_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RatingRecord& r);
RatingRecord rating_from_json(const nlohmann::json& j);

struct SweepConfig {
  std::string experiment = "sweep";
  std::vector<std::string> domains;  // task phrases to include; empty means every scene
  std::vector<std::size_t> n_examples{1, 2, 3};
  std::vector<double> temperatures{0.0, 0.3, 0.8};
  std::vector<ContextScope> contexts{ContextScope::Partial};
  std::vector<FeatureScope> features{FeatureScope::Full};
  std::vector<Strategy> strategies{Strategy::Batch};
  Style style = Style::Terse;
  bool delimiters = true;
  int max_tokens = 128;
  int samples_above_zero = 3;  // responses requested when temperature > 0

  /// 3 domains x {1,2,3} examples x {0,0.3,0.8}.
  static SweepConfig primary();
  /// Tidy conference room only: one example, temperature 0, {None, Partial, Full} context.
  static SweepConfig context_experiment();
  /// Tidy conference room only: one example, temperature 0, {NameOnly, Full} features.
  static SweepConfig feature_experiment();
};

struct SweepCell {
  CellKey key;
  std::size_t prompts = 0;
  std::size_t records = 0;
  bool complete = true;
  std::vector<std::string> errors;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<ResponseRecord> records;
  bool complete() const;
};

/// Everything a sweep reads besides the gateway.
struct SweepInputs {
  std::vector<Scene> scenes;  // one per domain; domain label = task phrase
  GoldStandard gold;
  ExampleLibrary library;
  AgentGrammar grammar;
  ActionLexicon lexicon;
  DecodePolicy policy;
  std::function<std::string()> clock;  // timestamp source; defaults to UTC now
};

std::vector<CellKey> enumerate_cells(const std::vector<Scene>& scenes, const SweepConfig& config);

/// Parallel over (cell, object) work items; records come back in the same
/// order as run_sweep_serial.
SweepResult run_sweep(const SweepInputs& inputs, const SweepConfig& config, Gateway& gateway);
SweepResult run_sweep_serial(const SweepInputs& inputs, const SweepConfig& config, Gateway& gateway);

/// Fills the parse-derived fields of a record from its response text.
void judge_record(ResponseRecord& record, const AgentGrammar& grammar, const Scene& scene);

/// Exact match of the normalized step sequence against any gold sequence.
/// Throws MissingGoldEntry.
bool auto_relevance(const ResponseRecord& record, const GoldStandard& gold);

enum class AggregateMode { HumanFirst, AutoOnly };

struct ReportRow {
  CellKey key;
  std::size_t n = 0;
  std::optional<double> pct_reasonable;
  double pct_relevant = 0.0;
  double pct_interpretable = 0.0;
  double pct_relevant_and_interpretable = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;  // sorted by key
};

ExperimentReport aggregate(const std::vector<ResponseRecord>& records,
                           const std::vector<RatingRecord>& ratings, const GoldStandard& gold,
                           AggregateMode mode);

std::string report_csv(const ExperimentReport& report);

std::string utc_timestamp();

/// Append-only JSONL logs under a data directory: responses.jsonl,
/// ratings.jsonl. Appends are serialized.
class RecordStore {
 public:
  explicit RecordStore(std::filesystem::path data_dir);

  void append_responses(const std::vector<ResponseRecord>& records);
  std::vector<ResponseRecord> responses(std::string_view experiment = {}) const;
  std::optional<ResponseRecord> response(std::string_view id) const;

  /// Rejects a second rating from the same rater for one response.
  void append_rating(const RatingRecord& rating);
  std::vector<RatingRecord> ratings() const;

  /// Responses of `experiment` not yet rated by `rater`.
  std::vector<ResponseRecord> pending(std::string_view experiment, std::string_view rater) const;

  void append_line(const std::string& file, const nlohmann::ordered_json& j);
  std::vector<nlohmann::json> read_lines(const std::string& file) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

}  // namespace taskprompt
