#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

using namespace taskprompt;
using testing_support::replay_gateway;
using testing_support::sweep_inputs;
using testing_support::TempDir;

namespace {

const char* kDelimited = "Pick up can\n2. Take can to kitchen\n3. Put can in recycling bin";

ResponseRecord can_record(std::string id, std::string response) {
  ResponseRecord r;
  r.id = std::move(id);
  r.experiment = "t";
  r.domain = r.task = "tidy conference room";
  r.object_index = 0;
  r.response = std::move(response);
  judge_record(r, testing_support::grammar(), testing_support::conference_room());
  return r;
}

RatingRecord consensus(const std::string& id, bool reasonable, bool relevant, bool interpretable) {
  return {id, std::string(kConsensusRater), reasonable, relevant, interpretable, ""};
}

std::size_t count_objects(const std::vector<Scene>& scenes) {
  std::size_t n = 0;
  for (const auto& s : scenes) n += s.objects.size();
  return n;
}

}  // namespace

TEST(EnumerateCells, PrimaryIsFullCrossProduct) {
  auto in = sweep_inputs();
  auto cells = enumerate_cells(in.scenes, SweepConfig::primary());
  EXPECT_EQ(cells.size(), 3u * 3u * 3u);
  std::set<CellKey> unique(cells.begin(), cells.end());
  EXPECT_EQ(unique.size(), cells.size());
}

TEST(EnumerateCells, SubExperiments) {
  auto in = sweep_inputs();
  auto context = enumerate_cells(in.scenes, SweepConfig::context_experiment());
  ASSERT_EQ(context.size(), 3u);
  std::set<ContextScope> scopes;
  for (const auto& c : context) {
    EXPECT_EQ(c.domain, "tidy conference room");
    EXPECT_EQ(c.n_examples, 1u);
    scopes.insert(c.context);
  }
  EXPECT_EQ(scopes.size(), 3u);
  auto features = enumerate_cells(in.scenes, SweepConfig::feature_experiment());
  ASSERT_EQ(features.size(), 2u);
  EXPECT_NE(features[0].features, features[1].features);
}

TEST(RunSweep, PrimaryShapeFromReplayCache) {
  auto in = sweep_inputs();
  auto gw = replay_gateway();
  auto result = run_sweep(in, SweepConfig::primary(), *gw);
  EXPECT_TRUE(result.complete());
  ASSERT_EQ(result.cells.size(), 27u);
  const std::size_t objects = count_objects(in.scenes);
  EXPECT_EQ(result.records.size(), objects * 3 * (1 + 3 + 3));
  std::map<std::pair<std::string, double>, std::size_t> per_prompt;
  for (const auto& r : result.records) {
    ++per_prompt[{r.domain + "/" + std::to_string(r.n_examples) + "/" + std::to_string(r.object_index), r.temperature}];
    EXPECT_EQ(r.created_at, "2026-01-01T00:00:00Z");
  }
  for (const auto& [k, n] : per_prompt) EXPECT_EQ(n, k.second > 0.0 ? 3u : 1u) << k.first;
  EXPECT_EQ(gw->stats().live_calls, 0u);
  std::set<std::string> ids;
  for (const auto& r : result.records) ids.insert(r.id);
  EXPECT_EQ(ids.size(), result.records.size());
}

TEST(RunSweep, ParallelMatchesSerial) {
  auto in = sweep_inputs();
  auto a = run_sweep(in, SweepConfig::context_experiment(), *replay_gateway());
  auto b = run_sweep_serial(in, SweepConfig::context_experiment(), *replay_gateway());
  EXPECT_EQ(a.records, b.records);
  ASSERT_EQ(a.records.size(), 3u * 9u);
  EXPECT_EQ(a.cells.size(), 3u);
}

TEST(RunSweep, WarmCacheReplayMatchesLiveRun) {
  TempDir dir;
  auto in = sweep_inputs();
  auto config = SweepConfig::feature_experiment();
  auto backend = testing_support::transcripts();
  auto live = testing_support::make_gateway(backend, dir.path());
  auto first = run_sweep(in, config, *live);
  EXPECT_GT(backend->calls(), 0u);
  auto replay = testing_support::make_gateway(
      std::make_shared<testing_support::FailingBackend>(ErrorCode::BackendUnavailable), dir.path(), true);
  in.clock = [] { return std::string("later"); };
  auto second = run_sweep(in, config, *replay);
  ASSERT_EQ(first.records.size(), second.records.size());
  for (std::size_t i = 0; i < first.records.size(); ++i) {
    auto x = first.records[i];
    x.created_at = second.records[i].created_at;
    EXPECT_EQ(x, second.records[i]);
  }
  EXPECT_EQ(replay->stats().live_calls, 0u);
}

TEST(RunSweep, IterativeStrategyRecordsEveryLeaf) {
  auto in = sweep_inputs();
  SweepConfig config;
  config.experiment = "iter";
  config.domains = {"tidy conference room"};
  config.n_examples = {1};
  config.temperatures = {0.0};
  config.strategies = {Strategy::Iterative};
  in.lexicon = ActionLexicon({"pick", "take", "put", "go"});
  auto result = run_sweep(in, config, *testing_support::make_gateway(testing_support::transcripts()));
  ASSERT_EQ(result.cells.size(), 1u);
  std::vector<std::string> can;
  for (const auto& r : result.records)
    if (r.object_index == 0) can.push_back(r.response);
  EXPECT_EQ(can.size(), 2u);
  EXPECT_NE(std::find(can.begin(), can.end(), kDelimited), can.end());
}

TEST(RunSweep, GatewayErrorsFlagCells) {
  auto in = sweep_inputs();
  auto gw = testing_support::make_gateway(
      std::make_shared<testing_support::FailingBackend>(ErrorCode::AuthFailure, false));
  auto result = run_sweep(in, SweepConfig::feature_experiment(), *gw);
  EXPECT_FALSE(result.complete());
  EXPECT_TRUE(result.records.empty());
  for (const auto& c : result.cells) {
    EXPECT_FALSE(c.complete);
    EXPECT_EQ(c.errors.size(), 9u);
    EXPECT_NE(c.errors[0].find("AuthFailure"), std::string::npos);
  }
}

TEST(RunSweep, EmptySceneFlagged) {
  auto in = sweep_inputs();
  Scene empty;
  empty.task_phrase = "tidy attic";
  empty.agent_location = "attic";
  in.scenes = {empty};
  SweepConfig config;
  config.n_examples = {1};
  config.temperatures = {0.0};
  auto result = run_sweep(in, config, *replay_gateway());
  ASSERT_EQ(result.cells.size(), 1u);
  EXPECT_TRUE(result.records.empty());
  EXPECT_FALSE(result.cells[0].complete);
  EXPECT_EQ(result.cells[0].errors, (std::vector<std::string>{"no objects in scene"}));
}

TEST(RunSweep, MissingGoldRejectedUpFront) {
  auto in = sweep_inputs();
  in.gold = GoldStandard{};
  try {
    run_sweep(in, SweepConfig::primary(), *replay_gateway());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGoldEntry);
  }
}

TEST(AutoRelevance, Examples) {
  auto g = testing_support::gold();
  EXPECT_TRUE(auto_relevance(can_record("a", kDelimited), g));
  EXPECT_TRUE(auto_relevance(can_record("a", "pick up the can\n2. Put the can in the recycling bin."), g));
  EXPECT_FALSE(auto_relevance(can_record("b", "Pick up can\n2. Take can to kitchen\n3. Wash hands"), g));
  EXPECT_FALSE(auto_relevance(can_record("c", ""), g));
  auto r = can_record("d", kDelimited);
  r.task = "tidy attic";
  try {
    auto_relevance(r, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGoldEntry);
  }
}

TEST(JudgeRecord, Fields) {
  auto r = can_record("a", kDelimited);
  EXPECT_EQ(r.steps, (std::vector<std::string>{"Pick up can", "Take can to kitchen", "Put can in recycling bin"}));
  EXPECT_EQ(r.parse_status, (std::vector<std::string>{"ok", "ok", "ok"}));
  EXPECT_TRUE(r.auto_interpretable);
  auto bad = can_record("b", "Dust conference room\n2. Put can in attic");
  EXPECT_EQ(bad.parse_status[0], "UnknownVerb");
  EXPECT_FALSE(bad.auto_interpretable);
  EXPECT_EQ(bad.ungrounded, (std::vector<std::string>{"attic"}));
  auto empty = can_record("c", "  ");
  EXPECT_TRUE(empty.steps.empty());
  EXPECT_FALSE(empty.auto_interpretable);
}

TEST(Aggregate, TenRecordFixture) {
  std::vector<ResponseRecord> records;
  std::vector<RatingRecord> ratings;
  // relevant, interpretable per record: six with both, two relevant only, one interpretable only, one neither.
  const bool rel[10] = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  const bool itp[10] = {1, 1, 1, 1, 1, 1, 0, 0, 1, 0};
  for (int i = 0; i < 10; ++i) {
    auto id = "r" + std::to_string(i);
    records.push_back(can_record(id, kDelimited));
    ratings.push_back(consensus(id, i < 7, rel[i], itp[i]));
    ratings.push_back({id, "alice", false, false, false, "ignored"});
  }
  auto report = aggregate(records, ratings, testing_support::gold(), AggregateMode::HumanFirst);
  ASSERT_EQ(report.rows.size(), 1u);
  const auto& row = report.rows[0];
  EXPECT_EQ(row.n, 10u);
  EXPECT_EQ(row.pct_relevant_and_interpretable, 60.0);
  EXPECT_EQ(row.pct_relevant, 80.0);
  EXPECT_EQ(row.pct_interpretable, 70.0);
  EXPECT_EQ(row.pct_reasonable.value_or(-1), 70.0);
}

TEST(Aggregate, RelevantButNotInterpretable) {
  std::vector<ResponseRecord> records{can_record("x", kDelimited)};
  auto report = aggregate(records, {consensus("x", true, true, false)}, testing_support::gold(),
                          AggregateMode::HumanFirst);
  EXPECT_EQ(report.rows[0].pct_relevant, 100.0);
  EXPECT_EQ(report.rows[0].pct_relevant_and_interpretable, 0.0);
}

TEST(Aggregate, EmptyAndMissingConsensus) {
  EXPECT_TRUE(aggregate({}, {}, testing_support::gold(), AggregateMode::HumanFirst).rows.empty());
  std::vector<ResponseRecord> records{can_record("x", kDelimited)};
  try {
    aggregate(records, {{"x", "alice", true, true, true, ""}}, testing_support::gold(), AggregateMode::HumanFirst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingConsensus);
  }
}

TEST(Aggregate, AutoOnlyUsesParserAndGold) {
  std::vector<ResponseRecord> records{can_record("a", kDelimited),
                                      can_record("b", "Take can to kitchen\n2. Throw away can\n3. Wash hands"),
                                      can_record("c", "Wipe down all surfaces in conference room.")};
  auto report = aggregate(records, {}, testing_support::gold(), AggregateMode::AutoOnly);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_FALSE(report.rows[0].pct_reasonable.has_value());
  EXPECT_NEAR(report.rows[0].pct_relevant, 100.0 / 3.0, 1e-12);
  // "hands" is not grounded in the scene; the wipe step does not parse.
  EXPECT_NEAR(report.rows[0].pct_interpretable, 100.0 / 3.0, 1e-12);
  report = aggregate(records, {consensus("b", true, false, false)}, testing_support::gold(), AggregateMode::AutoOnly);
  EXPECT_EQ(report.rows[0].pct_reasonable.value_or(-1), 100.0);
}

// Random rating fixtures: conjunction bound, range, and permutation invariance.
TEST(AggregateProperty, BoundsAndPermutationInvariance) {
  std::mt19937 rng(17);
  auto g = testing_support::gold();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ResponseRecord> records;
    std::vector<RatingRecord> ratings;
    const std::size_t n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = can_record("r" + std::to_string(i), kDelimited);
      r.n_examples = 1 + rng() % 3;
      r.temperature = (rng() % 2) ? 0.0 : 0.8;
      records.push_back(r);
      ratings.push_back(consensus(r.id, rng() % 2, rng() % 2, rng() % 2));
      if (rng() % 2) ratings.push_back({r.id, "bob", bool(rng() % 2), bool(rng() % 2), bool(rng() % 2), ""});
    }
    auto report = aggregate(records, ratings, g, AggregateMode::HumanFirst);
    for (const auto& row : report.rows) {
      EXPECT_LE(row.pct_relevant_and_interpretable, std::min(row.pct_relevant, row.pct_interpretable));
      for (double v : {row.pct_relevant, row.pct_interpretable, row.pct_relevant_and_interpretable, *row.pct_reasonable}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 100.0);
      }
    }
    std::shuffle(records.begin(), records.end(), rng);
    std::shuffle(ratings.begin(), ratings.end(), rng);
    EXPECT_EQ(report_csv(aggregate(records, ratings, g, AggregateMode::HumanFirst)), report_csv(report));
  }
}

TEST(ReportCsv, Format) {
  ExperimentReport report;
  ReportRow row;
  row.key = {"tidy, conference room", 2, 0.3, ContextScope::Partial, FeatureScope::Full, Strategy::Batch};
  row.n = 3;
  row.pct_relevant = 100.0 / 3.0;
  row.pct_interpretable = 50;
  row.pct_relevant_and_interpretable = 0;
  report.rows.push_back(row);
  EXPECT_EQ(report_csv(report),
            "domain,n_examples,temperature,context,features,strategy,n,pct_reasonable,pct_relevant,"
            "pct_interpretable,pct_relevant_and_interpretable\n"
            "\"tidy, conference room\",2,0.3,partial,full,batch,3,,33.33,50.00,0.00\n");
}

TEST(GoldStandard, ParseAndNormalize) {
  auto g = GoldStandard::parse(
      "gold: tidy attic / 2\nsummary: box stored\nstep: 1. Pick up the box.\nstep: Put box in cupboard\nalt:\n"
      "step: Take box to cupboard\n");
  const auto* e = g.find("tidy attic", 2);
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->summary, "box stored");
  EXPECT_EQ(e->sequences, (std::vector<std::vector<std::string>>{{"pick up box", "put box in cupboard"},
                                                                  {"take box to cupboard"}}));
  EXPECT_EQ(g.find("tidy attic", 1), nullptr);
  EXPECT_EQ(normalize_step("12. Put THE can  in a bin!"), "put can in bin");
  EXPECT_THROW(GoldStandard::parse("step: Pick up box\n"), Error);
}

TEST(GoldStandard, ShippedFilesCoverEveryObject) {
  auto g = testing_support::gold();
  for (const auto& s : sweep_inputs().scenes)
    for (std::size_t i = 0; i < s.objects.size(); ++i) EXPECT_NE(g.find(s.task_phrase, i), nullptr) << s.task_phrase << i;
}

TEST(Records, JsonRoundTrip) {
  auto r = can_record("a/b", kDelimited);
  r.temperature = 0.3;
  r.strategy = Strategy::Iterative;
  r.context = ContextScope::Full;
  r.features = FeatureScope::NameOnly;
  r.style = Style::Predicate;
  r.created_at = "2026-01-01T00:00:00Z";
  EXPECT_EQ(response_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  RatingRecord rating{"a/b", "alice", true, false, true, "close"};
  EXPECT_EQ(rating_from_json(nlohmann::json::parse(to_json(rating).dump())), rating);
}

TEST(RecordStore, AppendReadPending) {
  TempDir dir;
  RecordStore store(dir.path());
  auto a = can_record("a", kDelimited);
  auto b = can_record("b", kDelimited);
  auto c = can_record("c", kDelimited);
  c.experiment = "other";
  store.append_responses({a, b, c});
  store.append_responses({a});
  EXPECT_EQ(store.responses("t"), (std::vector<ResponseRecord>{a, b}));
  EXPECT_EQ(store.responses().size(), 3u);
  EXPECT_EQ(store.response("c").value(), c);
  EXPECT_FALSE(store.response("z"));

  store.append_rating(consensus("a", true, true, true));
  store.append_rating({"a", "alice", true, false, true, ""});
  try {
    store.append_rating(consensus("a", false, false, false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateRating);
  }
  EXPECT_EQ(store.ratings().size(), 2u);
  auto pending = store.pending("t", kConsensusRater);
  ASSERT_EQ(pending.size(), 1u);
  EXPECT_EQ(pending[0].id, "b");
  EXPECT_EQ(store.pending("t", "bob").size(), 2u);

  RecordStore reopened(dir.path());
  EXPECT_EQ(reopened.ratings().size(), 2u);
}
