// Parallel vs serial sweep over a scripted backend with simulated latency.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "taskprompt/backends.hpp"
#include "taskprompt/harness.hpp"
#include "taskprompt/text.hpp"

using namespace taskprompt;

namespace {

std::string data(const std::string& rel) { return std::string(TASKPROMPT_DATA_DIR) + "/" + rel; }

const SweepInputs& inputs() {
  static const SweepInputs in = [] {
    SweepInputs s;
    for (const char* f : {"scenes/conference_room.scene", "scenes/kitchen.scene", "scenes/banquet.scene"})
      s.scenes.push_back(load_scene_file(data(f)));
    for (const char* f : {"gold/conference_room.gold", "gold/kitchen.gold", "gold/banquet.gold"})
      s.gold.merge(GoldStandard::load_file(data(f)));
    s.library = load_example_library_file(data("examples.lib"));
    s.lexicon = ActionLexicon::load_file(data("lexicon.txt"));
    s.grammar = AgentGrammar::load_file(data("grammar.txt"));
    s.grammar.add_lexicon(s.lexicon);
    s.clock = [] { return std::string("bench"); };
    return s;
  }();
  return in;
}

// No cache: every prompt pays the backend latency, as a live sweep would.
std::unique_ptr<Gateway> gateway(int latency_us, std::size_t parallel) {
  auto script = nlohmann::json::parse(text::read_file(data("fixtures/transcripts.json")));
  script["latency_us"] = latency_us;
  GatewayOptions opts;
  opts.max_parallel = parallel;
  return std::make_unique<Gateway>(std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(script)), opts);
}

SweepConfig config() {
  auto c = SweepConfig::primary();
  c.domains = {"tidy conference room"};
  return c;
}

void BM_SweepSerial(benchmark::State& state) {
  for (auto _ : state) {
    auto gw = gateway(static_cast<int>(state.range(0)), 1);
    auto result = run_sweep_serial(inputs(), config(), *gw);
    benchmark::DoNotOptimize(result.records.data());
  }
}

// range(1) is both the OpenMP thread count and the gateway's in-flight bound.
void BM_SweepParallel(benchmark::State& state) {
  const int threads = static_cast<int>(state.range(1));
  omp_set_num_threads(threads);
  for (auto _ : state) {
    auto gw = gateway(static_cast<int>(state.range(0)), static_cast<std::size_t>(threads));
    auto result = run_sweep(inputs(), config(), *gw);
    benchmark::DoNotOptimize(result.records.data());
  }
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Arg(0)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)
    ->ArgsProduct({{0, 500}, {1, 2, 4, 8}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
