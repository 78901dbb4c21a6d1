#include "support.hpp"

#include <cstdlib>
#include <random>

#include "taskprompt/error.hpp"

namespace testing_support {

using namespace taskprompt;

std::string data_path(const std::string& relative) { return std::string(TASKPROMPT_DATA_DIR) + "/" + relative; }
std::string golden_path(const std::string& relative) {
  return std::string(TASKPROMPT_GOLDEN_DIR) + "/" + relative;
}

Scene conference_room() { return load_scene_file(data_path("scenes/conference_room.scene")); }
Scene kitchen() { return load_scene_file(data_path("scenes/kitchen.scene")); }
Scene banquet() { return load_scene_file(data_path("scenes/banquet.scene")); }
ExampleLibrary library() { return load_example_library_file(data_path("examples.lib")); }
ActionLexicon lexicon() { return ActionLexicon::load_file(data_path("lexicon.txt")); }

AgentGrammar grammar() {
  auto g = AgentGrammar::load_file(data_path("grammar.txt"));
  g.add_lexicon(lexicon());
  return g;
}

GoldStandard gold() {
  GoldStandard g;
  for (const char* f : {"gold/conference_room.gold", "gold/kitchen.gold", "gold/banquet.gold"})
    g.merge(GoldStandard::load_file(data_path(f)));
  return g;
}

std::shared_ptr<ScriptedBackend> transcripts() {
  return std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(data_path("fixtures/transcripts.json")));
}

std::unique_ptr<Gateway> make_gateway(std::shared_ptr<CompletionBackend> backend, const std::filesystem::path& cache_dir,
                                      bool cache_only) {
  GatewayOptions opts;
  opts.cache_dir = cache_dir;
  opts.cache_only = cache_only;
  opts.sleep = [](std::chrono::milliseconds) {};
  return std::make_unique<Gateway>(std::move(backend), opts);
}

std::unique_ptr<Gateway> replay_gateway() {
  GatewayOptions opts;
  opts.cache_dir = data_path("cache");
  opts.cache_only = true;
  opts.model = kReplayModel;
  opts.sleep = [](std::chrono::milliseconds) {};
  return std::make_unique<Gateway>(std::make_shared<FailingBackend>(ErrorCode::BackendUnavailable, false), opts);
}

SweepInputs sweep_inputs() {
  SweepInputs in;
  in.scenes = {conference_room(), kitchen(), banquet()};
  in.gold = gold();
  in.library = library();
  in.grammar = grammar();
  in.lexicon = lexicon();
  in.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
  return in;
}

std::string render_all_objects(Style style) {
  auto scene = conference_room();
  PromptConfig config;
  config.style = style;
  std::string out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    out += "=== object " + std::to_string(i) + " ===\n";
    out += render_prompt(scene, i, config, library()).text;
    out += "\n";
  }
  return out;
}

RenderedPrompt can_prompt() { return render_prompt(conference_room(), 0, PromptConfig{}, library()); }

TempDir::TempDir() {
  std::random_device rd;
  auto base = std::filesystem::temp_directory_path();
  for (;;) {
    path_ = base / ("taskprompt-test-" + std::to_string(rd()));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string FailingBackend::send(const nlohmann::ordered_json&) {
  ++calls_;
  Error e(code_, "scripted failure");
  e.retryable = retryable_;
  if (code_ == ErrorCode::RateLimited) e.retry_after = std::chrono::milliseconds(1500);
  throw e;
}

}  // namespace testing_support
