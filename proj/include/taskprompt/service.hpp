#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskprompt/error.hpp"
#include "taskprompt/harness.hpp"
#include "taskprompt/session.hpp"

namespace httplib {
class Server;
}

namespace taskprompt {

/// Shared read-only inputs of the service.
struct ServiceResources {
  AgentGrammar grammar;
  ActionLexicon lexicon;
  ExampleLibrary library;
  DecodePolicy policy;
  GoldStandard gold;
  std::map<std::string, Scene> preset_scenes;  // addressable by id, not persisted
};

/// Scenes, sessions and ratings over append-only logs in a data directory:
/// scenes.jsonl, sessions.jsonl (open/decision/finish events),
/// responses.jsonl and ratings.jsonl. Existing logs are replayed on
/// construction, so the gateway should be warm or the replay fails.
class SessionService {
 public:
  SessionService(Gateway& gateway, ServiceResources resources, std::filesystem::path data_dir);

  std::string add_scene(const Scene& scene);
  Scene scene(const std::string& id) const;
  std::vector<std::string> scene_ids() const;

  std::shared_ptr<const Session> open_session(const std::string& scene_id, std::size_t target_index,
                                              const SessionConfig& config);
  std::shared_ptr<const Session> session(const std::string& id) const;
  std::shared_ptr<const Session> decide(const std::string& session_id, const Decision& decision);
  std::shared_ptr<const Session> finish(const std::string& session_id, bool elicit_goal);

  RecordStore& records() { return store_; }
  std::string report(const std::string& experiment, AggregateMode mode) const;

  /// Registers the HTTP+JSON routes.
  void mount(httplib::Server& server);

 private:
  struct Slot {
    std::mutex mutex;  // serializes mutations of one session
    std::shared_ptr<const Session> snapshot;
  };

  std::shared_ptr<Slot> slot(const std::string& id) const;
  void replay();
  void apply_event(const nlohmann::json& event);

  Gateway& gateway_;
  ServiceResources resources_;
  SessionEngine engine_;
  RecordStore store_;

  mutable std::mutex mutex_;  // guards the maps and counters
  std::map<std::string, Scene> scenes_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::size_t next_scene_ = 1;
  std::size_t next_session_ = 1;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace taskprompt
