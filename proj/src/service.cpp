#include "taskprompt/service.hpp"

#include <atomic>
#include <functional>

#include <httplib.h>

#include "taskprompt/error.hpp"

namespace taskprompt {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kScenesLog = "scenes.jsonl";
constexpr const char* kSessionsLog = "sessions.jsonl";

ordered_json scene_json(const std::string& id, const Scene& scene) {
  ordered_json j;
  j["id"] = id;
  j["task"] = scene.task_phrase;
  j["agent"] = scene.agent_location;
  auto objects = ordered_json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    ordered_json features = ordered_json::object();
    for (const auto& f : o.features) features[f.attribute] = f.value;
    objects.push_back({{"index", i}, {"name", o.name}, {"location", o.location}, {"features", features}});
  }
  j["objects"] = std::move(objects);
  j["text"] = serialize_scene(scene);
  return j;
}

std::size_t counter_after(const std::string& id, std::string_view prefix) {
  if (id.rfind(prefix, 0) != 0) return 0;
  try {
    return std::stoul(id.substr(prefix.size())) + 1;
  } catch (const std::exception&) {
    return 0;
  }
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message, bool retryable = false) {
  ordered_json j;
  j["code"] = to_string(code);
  j["message"] = message;
  j["retryable"] = retryable;
  res.status = http_status(code);
  res.set_content(j.dump(), "application/json");
}

void send_json(httplib::Response& res, const ordered_json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler inner) {
  return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
    try {
      inner(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what(), e.retryable);
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::InvalidArgument, std::string("bad request body: ") + e.what());
    }
  };
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body);
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  return j;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownScene:
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownProposal:
    case ErrorCode::UnknownResponse:
      return 404;
    case ErrorCode::SessionNotActive:
    case ErrorCode::DuplicateRating:
    case ErrorCode::MissingConsensus:
      return 409;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::RateLimited:
    case ErrorCode::AuthFailure:
    case ErrorCode::MalformedBackendReply:
    case ErrorCode::CacheMiss:
      return 502;
    case ErrorCode::Io:
      return 500;
    default:
      return 400;
  }
}

SessionService::SessionService(Gateway& gateway, ServiceResources resources, std::filesystem::path data_dir)
    : gateway_(gateway),
      resources_(std::move(resources)),
      engine_(gateway, resources_.grammar, resources_.lexicon, resources_.library, resources_.policy),
      store_(std::move(data_dir)) {
  scenes_ = resources_.preset_scenes;
  replay();
}

void SessionService::replay() {
  for (const auto& j : store_.read_lines(kScenesLog)) {
    auto id = j.at("id").get<std::string>();
    scenes_[id] = load_scene(j.at("text").get<std::string>());
    next_scene_ = std::max(next_scene_, counter_after(id, "scene-"));
  }
  for (const auto& j : store_.read_lines(kSessionsLog)) apply_event(j);
}

void SessionService::apply_event(const json& e) {
  const auto kind = e.at("event").get<std::string>();
  const auto id = e.at("session").get<std::string>();
  if (kind == "open") {
    auto scene = load_scene(e.at("scene").get<std::string>());
    auto config = session_config_from_json(e.at("config"));
    auto slot = std::make_shared<Slot>();
    slot->snapshot = std::make_shared<const Session>(engine_.open(
        id, e.at("scene_id").get<std::string>(), scene, e.at("target_index").get<std::size_t>(), config));
    sessions_[id] = slot;
    next_session_ = std::max(next_session_, counter_after(id, "s"));
    return;
  }
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "event log names unknown session '" + id + "'");
  auto next = std::make_shared<Session>(*it->second->snapshot);
  if (kind == "decision") {
    engine_.apply(*next, Decision{e.at("proposal_id").get<std::string>(),
                                  parse_verdict(e.at("verdict").get<std::string>()),
                                  e.value("edited_text", "")});
  } else if (kind == "finish") {
    engine_.finish(*next, e.at("elicit_goal").get<bool>());
  } else {
    throw Error(ErrorCode::Io, "unknown event '" + kind + "' in session log");
  }
  it->second->snapshot = std::move(next);
}

std::string SessionService::add_scene(const Scene& scene) {
  std::lock_guard lock(mutex_);
  auto id = "scene-" + std::to_string(next_scene_++);
  ordered_json j;
  j["id"] = id;
  j["text"] = serialize_scene(scene);
  store_.append_line(kScenesLog, j);
  scenes_[id] = scene;
  return id;
}

Scene SessionService::scene(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = scenes_.find(id);
  if (it == scenes_.end()) throw Error(ErrorCode::UnknownScene, "no scene '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionService::scene_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : scenes_) out.push_back(id);
  return out;
}

std::shared_ptr<SessionService::Slot> SessionService::slot(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
  return it->second;
}

std::shared_ptr<const Session> SessionService::open_session(const std::string& scene_id,
                                                            std::size_t target_index,
                                                            const SessionConfig& config) {
  auto sc = scene(scene_id);
  check_object_index(sc, target_index);
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "s" + std::to_string(next_session_++);
  }
  auto session = std::make_shared<const Session>(engine_.open(id, scene_id, sc, target_index, config));

  ordered_json event;
  event["event"] = "open";
  event["session"] = id;
  event["scene_id"] = scene_id;
  event["scene"] = serialize_scene(sc);
  event["target_index"] = target_index;
  event["config"] = to_json(config);
  auto s = std::make_shared<Slot>();
  s->snapshot = session;
  std::lock_guard lock(mutex_);
  store_.append_line(kSessionsLog, event);
  sessions_[id] = s;
  return session;
}

std::shared_ptr<const Session> SessionService::session(const std::string& id) const {
  return std::atomic_load(&slot(id)->snapshot);
}

std::shared_ptr<const Session> SessionService::decide(const std::string& session_id, const Decision& decision) {
  auto s = slot(session_id);
  std::lock_guard lock(s->mutex);
  auto next = std::make_shared<Session>(*std::atomic_load(&s->snapshot));
  engine_.apply(*next, decision);
  ordered_json event;
  event["event"] = "decision";
  event["session"] = session_id;
  event["proposal_id"] = decision.proposal_id;
  event["verdict"] = to_string(decision.verdict);
  event["edited_text"] = decision.edited_text;
  store_.append_line(kSessionsLog, event);
  std::shared_ptr<const Session> done = std::move(next);
  std::atomic_store(&s->snapshot, done);
  return done;
}

std::shared_ptr<const Session> SessionService::finish(const std::string& session_id, bool elicit_goal) {
  auto s = slot(session_id);
  std::lock_guard lock(s->mutex);
  auto next = std::make_shared<Session>(*std::atomic_load(&s->snapshot));
  engine_.finish(*next, elicit_goal);
  ordered_json event;
  event["event"] = "finish";
  event["session"] = session_id;
  event["elicit_goal"] = elicit_goal;
  store_.append_line(kSessionsLog, event);
  std::shared_ptr<const Session> done = std::move(next);
  std::atomic_store(&s->snapshot, done);
  return done;
}

std::string SessionService::report(const std::string& experiment, AggregateMode mode) const {
  return report_csv(aggregate(store_.responses(experiment), store_.ratings(), resources_.gold, mode));
}

void SessionService::mount(httplib::Server& server) {
  server.Get("/scenes", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, scene_ids());
  }));
  server.Post("/scenes", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto body = body_json(req);
    auto sc = load_scene(body.at("text").get<std::string>());
    auto id = add_scene(sc);
    send_json(res, scene_json(id, sc), 201);
  }));
  server.Get(R"(/scenes/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto id = req.matches[1].str();
    send_json(res, scene_json(id, scene(id)));
  }));

  server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto body = body_json(req);
    auto config = session_config_from_json(body.value("config", json::object()));
    auto s = open_session(body.at("scene_id").get<std::string>(), body.at("target_index").get<std::size_t>(),
                          config);
    send_json(res, to_json(*s), 201);
  }));
  server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, to_json(*session(req.matches[1].str())));
  }));
  server.Post(R"(/sessions/([^/]+)/decisions)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto body = body_json(req);
                Decision d{body.value("proposal_id", ""), parse_verdict(body.at("verdict").get<std::string>()),
                           body.value("edited_text", "")};
                send_json(res, to_json(*decide(req.matches[1].str(), d)));
              }));
  server.Post(R"(/sessions/([^/]+)/finish)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto body = body_json(req);
    send_json(res, to_json(*finish(req.matches[1].str(), body.value("elicit_goal", false))));
  }));

  server.Get("/ratings/pending", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto rater = req.get_param_value("rater");
    if (rater.empty()) rater = std::string(kConsensusRater);
    auto out = ordered_json::array();
    for (const auto& r : store_.pending(req.get_param_value("experiment"), rater)) out.push_back(to_json(r));
    send_json(res, out);
  }));
  server.Get("/ratings", guarded([this](const httplib::Request&, httplib::Response& res) {
    auto out = ordered_json::array();
    for (const auto& r : store_.ratings()) out.push_back(to_json(r));
    send_json(res, out);
  }));
  server.Post("/ratings", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto rating = rating_from_json(body_json(req));
    if (!store_.response(rating.response_id))
      throw Error(ErrorCode::UnknownResponse, "no response '" + rating.response_id + "'");
    store_.append_rating(rating);
    send_json(res, to_json(rating), 201);
  }));
  server.Get(R"(/experiments/([^/]+)/report\.csv)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto mode_name = req.get_param_value("mode");
               AggregateMode mode = AggregateMode::AutoOnly;
               if (mode_name == "human") {
                 mode = AggregateMode::HumanFirst;
               } else if (!mode_name.empty() && mode_name != "auto") {
                 throw Error(ErrorCode::InvalidArgument, "mode must be 'auto' or 'human'");
               }
               res.set_content(report(req.matches[1].str(), mode), "text/csv");
             }));
}

}  // namespace taskprompt
