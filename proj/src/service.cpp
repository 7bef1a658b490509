#include "aegis/service.hpp"

#include <regex>

#include "aegis/digest.hpp"
#include "aegis/error.hpp"
#include "httplib.h"

namespace aegis {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

ApiReply error_reply(int status, std::string_view kind, const std::string& message) {
  return {status, {{"error", std::string(kind)}, {"message", message}}};
}

/// Maps an engine error to its HTTP status.
ApiReply reply_for(const std::exception& e) {
  if (dynamic_cast<const UnknownSession*>(&e)) return error_reply(404, "UnknownSession", e.what());
  if (dynamic_cast<const WrongPhase*>(&e)) return error_reply(409, "WrongPhase", e.what());
  if (dynamic_cast<const AlreadyDecided*>(&e)) return error_reply(409, "AlreadyDecided", e.what());
  if (dynamic_cast<const NoSuchDecision*>(&e)) return error_reply(409, "NoSuchDecision", e.what());
  if (dynamic_cast<const UnknownOption*>(&e)) return error_reply(422, "UnknownOption", e.what());
  if (dynamic_cast<const PreconditionError*>(&e)) return error_reply(422, "PreconditionError", e.what());
  if (dynamic_cast<const ProtocolError*>(&e)) return error_reply(502, "ProtocolError", e.what());
  if (dynamic_cast<const TimeoutError*>(&e)) return error_reply(502, "TimeoutError", e.what());
  if (dynamic_cast<const TransportError*>(&e)) return error_reply(502, "TransportError", e.what());
  if (dynamic_cast<const AuthError*>(&e)) return error_reply(502, "AuthError", e.what());
  if (dynamic_cast<const StorageError*>(&e)) return error_reply(500, "StorageError", e.what());
  return error_reply(500, "Error", e.what());
}

/// Parses a request body; an empty body reads as {}.
json body_object(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("request body must be a JSON object");
  return j;
}

bool valid_script_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, pattern);
}

template <typename F>
ApiReply guarded(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    return error_reply(400, "BadRequest", e.what());
  } catch (const std::exception& e) {
    return reply_for(e);
  }
}

}  // namespace

json clue_view(const Clue& clue) {
  return {{"clue_id", clue.clue_id},
          {"title", clue.title},
          {"content", clue.content},
          {"image_ref", clue.image_ref ? json(*clue.image_ref) : json(nullptr)}};
}

json outcome_view(const TurnOutcome& outcome) {
  const StateDelta& d = outcome.state_delta;
  return {{"seq", outcome.seq},
          {"round", outcome.round},
          {"phase", std::string(outcome.phase_after.kind_name())},
          {"phase_detail", outcome.phase_after.to_string()},
          {"scene_id", outcome.phase_after.is(Phase::Kind::Scene) ? json(outcome.phase_after.scene) : json(nullptr)},
          {"gamemaster_guidance", outcome.response.gamemaster_guidance},
          {"aegis_reaction", outcome.response.aegis_reaction},
          {"clue", d.clue_delivered ? clue_view(*d.clue_delivered) : json(nullptr)},
          {"scene_advanced", d.scene_advanced ? json(*d.scene_advanced) : json(nullptr)},
          {"clamped", d.clamped},
          {"clamp_reasons", d.clamp_reasons}};
}

GameService::GameService(ServiceConfig config) : config_(std::move(config)) {
  config_.session.provider.validate();
  store_ = config_.data_dir.empty() ? std::make_shared<SessionStore>() : std::make_shared<SessionStore>(config_.data_dir);
  if (!config_.provider_factory) {
    config_.provider_factory = [](const std::string&) { return std::make_shared<HttpProvider>(); };
  }
}

GameService::~GameService() { stop(); }

std::shared_ptr<const ScenarioScript> GameService::load_script_by_id(const std::string& script_id) {
  std::lock_guard lock(mutex_);
  if (auto it = scripts_.find(script_id); it != scripts_.end()) return it->second;
  const auto path = config_.scripts_dir / (script_id + ".script");
  if (!valid_script_id(script_id) || !std::filesystem::exists(path)) return nullptr;
  auto script = std::make_shared<const ScenarioScript>(load_script_file(path));
  require_valid(*script);
  scripts_.emplace(script_id, script);
  return script;
}

std::shared_ptr<Session> GameService::touch(const std::string& session_id, std::string* script_id,
                                            std::string* created_at) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw UnknownSession(session_id);
  it->second.last_used = std::chrono::steady_clock::now();
  if (script_id) *script_id = it->second.script_id;
  if (created_at) *created_at = it->second.created_at;
  return it->second.session;
}

std::shared_ptr<Session> GameService::find_session(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second.session;
}

std::size_t GameService::session_count() {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::size_t GameService::evict_idle(std::chrono::steady_clock::time_point now) {
  std::lock_guard lock(mutex_);
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second.last_used > config_.idle_ttl) {
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

ApiReply GameService::create_session(const std::string& request_body) {
  return guarded([&]() -> ApiReply {
    const json body = body_object(request_body);

    std::string script_id = config_.default_script_id;
    if (auto it = body.find("script_id"); it != body.end() && !it->is_null()) {
      if (!it->is_string()) return error_reply(400, "BadRequest", "script_id must be a string");
      script_id = it->get<std::string>();
    }
    PromptVersion version = config_.default_version;
    if (auto it = body.find("prompt_version"); it != body.end() && !it->is_null()) {
      const auto parsed = it->is_string() ? parse_prompt_version(it->get<std::string>()) : std::nullopt;
      if (!parsed) return error_reply(400, "BadVersion", "prompt_version must be V1, V2 or V3");
      version = *parsed;
    }

    auto script = load_script_by_id(script_id);
    if (!script) return error_reply(404, "UnknownScript", "no script '" + script_id + "'");

    PromptBundle bundle = assemble_system_prompt(persona_for(script->persona_ref), *script, version);
    const std::string id = random_token(16);
    auto session = std::make_shared<Session>(id, script, std::move(bundle), config_.session,
                                             config_.provider_factory(id), store_);
    const std::string created_at = utc_now_iso8601();
    {
      std::lock_guard lock(mutex_);
      sessions_[id] = {session, script_id, created_at, std::chrono::steady_clock::now()};
    }
    return {201,
            {{"session_id", id},
             {"created_at", created_at},
             {"phase", std::string(session->state().phase.kind_name())},
             {"script_id", script_id},
             {"prompt_version", std::string(to_string(version))},
             {"intro_text", session->intro_text()}}};
  });
}

ApiReply GameService::submit_turn(const std::string& session_id, const std::string& request_body) {
  return guarded([&]() -> ApiReply {
    auto session = touch(session_id);
    const json body = body_object(request_body);
    const auto it = body.find("text");
    if (it == body.end() || !it->is_string()) return error_reply(422, "PreconditionError", "text is required");
    json view = outcome_view(session->submit_input(it->get<std::string>()));
    view["session_id"] = session_id;
    return {200, std::move(view)};
  });
}

ApiReply GameService::submit_decision(const std::string& session_id, const std::string& request_body) {
  return guarded([&]() -> ApiReply {
    auto session = touch(session_id);
    const json body = body_object(request_body);
    const auto scene = body.find("scene_id");
    const auto option = body.find("option_id");
    if (scene == body.end() || !scene->is_number_integer() || option == body.end() || !option->is_string()) {
      return error_reply(422, "PreconditionError", "scene_id (integer) and option_id (string) are required");
    }
    const TurnOutcome outcome = session->submit_decision(scene->get<int>(), option->get<std::string>());
    json view = outcome_view(outcome);
    view["session_id"] = session_id;
    view["consequence_text"] = outcome.response.gamemaster_guidance;
    return {200, std::move(view)};
  });
}

ApiReply GameService::choose_ending(const std::string& session_id, const std::string& request_body) {
  return guarded([&]() -> ApiReply {
    auto session = touch(session_id);
    const json body = body_object(request_body);
    const auto option = body.find("option_id");
    if (option == body.end() || !option->is_string()) {
      return error_reply(422, "PreconditionError", "option_id is required");
    }
    const GameState done = session->choose_ending(option->get<std::string>());
    const EndingOption* ending = session->script().ending(*done.ending_choice);
    json view = state_view(session_id);
    view["epilogue_text"] = ending ? ending->epilogue_text : "";
    return {200, std::move(view)};
  });
}

json GameService::state_view(const std::string& session_id) {
  std::string script_id;
  std::string created_at;
  auto session = touch(session_id, &script_id, &created_at);
  const GameState state = session->state();
  const ScenarioScript& script = session->script();

  json clues = json::array();
  for (int id : state.delivered_clues) {
    if (const Scene* s = script.scene_of_clue(id)) {
      for (const auto& c : s->clues) {
        if (c.clue_id == id) clues.push_back(clue_view(c));
      }
    }
  }
  json decisions = json::object();
  for (const auto& [scene, option] : state.decisions) decisions[std::to_string(scene)] = option;

  json view = {{"session_id", session_id},
               {"created_at", created_at},
               {"script_id", script_id},
               {"prompt_version", std::string(to_string(session->bundle().version))},
               {"phase", std::string(state.phase.kind_name())},
               {"phase_detail", state.phase.to_string()},
               {"scene_id", state.phase.is(Phase::Kind::Scene) ? json(state.phase.scene) : json(nullptr)},
               {"scene_title", nullptr},
               {"scene_count", script.scenes.size()},
               {"rounds", state.rounds},
               {"delivered_clues", std::move(clues)},
               {"decisions", std::move(decisions)},
               {"ending_choice", state.ending_choice ? json(std::string(to_string(*state.ending_choice))) : json(nullptr)},
               {"transcript_cursor", state.transcript_cursor},
               {"state_hash", state_hash(state)},
               {"intro_text", session->intro_text()},
               {"pending_decision", nullptr},
               {"ending_options", json::array()}};

  if (state.phase.is(Phase::Kind::Scene)) {
    const Scene* scene = script.scene(state.phase.scene);
    if (scene) {
      view["scene_title"] = scene->title;
      if (scene->decision && state.decisions.count(scene->scene_id) == 0) {
        json options = json::array();
        for (const auto& o : scene->decision->options) options.push_back({{"option_id", o.option_id}, {"label", o.label}});
        view["pending_decision"] = {
            {"scene_id", scene->scene_id}, {"prompt_text", scene->decision->prompt_text}, {"options", options}};
      }
    }
  }
  if (state.phase.is(Phase::Kind::Ending)) {
    for (const auto& e : script.endings) {
      view["ending_options"].push_back({{"option_id", std::string(to_string(e.option_id))}, {"label", e.label}});
    }
  }
  return view;
}

ApiReply GameService::get_state(const std::string& session_id) {
  return guarded([&]() -> ApiReply { return {200, state_view(session_id)}; });
}

ApiReply GameService::get_transcript(const std::string& session_id) {
  return guarded([&]() -> ApiReply {
    auto session = touch(session_id);
    json events = json::array();
    for (const auto& ev : session->transcript()) {
      events.push_back(
          {{"seq", ev.seq}, {"ts", ev.ts}, {"kind", std::string(to_string(ev.kind))}, {"payload", ev.payload}});
    }
    return {200, std::move(events)};
  });
}

void GameService::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const ApiReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(-1, ' ', false, json::error_handler_t::replace), kJson);
  };
  auto before = [this] { evict_idle(); };

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
  server.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
    before();
    send(res, create_session(req.body));
  });
  server.Post(R"(/sessions/([^/]+)/turns)", [=, this](const httplib::Request& req, httplib::Response& res) {
    before();
    send(res, submit_turn(req.matches[1], req.body));
  });
  server.Post(R"(/sessions/([^/]+)/decision)", [=, this](const httplib::Request& req, httplib::Response& res) {
    before();
    send(res, submit_decision(req.matches[1], req.body));
  });
  server.Post(R"(/sessions/([^/]+)/ending)", [=, this](const httplib::Request& req, httplib::Response& res) {
    before();
    send(res, choose_ending(req.matches[1], req.body));
  });
  server.Get(R"(/sessions/([^/]+)/transcript)", [=, this](const httplib::Request& req, httplib::Response& res) {
    before();
    send(res, get_transcript(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    before();
    send(res, get_state(req.matches[1]));
  });
  if (!config_.static_dir.empty() && std::filesystem::is_directory(config_.static_dir)) {
    server.set_mount_point("/", config_.static_dir.string());
  }
}

int GameService::start(const std::string& host, int port) {
  stop();
  server_ = std::make_unique<httplib::Server>();
  mount(*server_);
  // the turn endpoint is synchronous, so allow for the provider's full retry budget
  const auto budget = config_.session.provider.timeout * (config_.session.provider.max_retries + 2);
  server_->set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(budget) + std::chrono::seconds(5));
  server_->set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(budget) + std::chrono::seconds(5));
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    server_.reset();
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool GameService::listen(const std::string& host, int port) {
  httplib::Server server;
  mount(server);
  return server.listen(host, port);
}

void GameService::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  server_.reset();
}

}  // namespace aegis
