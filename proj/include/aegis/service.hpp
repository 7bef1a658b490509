#pragma once

// HTTP front end for game sessions. JSON in, JSON out.
//
//   POST /sessions                     {script_id?, prompt_version?}
//   POST /sessions/{id}/turns          {text}
//   POST /sessions/{id}/decision       {scene_id, option_id}
//   POST /sessions/{id}/ending         {option_id}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/transcript
//   GET  /healthz
//
// Static files are served from `/` when a static directory is configured.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "aegis/session.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace aegis {

struct ServiceConfig {
  /// Where `<script_id>.script` files live.
  std::filesystem::path scripts_dir;
  std::string default_script_id = "cracking_aegis";
  PromptVersion default_version = PromptVersion::V3;
  /// Transcript root; empty keeps sessions in memory only.
  std::filesystem::path data_dir;
  /// Served at `/` when non-empty and present.
  std::filesystem::path static_dir;
  SessionConfig session;
  /// Sessions untouched for this long are dropped from memory.
  std::chrono::seconds idle_ttl = std::chrono::hours(24);
  /// Makes the chat backend for a new session. Defaults to HttpProvider.
  std::function<std::shared_ptr<ChatProvider>(const std::string& session_id)> provider_factory;
};

/// Status code and JSON body of one API call.
struct ApiReply {
  int status = 200;
  nlohmann::json body;
};

class GameService {
 public:
  explicit GameService(ServiceConfig config);
  ~GameService();

  GameService(const GameService&) = delete;
  GameService& operator=(const GameService&) = delete;

  // Route handlers, usable without a socket.
  ApiReply create_session(const std::string& request_body);
  ApiReply submit_turn(const std::string& session_id, const std::string& request_body);
  ApiReply submit_decision(const std::string& session_id, const std::string& request_body);
  ApiReply choose_ending(const std::string& session_id, const std::string& request_body);
  ApiReply get_state(const std::string& session_id);
  ApiReply get_transcript(const std::string& session_id);

  /// Registers every route on `server`.
  void mount(httplib::Server& server);

  /// Binds and serves on a background thread. Port 0 picks a free port;
  /// the bound port is returned.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

  /// Drops sessions idle for longer than the TTL. Returns how many.
  std::size_t evict_idle(std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());
  std::size_t session_count();

  std::shared_ptr<Session> find_session(const std::string& session_id);
  SessionStore& store() { return *store_; }

 private:
  struct Entry {
    std::shared_ptr<Session> session;
    std::string script_id;
    std::string created_at;
    std::chrono::steady_clock::time_point last_used;
  };

  std::shared_ptr<const ScenarioScript> load_script_by_id(const std::string& script_id);
  std::shared_ptr<Session> touch(const std::string& session_id, std::string* script_id = nullptr,
                                 std::string* created_at = nullptr);
  nlohmann::json state_view(const std::string& session_id);

  ServiceConfig config_;
  std::shared_ptr<SessionStore> store_;

  std::mutex mutex_;
  std::map<std::string, Entry> sessions_;
  std::map<std::string, std::shared_ptr<const ScenarioScript>> scripts_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

/// JSON view of a turn outcome as returned by the turns endpoint.
nlohmann::json outcome_view(const TurnOutcome& outcome);
nlohmann::json clue_view(const Clue& clue);

}  // namespace aegis
