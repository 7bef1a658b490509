#pragma once

// Append-only session transcripts. One line-delimited JSON file per session
// under <data_dir>/sessions/<session_id>.log, with a small metadata sidecar
// (<session_id>.meta) holding the script digest, prompt version and the
// latest serialized state.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aegis/game.hpp"
#include "aegis/protocol.hpp"
#include "aegis/script.hpp"
#include "json.hpp"

namespace aegis {

enum class EventKind {
  PlayerInput,
  RawModelReply,
  ParsedTurn,
  ClueDelivered,
  SceneAdvanced,
  DecisionMade,
  EndingChosen,
  Clamped,
  Error,
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

struct TranscriptEvent {
  /// Assigned by the store; 0 until appended.
  std::int64_t seq = 0;
  /// UTC ISO-8601; filled on append when empty.
  std::string ts;
  EventKind kind = EventKind::PlayerInput;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const TranscriptEvent&) const = default;
};

TranscriptEvent make_event(EventKind kind, nlohmann::json payload);

/// One export line: {"seq","ts","kind","payload"}.
std::string event_to_line(const TranscriptEvent& event);
TranscriptEvent event_from_line(std::string_view line);

/// Inverse of SessionStore::export_session.
std::vector<TranscriptEvent> import_events(std::string_view stream);
std::string export_events(const std::vector<TranscriptEvent>& events);

struct SessionRecord {
  std::string session_id;
  std::string script_hash;
  PromptVersion prompt_version = PromptVersion::V3;
  std::vector<TranscriptEvent> events;
  std::optional<std::string> final_state;

  bool operator==(const SessionRecord&) const = default;
};

class SessionStore {
 public:
  /// Persists under data_dir/sessions. Existing logs are picked up lazily.
  explicit SessionStore(std::filesystem::path data_dir);
  /// Keeps everything in memory.
  SessionStore();

  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  bool persistent() const { return !dir_.empty(); }
  const std::filesystem::path& sessions_dir() const { return dir_; }

  /// Registers a new session. Throws StorageError when the id exists.
  void create(const std::string& session_id, const std::string& script_hash, PromptVersion version);
  bool exists(const std::string& session_id);

  /// Assigns the next seq and durably appends. Throws UnknownSession or StorageError.
  std::int64_t append_event(const std::string& session_id, TranscriptEvent event);
  /// Appends several events in order; returns their seqs.
  std::vector<std::int64_t> append_events(const std::string& session_id, std::vector<TranscriptEvent> events);

  void set_final_state(const std::string& session_id, const std::string& serialized_state);

  std::vector<TranscriptEvent> events(const std::string& session_id);
  SessionRecord record(const std::string& session_id);
  /// Line-delimited event stream ordered by seq.
  std::string export_session(const std::string& session_id);
  std::vector<std::string> list_sessions();

 private:
  struct Entry {
    SessionRecord record;
    bool loaded = false;
  };

  Entry& entry(const std::string& session_id);
  void write_meta(const Entry& e) const;
  std::filesystem::path log_path(const std::string& session_id) const;
  std::filesystem::path meta_path(const std::string& session_id) const;

  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, Entry> sessions_;
};

/// Reads <id>.log and, if present, its <id>.meta sidecar.
SessionRecord load_record(const std::filesystem::path& log_path);

/// Every *.log under `dir`, sorted by session id.
std::vector<SessionRecord> load_records(const std::filesystem::path& dir);

/// Re-runs parsing and the state machine over a recorded session and checks
/// every derived event against the log. Throws ReplayDivergence(seq) at the
/// first mismatch.
GameState replay(const SessionRecord& record, const ScenarioScript& script);

}  // namespace aegis
