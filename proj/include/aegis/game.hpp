#pragma once

// Session state machine. Every function here is pure: it takes a state by
// value and returns the next one. Illegal model triggers are clamped, never
// raised, so the ending phase stays reachable whatever the model emits.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aegis/protocol.hpp"
#include "aegis/provider.hpp"
#include "aegis/script.hpp"
#include "json.hpp"

namespace aegis {

struct Phase {
  enum class Kind { Intro, Auth, Scene, Ending, Done };

  Kind kind = Kind::Intro;
  /// scene_id while kind == Scene, 0 otherwise.
  int scene = 0;

  static Phase intro() { return {Kind::Intro, 0}; }
  static Phase auth() { return {Kind::Auth, 0}; }
  static Phase in_scene(int scene_id) { return {Kind::Scene, scene_id}; }
  static Phase ending() { return {Kind::Ending, 0}; }
  static Phase done() { return {Kind::Done, 0}; }

  bool is(Kind k) const { return kind == k; }
  /// Position in the monotone phase order Intro < Auth < Scene(1) < ... < Ending < Done.
  int rank() const;
  /// "Intro", "Auth", "Scene(3)", "Ending", "Done".
  std::string to_string() const;
  /// Kind name only, as exposed by the service ("Scene" for any scene).
  std::string_view kind_name() const;

  bool operator==(const Phase&) const = default;
};

Phase parse_phase(std::string_view text);

struct GameState {
  Phase phase;
  std::set<int> delivered_clues;
  bool awaiting_player_since_last_clue = false;
  std::vector<ChatMessage> history;
  /// seq of the last transcript event folded into this state.
  std::int64_t transcript_cursor = 0;
  std::optional<EndingId> ending_choice;
  std::map<int, std::string> decisions;
  /// Completed player inputs.
  int rounds = 0;

  bool operator==(const GameState&) const = default;
};

struct StateDelta {
  std::optional<Clue> clue_delivered;
  /// The accepted scene trigger (N + 1 when the last scene opens the ending).
  std::optional<int> scene_advanced;
  bool clamped = false;
  std::vector<std::string> clamp_reasons;

  bool operator==(const StateDelta&) const = default;
};

struct TurnOutcome {
  TurnResponse response;
  StateDelta state_delta;
  Phase phase_after;
  /// Round number after this turn (0 for decisions).
  int round = 0;
  /// seq of the first transcript event of this turn; 0 when not persisted.
  std::int64_t seq = 0;

  bool operator==(const TurnOutcome&) const = default;
};

struct GameConfig {
  /// Non-system messages sent to the provider per turn; 0 = unlimited.
  std::size_t max_history_messages = 0;
};

/// Fresh state in Intro with the system prompt as the only history entry.
/// Throws InvalidScript.
GameState new_session(const ScenarioScript& script, const PromptBundle& bundle);

/// Records a player message: appends it to the history, counts the round,
/// clears the awaiting flag, and moves Intro to Auth. Throws
/// PreconditionError for blank text and WrongPhase once Done.
GameState apply_player_input(GameState state, std::string_view player_text);

/// Applies a parsed model reply under the progression rules.
/// Throws WrongPhase when called on a Done state.
std::pair<GameState, TurnOutcome> apply_turn(GameState state, const TurnResponse& resp,
                                             const ScenarioScript& script);

/// Records an in-scene decision. Returns the new state and the consequence text.
std::pair<GameState, std::string> apply_decision(GameState state, const ScenarioScript& script, int scene_id,
                                                 std::string_view option_id);

/// Chooses the ending. Returns the Done state and the epilogue text.
std::pair<GameState, std::string> apply_ending(GameState state, const ScenarioScript& script,
                                               std::string_view option_id);

/// The provider-bound slice of the history: the system message plus the
/// newest `cap` non-system messages (all of them when cap is 0).
std::vector<ChatMessage> history_window(const std::vector<ChatMessage>& history, std::size_t cap);

/// Versioned canonical serialization (sorted keys, no whitespace).
std::string serialize_state(const GameState& state);
GameState deserialize_state(std::string_view text);
nlohmann::json state_to_json(const GameState& state);
GameState state_from_json(const nlohmann::json& j);
/// SHA-256 of serialize_state.
std::string state_hash(const GameState& state);

struct SessionSummary {
  int rounds = 0;
  int clues = 0;
  std::map<int, std::string> decisions;
  std::optional<EndingId> ending;

  bool operator==(const SessionSummary&) const = default;
};

SessionSummary session_summary(const GameState& state);

}  // namespace aegis
