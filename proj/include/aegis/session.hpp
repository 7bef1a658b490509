#pragma once

// A live game session: the state machine wired to a provider and a store.
// Turns within one session are serialized; a failed turn leaves the state
// untouched.

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "aegis/game.hpp"
#include "aegis/provider.hpp"
#include "aegis/store.hpp"

namespace aegis {

struct SessionConfig {
  GameConfig game;
  ProviderConfig provider;
};

/// Events implied by an applied turn, in log order after ParsedTurn.
std::vector<TranscriptEvent> derived_events(const TurnOutcome& outcome, const Phase& before);

class Session {
 public:
  /// Registers the session in `store` and starts in Intro.
  Session(std::string session_id, std::shared_ptr<const ScenarioScript> script, PromptBundle bundle,
          SessionConfig config, std::shared_ptr<ChatProvider> provider, std::shared_ptr<SessionStore> store);

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// One full turn: record input, call the model, apply, persist.
  TurnOutcome submit_input(std::string_view player_text);
  TurnOutcome submit_decision(int scene_id, std::string_view option_id);
  /// Returns the Done state; the epilogue is logged as an EndingChosen event.
  GameState choose_ending(std::string_view option_id);

  /// Snapshot taken after the last completed operation.
  GameState state() const;
  const std::string& id() const { return id_; }
  const ScenarioScript& script() const { return *script_; }
  const PromptBundle& bundle() const { return bundle_; }
  /// Engine-authored opening shown before the first input.
  std::string intro_text() const;
  std::vector<TranscriptEvent> transcript() const;

 private:
  void publish(GameState next);

  std::string id_;
  std::shared_ptr<const ScenarioScript> script_;
  PromptBundle bundle_;
  SessionConfig config_;
  std::shared_ptr<ChatProvider> provider_;
  std::shared_ptr<SessionStore> store_;

  std::mutex turn_mutex_;
  mutable std::mutex snapshot_mutex_;
  GameState state_;
};

}  // namespace aegis
