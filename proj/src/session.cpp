#include "aegis/session.hpp"

#include "aegis/digest.hpp"
#include "aegis/error.hpp"

namespace aegis {

using nlohmann::json;

namespace {

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
  if (dynamic_cast<const TimeoutError*>(&e)) return "TimeoutError";
  if (dynamic_cast<const TransportError*>(&e)) return "TransportError";
  if (dynamic_cast<const AuthError*>(&e)) return "AuthError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  return "Error";
}

json optional_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

std::vector<TranscriptEvent> raw_reply_events(const std::vector<ParseAttempt>& attempts) {
  std::vector<TranscriptEvent> out;
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    const auto& a = attempts[i];
    out.push_back(make_event(EventKind::RawModelReply, {{"text", a.raw_text},
                                                        {"attempt", static_cast<int>(i) + 1},
                                                        {"requests", a.requests},
                                                        {"sha256", sha256_hex(a.raw_text)}}));
  }
  return out;
}

}  // namespace

std::vector<TranscriptEvent> derived_events(const TurnOutcome& outcome, const Phase& before) {
  std::vector<TranscriptEvent> out;
  const StateDelta& d = outcome.state_delta;
  if (d.clue_delivered) {
    out.push_back(make_event(EventKind::ClueDelivered, {{"clue_id", d.clue_delivered->clue_id}, {"scene_id", before.scene}}));
  }
  if (d.scene_advanced) {
    out.push_back(make_event(EventKind::SceneAdvanced, {{"scene_triggered_id", *d.scene_advanced},
                                                        {"from", before.to_string()},
                                                        {"to", outcome.phase_after.to_string()}}));
  }
  if (d.clamped) {
    out.push_back(make_event(EventKind::Clamped, {{"reasons", d.clamp_reasons},
                                                  {"clue_triggered_id", optional_json(outcome.response.clue_triggered_id)},
                                                  {"scene_triggered_id", optional_json(outcome.response.scene_triggered_id)}}));
  }
  return out;
}

Session::Session(std::string session_id, std::shared_ptr<const ScenarioScript> script, PromptBundle bundle,
                 SessionConfig config, std::shared_ptr<ChatProvider> provider, std::shared_ptr<SessionStore> store)
    : id_(std::move(session_id)),
      script_(std::move(script)),
      bundle_(std::move(bundle)),
      config_(std::move(config)),
      provider_(std::move(provider)),
      store_(std::move(store)) {
  config_.provider.validate();
  state_ = new_session(*script_, bundle_);
  store_->create(id_, script_hash(*script_), bundle_.version);
  store_->set_final_state(id_, serialize_state(state_));
}

GameState Session::state() const {
  std::lock_guard lock(snapshot_mutex_);
  return state_;
}

void Session::publish(GameState next) {
  store_->set_final_state(id_, serialize_state(next));
  std::lock_guard lock(snapshot_mutex_);
  state_ = std::move(next);
}

std::string Session::intro_text() const {
  std::string out = script_->title;
  if (!script_->background.empty()) out += "\n\n" + script_->background;
  out += "\n\nGreet Aegis (for example, \"" + bundle_.start_token + "\") to begin.";
  return out;
}

std::vector<TranscriptEvent> Session::transcript() const { return store_->events(id_); }

TurnOutcome Session::submit_input(std::string_view player_text) {
  std::lock_guard turn(turn_mutex_);
  const GameState current = state();
  GameState after_input = apply_player_input(current, player_text);

  std::vector<TranscriptEvent> events;
  events.push_back(make_event(EventKind::PlayerInput, {{"text", std::string(player_text)}}));

  std::vector<ParseAttempt> attempts;
  ParsedReply reply;
  try {
    const auto window = history_window(after_input.history, config_.game.max_history_messages);
    reply = complete_parsed(*provider_, window, config_.provider, bundle_.corrective_prompt, attempts);
  } catch (const std::exception& e) {
    for (auto& ev : raw_reply_events(attempts)) events.push_back(std::move(ev));
    events.push_back(make_event(EventKind::Error, {{"kind", error_kind(e)}, {"message", e.what()}}));
    try {
      store_->append_events(id_, std::move(events));
    } catch (const std::exception&) {
      // the provider failure is the error worth reporting
    }
    throw;
  }

  for (auto& ev : raw_reply_events(attempts)) events.push_back(std::move(ev));
  events.push_back(make_event(EventKind::ParsedTurn, to_json(reply.response)));

  auto [next, outcome] = apply_turn(after_input, reply.response, *script_);
  next.history.push_back({Role::Assistant, reply.raw_text});
  for (auto& ev : derived_events(outcome, after_input.phase)) events.push_back(std::move(ev));

  const auto seqs = store_->append_events(id_, std::move(events));
  next.transcript_cursor = seqs.back();
  outcome.seq = seqs.front();
  publish(std::move(next));
  return outcome;
}

TurnOutcome Session::submit_decision(int scene_id, std::string_view option_id) {
  std::lock_guard turn(turn_mutex_);
  auto [next, consequence] = apply_decision(state(), *script_, scene_id, option_id);

  const auto seq = store_->append_event(
      id_, make_event(EventKind::DecisionMade,
                      {{"scene_id", scene_id}, {"option_id", std::string(option_id)}, {"consequence_text", consequence}}));
  next.transcript_cursor = seq;

  TurnOutcome outcome;
  outcome.response.gamemaster_guidance = consequence;
  outcome.phase_after = next.phase;
  outcome.round = next.rounds;
  outcome.seq = seq;
  publish(std::move(next));
  return outcome;
}

GameState Session::choose_ending(std::string_view option_id) {
  std::lock_guard turn(turn_mutex_);
  auto [next, epilogue] = apply_ending(state(), *script_, option_id);
  const auto seq = store_->append_event(
      id_, make_event(EventKind::EndingChosen, {{"option_id", std::string(option_id)}, {"epilogue_text", epilogue}}));
  next.transcript_cursor = seq;
  publish(next);
  return next;
}

}  // namespace aegis
