#include "aegis/game.hpp"

#include <algorithm>

#include "aegis/digest.hpp"
#include "aegis/error.hpp"

namespace aegis {

using nlohmann::json;

namespace {

constexpr int kStateVersion = 1;
constexpr int kEndingRank = 1 << 20;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

int Phase::rank() const {
  switch (kind) {
    case Kind::Intro: return 0;
    case Kind::Auth: return 1;
    case Kind::Scene: return 1 + scene;
    case Kind::Ending: return kEndingRank;
    case Kind::Done: return kEndingRank + 1;
  }
  return -1;
}

std::string_view Phase::kind_name() const {
  switch (kind) {
    case Kind::Intro: return "Intro";
    case Kind::Auth: return "Auth";
    case Kind::Scene: return "Scene";
    case Kind::Ending: return "Ending";
    case Kind::Done: return "Done";
  }
  return "?";
}

std::string Phase::to_string() const {
  if (kind == Kind::Scene) return "Scene(" + std::to_string(scene) + ")";
  return std::string(kind_name());
}

Phase parse_phase(std::string_view text) {
  if (text == "Intro") return Phase::intro();
  if (text == "Auth") return Phase::auth();
  if (text == "Ending") return Phase::ending();
  if (text == "Done") return Phase::done();
  if (text.starts_with("Scene(") && text.ends_with(")")) {
    const std::string digits(text.substr(6, text.size() - 7));
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return Phase::in_scene(std::stoi(digits));
    }
  }
  throw Error("unknown phase '" + std::string(text) + "'");
}

// ---- transitions -----------------------------------------------------------

GameState new_session(const ScenarioScript& script, const PromptBundle& bundle) {
  require_valid(script);
  GameState state;
  state.phase = Phase::intro();
  state.history.push_back({Role::System, bundle.system_prompt});
  return state;
}

GameState apply_player_input(GameState state, std::string_view player_text) {
  if (state.phase.is(Phase::Kind::Done)) throw WrongPhase("the game is over");
  if (trim(player_text).empty()) throw PreconditionError("player input is empty");
  state.history.push_back({Role::User, std::string(player_text)});
  state.awaiting_player_since_last_clue = false;
  ++state.rounds;
  if (state.phase.is(Phase::Kind::Intro)) state.phase = Phase::auth();
  return state;
}

std::pair<GameState, TurnOutcome> apply_turn(GameState state, const TurnResponse& resp,
                                             const ScenarioScript& script) {
  if (state.phase.is(Phase::Kind::Done)) throw WrongPhase("the game is over");

  TurnOutcome outcome;
  outcome.response = resp;
  StateDelta& delta = outcome.state_delta;
  auto clamp = [&](std::string reason) {
    delta.clamped = true;
    delta.clamp_reasons.push_back(std::move(reason));
  };

  const Phase before = state.phase;

  if (resp.clue_triggered_id) {
    const int clue_id = *resp.clue_triggered_id;
    const Scene* current = before.is(Phase::Kind::Scene) ? script.scene(before.scene) : nullptr;
    if (current == nullptr) {
      clamp("clue " + std::to_string(clue_id) + " triggered outside a scene");
    } else if (!current->has_clue(clue_id)) {
      clamp("clue " + std::to_string(clue_id) + " does not belong to scene " + std::to_string(current->scene_id));
    } else if (state.delivered_clues.count(clue_id) != 0) {
      clamp("clue " + std::to_string(clue_id) + " was already delivered");
    } else {
      state.delivered_clues.insert(clue_id);
      state.awaiting_player_since_last_clue = true;
      for (const Clue& c : current->clues) {
        if (c.clue_id == clue_id) delta.clue_delivered = c;
      }
    }
  }

  if (resp.scene_triggered_id) {
    const int target = *resp.scene_triggered_id;
    const std::string label = "scene trigger " + std::to_string(target);
    switch (state.phase.kind) {
      case Phase::Kind::Intro:
        clamp(label + " before the game started");
        break;
      case Phase::Kind::Auth: {
        const int first = script.scenes.front().scene_id;
        if (target == first) {
          state.phase = Phase::in_scene(first);
          delta.scene_advanced = target;
        } else {
          clamp(label + " during authentication (expected " + std::to_string(first) + ")");
        }
        break;
      }
      case Phase::Kind::Scene: {
        const Scene* current = script.scene(state.phase.scene);
        const int next = state.phase.scene + 1;
        if (target != next) {
          clamp(label + " is not the next scene (" + std::to_string(next) + ")");
          break;
        }
        const bool all_delivered = std::all_of(current->clues.begin(), current->clues.end(),
                                                [&](const Clue& c) { return state.delivered_clues.count(c.clue_id) != 0; });
        if (!all_delivered) {
          clamp(label + " before every clue of scene " + std::to_string(current->scene_id) + " was delivered");
        } else if (state.awaiting_player_since_last_clue) {
          clamp(label + " before the player responded to the last clue");
        } else {
          state.phase = script.scene(next) != nullptr ? Phase::in_scene(next) : Phase::ending();
          delta.scene_advanced = target;
        }
        break;
      }
      case Phase::Kind::Ending:
        clamp(label + " during the ending decision");
        break;
      case Phase::Kind::Done:
        break;
    }
  }

  outcome.phase_after = state.phase;
  outcome.round = state.rounds;
  return {std::move(state), std::move(outcome)};
}

std::pair<GameState, std::string> apply_decision(GameState state, const ScenarioScript& script, int scene_id,
                                                 std::string_view option_id) {
  if (state.phase.is(Phase::Kind::Done)) throw WrongPhase("the game is over");
  const Scene* scene = script.scene(scene_id);
  if (!state.phase.is(Phase::Kind::Scene) || state.phase.scene != scene_id || scene == nullptr ||
      !scene->decision) {
    throw NoSuchDecision("no open decision in scene " + std::to_string(scene_id));
  }
  if (state.decisions.count(scene_id) != 0) {
    throw AlreadyDecided("scene " + std::to_string(scene_id) + " was already decided");
  }
  const DecisionOption* option = scene->decision->find(option_id);
  if (option == nullptr) throw UnknownOption("unknown option '" + std::string(option_id) + "'");

  state.decisions[scene_id] = option->option_id;
  state.history.push_back({Role::User, "[Decision in scene " + std::to_string(scene_id) + ": " +
                                           option->option_id + " - " + option->label + "]"});
  return {std::move(state), option->consequence_text};
}

std::pair<GameState, std::string> apply_ending(GameState state, const ScenarioScript& script,
                                               std::string_view option_id) {
  if (!state.phase.is(Phase::Kind::Ending)) {
    throw WrongPhase("endings can only be chosen in the Ending phase (now " + state.phase.to_string() + ")");
  }
  const auto id = parse_ending_id(option_id);
  const EndingOption* ending = id ? script.ending(*id) : nullptr;
  if (ending == nullptr) throw UnknownOption("unknown ending '" + std::string(option_id) + "'");
  state.ending_choice = *id;
  state.phase = Phase::done();
  return {std::move(state), ending->epilogue_text};
}

std::vector<ChatMessage> history_window(const std::vector<ChatMessage>& history, std::size_t cap) {
  if (cap == 0 || history.size() <= cap + 1) return history;
  std::vector<ChatMessage> out;
  out.reserve(cap + 1);
  out.push_back(history.front());
  out.insert(out.end(), history.end() - static_cast<std::ptrdiff_t>(cap), history.end());
  return out;
}

// ---- serialization ---------------------------------------------------------

json state_to_json(const GameState& state) {
  json j = json::object();
  j["state_version"] = kStateVersion;
  j["phase"] = state.phase.to_string();
  j["delivered_clues"] = state.delivered_clues;
  j["awaiting_player_since_last_clue"] = state.awaiting_player_since_last_clue;
  json history = json::array();
  for (const auto& m : state.history) history.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j["history"] = std::move(history);
  j["transcript_cursor"] = state.transcript_cursor;
  j["ending_choice"] = state.ending_choice ? json(std::string(to_string(*state.ending_choice))) : json(nullptr);
  json decisions = json::object();
  for (const auto& [scene, option] : state.decisions) decisions[std::to_string(scene)] = option;
  j["decisions"] = std::move(decisions);
  j["rounds"] = state.rounds;
  return j;
}

GameState state_from_json(const json& j) {
  try {
    if (j.at("state_version").get<int>() != kStateVersion) throw Error("unsupported state_version");
    GameState s;
    s.phase = parse_phase(j.at("phase").get<std::string>());
    s.delivered_clues = j.at("delivered_clues").get<std::set<int>>();
    s.awaiting_player_since_last_clue = j.at("awaiting_player_since_last_clue").get<bool>();
    for (const auto& m : j.at("history")) {
      s.history.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    s.transcript_cursor = j.at("transcript_cursor").get<std::int64_t>();
    if (const auto& e = j.at("ending_choice"); !e.is_null()) {
      const auto id = parse_ending_id(e.get<std::string>());
      if (!id) throw Error("unknown ending_choice");
      s.ending_choice = *id;
    }
    for (const auto& [scene, option] : j.at("decisions").items()) s.decisions[std::stoi(scene)] = option.get<std::string>();
    s.rounds = j.at("rounds").get<int>();
    return s;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed game state: ") + e.what());
  }
}

std::string serialize_state(const GameState& state) {
  return state_to_json(state).dump(-1, ' ', false, json::error_handler_t::replace);
}

GameState deserialize_state(std::string_view text) {
  const json j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) throw Error("game state is not valid JSON");
  return state_from_json(j);
}

std::string state_hash(const GameState& state) { return sha256_hex(serialize_state(state)); }

SessionSummary session_summary(const GameState& state) {
  return {state.rounds, static_cast<int>(state.delivered_clues.size()), state.decisions, state.ending_choice};
}

}  // namespace aegis
