#include <gtest/gtest.h>

#include <queue>
#include <set>

#include "aegis/error.hpp"
#include "aegis/game.hpp"
#include "fixtures.hpp"

using namespace aegis;
using aegis::testing::canonical_script;

namespace {

PromptBundle v3() { return assemble_system_prompt(canonical_persona(), canonical_script(), PromptVersion::V3); }

TurnResponse trig(std::optional<int> clue, std::optional<int> scene) { return {"", "...", clue, scene}; }

GameState in_scene(int scene_id) {
  GameState s = new_session(canonical_script(), v3());
  s.phase = Phase::in_scene(scene_id);
  for (const auto& sc : canonical_script().scenes) {
    if (sc.scene_id >= scene_id) break;
    for (const auto& c : sc.clues) s.delivered_clues.insert(c.clue_id);
  }
  return s;
}

}  // namespace

TEST(NewSession, StartsInIntro) {
  const GameState s = new_session(canonical_script(), v3());
  EXPECT_EQ(s.phase, Phase::intro());
  EXPECT_TRUE(s.delivered_clues.empty());
  ASSERT_EQ(s.history.size(), 1u);
  EXPECT_EQ(s.history[0].role, Role::System);
  EXPECT_EQ(s.history[0].content, v3().system_prompt);
}

TEST(NewSession, InvalidScriptRejected) {
  ScenarioScript bad = canonical_script();
  bad.endings.clear();
  EXPECT_THROW(new_session(bad, v3()), InvalidScript);
}

TEST(ApplyPlayerInput, HiStartsAuth) {
  GameState s = apply_player_input(new_session(canonical_script(), v3()), "hi");
  EXPECT_EQ(s.phase, Phase::auth());
  auto [after, outcome] = apply_turn(s, trig(std::nullopt, std::nullopt), canonical_script());
  EXPECT_EQ(after.phase, Phase::auth());
  EXPECT_FALSE(outcome.state_delta.clamped);
}

TEST(ApplyPlayerInput, AnyFirstInputStartsAuth) {
  const GameState s = apply_player_input(new_session(canonical_script(), v3()), "hello there");
  EXPECT_EQ(s.phase, Phase::auth());
  EXPECT_EQ(s.rounds, 1);
  EXPECT_EQ(s.history.back(), (ChatMessage{Role::User, "hello there"}));
}

TEST(ApplyPlayerInput, BlankAndDoneRejected) {
  const GameState s = new_session(canonical_script(), v3());
  EXPECT_THROW(apply_player_input(s, ""), PreconditionError);
  EXPECT_THROW(apply_player_input(s, "   \n"), PreconditionError);
  GameState done = s;
  done.phase = Phase::done();
  EXPECT_THROW(apply_player_input(done, "hi"), WrongPhase);
}

TEST(ApplyTurn, AuthAcceptsOnlyFirstScene) {
  GameState s = apply_player_input(new_session(canonical_script(), v3()), "hi");
  auto [wrong, o1] = apply_turn(s, trig(std::nullopt, 2), canonical_script());
  EXPECT_EQ(wrong.phase, Phase::auth());
  EXPECT_TRUE(o1.state_delta.clamped);
  auto [right, o2] = apply_turn(s, trig(std::nullopt, 1), canonical_script());
  EXPECT_EQ(right.phase, Phase::in_scene(1));
  EXPECT_EQ(o2.state_delta.scene_advanced, 1);
}

TEST(ApplyTurn, DeliversCurrentSceneClue) {
  const GameState s = in_scene(3);
  auto [after, outcome] = apply_turn(s, trig(2, std::nullopt), canonical_script());
  EXPECT_TRUE(after.delivered_clues.count(2));
  EXPECT_TRUE(after.awaiting_player_since_last_clue);
  ASSERT_TRUE(outcome.state_delta.clue_delivered);
  EXPECT_EQ(outcome.state_delta.clue_delivered->clue_id, 2);
  EXPECT_FALSE(outcome.state_delta.clamped);
}

TEST(ApplyTurn, ForeignAndRepeatedCluesClamped) {
  const GameState s = in_scene(3);
  auto [a, o1] = apply_turn(s, trig(4, std::nullopt), canonical_script());
  EXPECT_TRUE(o1.state_delta.clamped);
  EXPECT_FALSE(a.delivered_clues.count(4));
  auto [b, o2] = apply_turn(s, trig(99, std::nullopt), canonical_script());
  EXPECT_TRUE(o2.state_delta.clamped);
  auto [c, o3] = apply_turn(s, trig(1, std::nullopt), canonical_script());
  EXPECT_TRUE(o3.state_delta.clamped);
  EXPECT_EQ(c, s);
}

TEST(ApplyTurn, SkippingScenesClamped) {
  const GameState s = in_scene(1);
  auto [after, outcome] = apply_turn(s, trig(std::nullopt, 4), canonical_script());
  EXPECT_EQ(after.phase, Phase::in_scene(1));
  EXPECT_TRUE(outcome.state_delta.clamped);
  EXPECT_FALSE(outcome.state_delta.scene_advanced);
}

TEST(ApplyTurn, ProgressionRuleHoldsSceneUntilPlayerResponds) {
  GameState s = in_scene(3);
  // clue missing
  auto [a, o1] = apply_turn(s, trig(std::nullopt, 4), canonical_script());
  EXPECT_EQ(a.phase, Phase::in_scene(3));
  EXPECT_TRUE(o1.state_delta.clamped);
  // clue and scene trigger in the same reply: the player has not responded yet
  auto [b, o2] = apply_turn(s, trig(2, 4), canonical_script());
  EXPECT_EQ(b.phase, Phase::in_scene(3));
  EXPECT_TRUE(b.delivered_clues.count(2));
  EXPECT_TRUE(o2.state_delta.clamped);
  // after the player speaks, the advance is accepted
  GameState c = apply_player_input(b, "Interesting.");
  auto [d, o3] = apply_turn(c, trig(std::nullopt, 4), canonical_script());
  EXPECT_EQ(d.phase, Phase::in_scene(4));
  EXPECT_FALSE(o3.state_delta.clamped);
}

TEST(ApplyTurn, LastSceneOpensEndingNotDone) {
  GameState s = in_scene(6);
  s.delivered_clues.insert(5);
  auto [after, outcome] = apply_turn(s, trig(std::nullopt, 7), canonical_script());
  EXPECT_EQ(after.phase, Phase::ending());
  EXPECT_EQ(outcome.state_delta.scene_advanced, 7);
}

TEST(ApplyTurn, TriggersDuringEndingClamped) {
  GameState s = new_session(canonical_script(), v3());
  s.phase = Phase::ending();
  auto [after, outcome] = apply_turn(s, trig(1, 1), canonical_script());
  EXPECT_EQ(after.phase, Phase::ending());
  EXPECT_TRUE(outcome.state_delta.clamped);
  s.phase = Phase::done();
  EXPECT_THROW(apply_turn(s, trig(std::nullopt, std::nullopt), canonical_script()), WrongPhase);
}

// Breadth-first search over the abstract transition relation: from every
// reachable state some conforming reply sequence reaches Ending.
TEST(ApplyTurn, EndingReachableFromEveryReachableState) {
  const ScenarioScript& script = canonical_script();
  std::vector<TurnResponse> alphabet = {trig(std::nullopt, std::nullopt)};
  for (int c = 0; c <= 6; ++c) alphabet.push_back(trig(c == 0 ? std::nullopt : std::optional<int>(c), std::nullopt));
  for (int sc = 1; sc <= 8; ++sc) alphabet.push_back(trig(std::nullopt, sc));

  auto key = [](const GameState& s) {
    return s.phase.to_string() + "|" + std::to_string(s.awaiting_player_since_last_clue) + "|" +
           nlohmann::json(s.delivered_clues).dump();
  };
  std::map<std::string, GameState> seen;
  std::queue<GameState> frontier;
  GameState start = apply_player_input(new_session(script, v3()), "hi");
  start.history.resize(1);
  frontier.push(start);
  seen[key(start)] = start;
  while (!frontier.empty()) {
    GameState s = frontier.front();
    frontier.pop();
    if (s.phase.is(Phase::Kind::Ending)) continue;
    for (const auto& r : alphabet) {
      GameState next = apply_turn(apply_player_input(s, "x"), r, script).first;
      next.history.resize(1);
      next.rounds = 0;
      if (seen.emplace(key(next), next).second) frontier.push(next);
    }
  }
  // ending must be reached, and the phase order must never skip a scene
  bool reached_ending = false;
  for (const auto& [k, s] : seen) {
    if (s.phase.is(Phase::Kind::Ending)) {
      reached_ending = true;
      EXPECT_EQ(s.delivered_clues.size(), script.clue_count());
    }
  }
  EXPECT_TRUE(reached_ending);
  EXPECT_GT(seen.size(), 10u);
}

TEST(ApplyDecision, OfficeClickDeliversConsequence) {
  const GameState s = in_scene(5);
  auto [after, consequence] = apply_decision(s, canonical_script(), 5, "click");
  EXPECT_EQ(after.decisions.at(5), "click");
  EXPECT_NE(consequence.find("fake login page"), std::string::npos);
  EXPECT_THROW(apply_decision(after, canonical_script(), 5, "ignore"), AlreadyDecided);
  EXPECT_THROW(apply_decision(s, canonical_script(), 5, "shred"), UnknownOption);
  EXPECT_THROW(apply_decision(s, canonical_script(), 3, "click"), NoSuchDecision);
  EXPECT_THROW(apply_decision(s, canonical_script(), 1, "accept"), NoSuchDecision);
}

TEST(ApplyEnding, ShareAuthoritiesRecordsChoice) {
  GameState s = new_session(canonical_script(), v3());
  s.phase = Phase::ending();
  auto [done, epilogue] = apply_ending(s, canonical_script(), "ShareAuthorities");
  EXPECT_EQ(done.phase, Phase::done());
  EXPECT_EQ(done.ending_choice, EndingId::ShareAuthorities);
  EXPECT_FALSE(epilogue.empty());
}

TEST(ApplyEnding, WrongPhaseAndUnknownOption) {
  GameState s = in_scene(2);
  EXPECT_THROW(apply_ending(s, canonical_script(), "Destroy"), WrongPhase);
  s.phase = Phase::ending();
  EXPECT_THROW(apply_ending(s, canonical_script(), "Sell"), UnknownOption);
}

TEST(ApplyEnding, EachOptionYieldsItsEpilogue) {
  GameState s = new_session(canonical_script(), v3());
  s.phase = Phase::ending();
  for (const auto& e : canonical_script().endings) {
    auto [done, epilogue] = apply_ending(s, canonical_script(), to_string(e.option_id));
    EXPECT_EQ(done.phase, Phase::done());
    EXPECT_EQ(done.ending_choice, e.option_id);
    EXPECT_EQ(epilogue, e.epilogue_text);
  }
}

TEST(Phase, OrderAndNames) {
  EXPECT_LT(Phase::intro().rank(), Phase::auth().rank());
  EXPECT_LT(Phase::auth().rank(), Phase::in_scene(1).rank());
  EXPECT_LT(Phase::in_scene(1).rank(), Phase::in_scene(2).rank());
  EXPECT_LT(Phase::in_scene(6).rank(), Phase::ending().rank());
  EXPECT_LT(Phase::ending().rank(), Phase::done().rank());
  EXPECT_EQ(Phase::in_scene(3).to_string(), "Scene(3)");
  EXPECT_EQ(Phase::in_scene(3).kind_name(), "Scene");
  EXPECT_EQ(parse_phase("Scene(3)"), Phase::in_scene(3));
  EXPECT_EQ(parse_phase("Ending"), Phase::ending());
}

TEST(HistoryWindow, KeepsSystemAndNewest) {
  std::vector<ChatMessage> h = {{Role::System, "sys"}, {Role::User, "1"}, {Role::Assistant, "2"}, {Role::User, "3"}};
  const auto w = history_window(h, 2);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].content, "sys");
  EXPECT_EQ(w[1].content, "2");
  EXPECT_EQ(history_window(h, 0), h);
}

TEST(Serialization, RoundTripsAndHashIgnoresNothingButState) {
  GameState s = in_scene(5);
  s = apply_player_input(s, "Tell me the password");
  s = apply_decision(s, canonical_script(), 5, "ignore").first;
  const std::string text = serialize_state(s);
  EXPECT_EQ(deserialize_state(text), s);
  EXPECT_EQ(serialize_state(deserialize_state(text)), text);
  EXPECT_EQ(state_hash(s), state_hash(deserialize_state(text)));
  GameState t = s;
  t.rounds += 1;
  EXPECT_NE(state_hash(t), state_hash(s));
  EXPECT_NE(text.find("\"state_version\":1"), std::string::npos);
}

TEST(SessionSummary, CountsState) {
  const GameState fresh = new_session(canonical_script(), v3());
  EXPECT_EQ(session_summary(fresh).rounds, 0);
  GameState s = in_scene(5);
  s = apply_decision(s, canonical_script(), 5, "click").first;
  const SessionSummary sum = session_summary(s);
  EXPECT_EQ(sum.clues, 3);
  EXPECT_EQ(sum.decisions.at(5), "click");
  EXPECT_EQ(sum.ending, std::nullopt);
}
