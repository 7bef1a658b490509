#include "aegis/digest.hpp"
#include "aegis/error.hpp"
#include "aegis/session.hpp"
#include "aegis/store.hpp"

namespace aegis {

using nlohmann::json;

namespace {

bool parses(const std::string& raw) {
  try {
    parse_turn_response(raw);
    return true;
  } catch (const MalformedResponse&) {
    return false;
  }
}

bool is_derived(EventKind k) {
  return k == EventKind::ClueDelivered || k == EventKind::SceneAdvanced || k == EventKind::Clamped;
}

const json& field(const TranscriptEvent& ev, const char* key) {
  auto it = ev.payload.find(key);
  if (it == ev.payload.end()) throw ReplayDivergence(ev.seq, std::string("payload lacks '") + key + "'");
  return *it;
}

std::string text_field(const TranscriptEvent& ev, const char* key) {
  const json& v = field(ev, key);
  if (!v.is_string()) throw ReplayDivergence(ev.seq, std::string("'") + key + "' is not text");
  return v.get<std::string>();
}

}  // namespace

GameState replay(const SessionRecord& record, const ScenarioScript& script) {
  if (!record.script_hash.empty() && record.script_hash != script_hash(script)) {
    throw ReplayDivergence(0, "script digest does not match the record");
  }
  const PromptBundle bundle = assemble_system_prompt(persona_for(script.persona_ref), script, record.prompt_version);
  GameState state = new_session(script, bundle);

  const auto& events = record.events;
  std::int64_t last_seq = 0;
  for (const auto& ev : events) {
    if (ev.seq <= last_seq) throw ReplayDivergence(ev.seq, "seq is not strictly increasing");
    last_seq = ev.seq;
  }

  std::size_t i = 0;
  while (i < events.size()) {
    const TranscriptEvent& ev = events[i];
    switch (ev.kind) {
      case EventKind::PlayerInput: {
        GameState pending;
        try {
          pending = apply_player_input(state, text_field(ev, "text"));
        } catch (const ReplayDivergence&) {
          throw;
        } catch (const Error& e) {
          throw ReplayDivergence(ev.seq, e.what());
        }

        std::size_t j = i + 1;
        std::vector<const TranscriptEvent*> raws;
        while (j < events.size() && events[j].kind == EventKind::RawModelReply) {
          const TranscriptEvent& raw = events[j];
          const std::string text = text_field(raw, "text");
          if (text_field(raw, "sha256") != sha256_hex(text)) {
            throw ReplayDivergence(raw.seq, "raw reply does not match its digest");
          }
          raws.push_back(&raw);
          ++j;
        }
        if (j == events.size()) throw ReplayDivergence(ev.seq, "turn has no ParsedTurn or Error event");

        if (events[j].kind == EventKind::Error) {
          for (const auto* raw : raws) {
            if (parses(text_field(*raw, "text"))) {
              throw ReplayDivergence(raw->seq, "reply parses now but the recorded turn failed");
            }
          }
          i = j + 1;
          break;
        }
        if (events[j].kind != EventKind::ParsedTurn) {
          throw ReplayDivergence(events[j].seq, "expected ParsedTurn, found " + std::string(to_string(events[j].kind)));
        }
        if (raws.empty()) throw ReplayDivergence(events[j].seq, "ParsedTurn without a RawModelReply");

        for (std::size_t r = 0; r + 1 < raws.size(); ++r) {
          if (parses(text_field(*raws[r], "text"))) {
            throw ReplayDivergence(raws[r]->seq, "a retried reply parses now");
          }
        }
        const std::string final_raw = text_field(*raws.back(), "text");
        TurnResponse response;
        try {
          response = parse_turn_response(final_raw);
        } catch (const MalformedResponse& e) {
          throw ReplayDivergence(raws.back()->seq, e.what());
        }
        if (to_json(response) != events[j].payload) {
          throw ReplayDivergence(events[j].seq, "parsed fields differ from the recorded ParsedTurn");
        }

        auto [next, outcome] = apply_turn(pending, response, script);
        next.history.push_back({Role::Assistant, final_raw});

        std::size_t k = j + 1;
        for (const auto& expected : derived_events(outcome, pending.phase)) {
          if (k >= events.size()) throw ReplayDivergence(last_seq + 1, "missing " + std::string(to_string(expected.kind)));
          if (events[k].kind != expected.kind || events[k].payload != expected.payload) {
            throw ReplayDivergence(events[k].seq, "expected " + std::string(to_string(expected.kind)) + " " +
                                                      expected.payload.dump());
          }
          ++k;
        }
        if (k < events.size() && is_derived(events[k].kind)) {
          throw ReplayDivergence(events[k].seq, "unexpected " + std::string(to_string(events[k].kind)));
        }
        next.transcript_cursor = events[k - 1].seq;
        state = std::move(next);
        i = k;
        break;
      }
      case EventKind::DecisionMade: {
        const json& scene = field(ev, "scene_id");
        if (!scene.is_number_integer()) throw ReplayDivergence(ev.seq, "scene_id is not an integer");
        try {
          auto [next, consequence] = apply_decision(state, script, scene.get<int>(), text_field(ev, "option_id"));
          if (consequence != text_field(ev, "consequence_text")) {
            throw ReplayDivergence(ev.seq, "decision consequence differs");
          }
          next.transcript_cursor = ev.seq;
          state = std::move(next);
        } catch (const ReplayDivergence&) {
          throw;
        } catch (const Error& e) {
          throw ReplayDivergence(ev.seq, e.what());
        }
        ++i;
        break;
      }
      case EventKind::EndingChosen: {
        try {
          auto [next, epilogue] = apply_ending(state, script, text_field(ev, "option_id"));
          if (epilogue != text_field(ev, "epilogue_text")) throw ReplayDivergence(ev.seq, "epilogue differs");
          next.transcript_cursor = ev.seq;
          state = std::move(next);
        } catch (const ReplayDivergence&) {
          throw;
        } catch (const Error& e) {
          throw ReplayDivergence(ev.seq, e.what());
        }
        ++i;
        break;
      }
      default:
        throw ReplayDivergence(ev.seq, "unexpected " + std::string(to_string(ev.kind)) + " outside a turn");
    }
  }
  return state;
}

}  // namespace aegis
