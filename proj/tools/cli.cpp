#include "aegis/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "aegis/analysis.hpp"
#include "aegis/digest.hpp"
#include "aegis/error.hpp"
#include "aegis/session.hpp"

namespace aegis {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string script = "scripts/cracking_aegis.script";
  std::string version = "V3";
  std::string provider = "live";
  std::string data_dir;
  std::string out;
  std::string config;
  std::string codebook = "codebooks/table3.rules";
  std::string session_id;
  std::string log_path;
  std::string log_dir;
};

PromptVersion version_flag(const std::string& text) {
  auto v = parse_prompt_version(text);
  if (!v) throw ConfigError("--version must be V1, V2 or V3, got '" + text + "'");
  return *v;
}

ProviderConfig provider_config(const Options& o) {
  if (o.config.empty()) return ProviderConfig{};
  std::ifstream in(o.config);
  if (!in) throw ConfigError("cannot read config " + o.config);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + o.config + " is not a JSON object");
  return provider_config_from_json(j.contains("provider") ? j["provider"] : j);
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
  ScenarioScript script;
  try {
    script = load_script_file(o.script);
  } catch (const ParseError& e) {
    err << e.what() << "\n";
    return kExitFindings;
  } catch (const SchemaError& e) {
    err << e.what() << "\n";
    return kExitFindings;
  }
  const auto violations = validate_script(script);
  for (const auto& v : violations) out << v.to_string() << "\n";
  if (!violations.empty()) return kExitFindings;
  out << "ok: " << script.scenes.size() << " scenes, " << script.clue_count() << " clues, " << script.endings.size()
      << " endings\n";
  return kExitOk;
}

int cmd_export_prompt(const Options& o, std::ostream& out) {
  const ScenarioScript script = load_script_file(o.script);
  const PromptBundle bundle = assemble_system_prompt(persona_for(script.persona_ref), script, version_flag(o.version));
  if (o.out.empty()) {
    out << bundle.system_prompt;
    return kExitOk;
  }
  std::ofstream file(o.out, std::ios::binary | std::ios::trunc);
  file << bundle.system_prompt;
  file.flush();
  if (!file) throw StorageError("cannot write " + o.out);
  return kExitOk;
}

void print_outcome(const TurnOutcome& outcome, std::ostream& out) {
  if (!outcome.response.gamemaster_guidance.empty()) out << "GM: " << outcome.response.gamemaster_guidance << "\n";
  if (!outcome.response.aegis_reaction.empty()) out << "AEGIS: " << outcome.response.aegis_reaction << "\n";
  if (const auto& clue = outcome.state_delta.clue_delivered) {
    out << "CLUE " << clue->clue_id << ": " << clue->title << "\n" << clue->content << "\n";
  }
  out << "[" << outcome.phase_after.to_string() << "]\n";
}

void print_prompts(const GameState& state, const ScenarioScript& script, std::ostream& out) {
  if (state.phase.is(Phase::Kind::Scene)) {
    const Scene* scene = script.scene(state.phase.scene);
    if (scene && scene->decision && state.decisions.count(scene->scene_id) == 0) {
      out << "DECISION: " << scene->decision->prompt_text << "\n";
      for (const auto& opt : scene->decision->options) {
        out << "  /decide " << scene->scene_id << " " << opt.option_id << "  (" << opt.label << ")\n";
      }
    }
  } else if (state.phase.is(Phase::Kind::Ending)) {
    out << "ENDING: choose one\n";
    for (const auto& e : script.endings) out << "  /ending " << to_string(e.option_id) << "  (" << e.label << ")\n";
  }
}

int cmd_play(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
  auto script = std::make_shared<const ScenarioScript>(load_script_file(o.script));
  const PromptVersion version = version_flag(o.version);
  SessionConfig config;
  config.provider = provider_config(o);
  auto store = o.data_dir.empty() ? std::make_shared<SessionStore>() : std::make_shared<SessionStore>(o.data_dir);
  const std::string id = o.session_id.empty() ? random_token(16) : o.session_id;

  Session session(id, script, assemble_system_prompt(persona_for(script->persona_ref), *script, version), config,
                  make_provider(o.provider), store);
  err << "session: " << id << "\n";
  out << session.intro_text() << "\n";

  bool failed = false;
  std::string line;
  while (session.state().phase.kind != Phase::Kind::Done && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "/quit") break;
    try {
      if (line == "/state") {
        out << serialize_state(session.state()) << "\n";
      } else if (line.rfind("/decide ", 0) == 0) {
        std::istringstream words(line.substr(8));
        int scene = 0;
        std::string option;
        if (!(words >> scene >> option)) throw PreconditionError("usage: /decide <scene_id> <option_id>");
        print_outcome(session.submit_decision(scene, option), out);
      } else if (line.rfind("/ending ", 0) == 0) {
        std::string option = line.substr(8);
        const GameState done = session.choose_ending(option);
        if (const EndingOption* e = script->ending(*done.ending_choice)) out << "GM: " << e->epilogue_text << "\n";
        out << "[" << done.phase.to_string() << "]\n";
      } else {
        print_outcome(session.submit_input(line), out);
      }
      print_prompts(session.state(), *script, out);
    } catch (const Error& e) {
      failed = true;
      err << "error: " << e.what() << "\n";
    }
  }
  out << "state_hash: " << state_hash(session.state()) << "\n";
  return failed ? kExitRuntime : kExitOk;
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
  const ScenarioScript script = load_script_file(o.script);
  const SessionRecord record = load_record(o.log_path);
  try {
    const GameState state = replay(record, script);
    out << "state_hash: " << state_hash(state) << "\n";
    out << "phase: " << state.phase.to_string() << "\n";
    out << "rounds: " << state.rounds << "\n";
    if (record.final_state && state_hash(deserialize_state(*record.final_state)) != state_hash(state)) {
      err << "replayed state differs from the recorded final state\n";
      return kExitFindings;
    }
    return kExitOk;
  } catch (const ReplayDivergence& e) {
    err << e.what() << "\n";
    return kExitFindings;
  }
}

int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  const Codebook codebook = load_codebook_file(o.codebook);
  const auto records = load_records(o.log_dir);
  RoundStats stats;
  try {
    stats = round_stats(records);
  } catch (const NoSessions& e) {
    err << e.what() << " in " << o.log_dir << "\n";
    return kExitFindings;
  }
  const UsageMatrix matrix = usage_matrix(records, codebook);

  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  fs::create_directories(dir);
  write_heatmap(matrix, dir / "heatmap.csv");
  {
    std::ofstream f(dir / "round_stats.json", std::ios::binary | std::ios::trunc);
    f << format_round_stats(stats);
    if (!f) throw StorageError("cannot write " + (dir / "round_stats.json").string());
  }

  out << "sessions: " << stats.sessions << "\n";
  for (StrategyCode code : matrix.rows) {
    out << to_string(code) << ": " << matrix.row_total(code) << " uses in " << matrix.row_support(code)
        << " sessions\n";
  }
  out << "mean rounds: " << stats.mean << " (min " << stats.min << ", max " << stats.max << ")\n";
  out << "wrote " << (dir / "heatmap.csv").string() << " and " << (dir / "round_stats.json").string() << "\n";
  return kExitOk;
}

}  // namespace

std::shared_ptr<ChatProvider> make_provider(const std::string& spec) {
  if (spec == "live") return std::make_shared<HttpProvider>();
  if (spec.rfind("mock:", 0) == 0 && spec.size() > 5) return scripted_provider(load_reply_queue(spec.substr(5)));
  throw ConfigError("--provider must be 'live' or 'mock:<queue file>', got '" + spec + "'");
}

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cracking Aegis operator tools", "aegis-cli"};
  app.require_subcommand(1);
  Options o;

  auto add_script = [&o](CLI::App* c) { c->add_option("--script", o.script, "Scenario script file"); };
  auto add_version = [&o](CLI::App* c) { c->add_option("--version", o.version, "Prompt version V1, V2 or V3"); };

  auto* validate = app.add_subcommand("validate", "Check a scenario script");
  add_script(validate);

  auto* export_prompt = app.add_subcommand("export-prompt", "Write the assembled system prompt");
  add_script(export_prompt);
  add_version(export_prompt);
  export_prompt->add_option("--out", o.out, "Output file (stdout when omitted)");

  auto* play = app.add_subcommand("play", "Play in line mode");
  add_script(play);
  add_version(play);
  play->add_option("--provider", o.provider, "live or mock:<queue file>");
  play->add_option("--data-dir", o.data_dir, "Directory for session transcripts");
  play->add_option("--config", o.config, "Provider config (JSON)");
  play->add_option("--session-id", o.session_id, "Session id (random when omitted)");

  auto* replay_cmd = app.add_subcommand("replay", "Re-run a session log and print the state hash");
  replay_cmd->add_option("log", o.log_path, "Session log (<id>.log)")->required();
  add_script(replay_cmd);

  auto* analyze = app.add_subcommand("analyze", "Tag player inputs and write the heatmap and round stats");
  analyze->add_option("log_dir", o.log_dir, "Directory of session logs")->required();
  analyze->add_option("--codebook", o.codebook, "Codebook file");
  analyze->add_option("--out", o.out, "Output directory");

  std::vector<const char*> argv = {"aegis-cli"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitRuntime;
  }

  try {
    if (*validate) return cmd_validate(o, out, err);
    if (*export_prompt) return cmd_export_prompt(o, out);
    if (*play) return cmd_play(o, in, out, err);
    if (*replay_cmd) return cmd_replay(o, out, err);
    if (*analyze) return cmd_analyze(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, in, out, err);
}

}  // namespace aegis
