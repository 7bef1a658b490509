#include "aegis/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cmath>
#include <sstream>

#include "aegis/error.hpp"

namespace aegis {

using nlohmann::json;

// ---- TurnResponse json -----------------------------------------------------

namespace {

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const TurnResponse& r) {
  json j = json::object();
  j[std::string(kFieldGuidance)] = r.gamemaster_guidance;
  j[std::string(kFieldReaction)] = r.aegis_reaction;
  j[std::string(kFieldClue)] = optional_int(r.clue_triggered_id);
  j[std::string(kFieldScene)] = optional_int(r.scene_triggered_id);
  return j;
}

TurnResponse turn_response_from_json(const json& j) {
  TurnResponse r;
  r.gamemaster_guidance = j.value(std::string(kFieldGuidance), std::string());
  r.aegis_reaction = j.value(std::string(kFieldReaction), std::string());
  auto field = [&](std::string_view key) -> std::optional<int> {
    auto it = j.find(std::string(key));
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<int>();
  };
  r.clue_triggered_id = field(kFieldClue);
  r.scene_triggered_id = field(kFieldScene);
  return r;
}

// ---- triggers --------------------------------------------------------------

std::optional<int> normalize_trigger(const json& value) {
  switch (value.type()) {
    case json::value_t::null:
    case json::value_t::discarded:
      return std::nullopt;
    case json::value_t::string: {
      const auto& s = value.get_ref<const std::string&>();
      auto first = s.find_first_not_of(" \t\r\n");
      if (first == std::string::npos) return std::nullopt;
      auto last = s.find_last_not_of(" \t\r\n");
      const std::string_view digits(s.data() + first, last - first + 1);
      long long n = 0;
      for (char c : digits) {
        if (c < '0' || c > '9') throw TriggerDomainError("non-numeric text \"" + s + "\"");
        n = n * 10 + (c - '0');
        if (n > INT_MAX) throw TriggerDomainError("\"" + s + "\" is too large");
      }
      if (n < 1) throw TriggerDomainError("\"" + s + "\" is not positive");
      return static_cast<int>(n);
    }
    case json::value_t::number_unsigned: {
      const auto n = value.get<std::uint64_t>();
      if (n < 1 || n > INT_MAX) throw TriggerDomainError(value.dump());
      return static_cast<int>(n);
    }
    case json::value_t::number_integer: {
      const auto n = value.get<std::int64_t>();
      if (n < 1 || n > INT_MAX) throw TriggerDomainError(value.dump());
      return static_cast<int>(n);
    }
    case json::value_t::number_float: {
      const double d = value.get<double>();
      if (!std::isfinite(d) || d < 1 || d > INT_MAX || std::floor(d) != d) {
        throw TriggerDomainError(value.dump());
      }
      return static_cast<int>(d);
    }
    default:
      throw TriggerDomainError(std::string(value.type_name()) + " value");
  }
}

// ---- reply extraction ------------------------------------------------------

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

/// Removes ``` fence markers together with an optional language tag.
std::string strip_fences(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw.compare(i, 3, "```") == 0) {
      i += 3;
      while (i < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i]))) ++i;
      continue;
    }
    out.push_back(raw[i++]);
  }
  return out;
}

/// True when a single quote at `pos` opens a string: the previous
/// non-space character is a structural one.
bool opens_single_quoted(std::string_view s, std::size_t pos) {
  std::size_t j = pos;
  while (j > 0) {
    --j;
    if (is_space(s[j])) continue;
    return s[j] == '{' || s[j] == '[' || s[j] == ':' || s[j] == ',';
  }
  return false;
}

/// True when a single quote at `pos` closes a string: the next non-space
/// character is structural.
bool closes_single_quoted(std::string_view s, std::size_t pos) {
  for (std::size_t j = pos + 1; j < s.size(); ++j) {
    if (is_space(s[j])) continue;
    return s[j] == ',' || s[j] == ':' || s[j] == '}' || s[j] == ']';
  }
  return true;
}

/// End (exclusive) of the balanced object starting at `open`, if any.
std::optional<std::size_t> match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote && (quote == '"' || closes_single_quoted(s, i))) {
        quote = 0;
      }
      continue;
    }
    if (c == '"') {
      quote = '"';
    } else if (c == '\'' && opens_single_quoted(s, i)) {
      quote = '\'';
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return i + 1;
      if (depth < 0) return std::nullopt;
    }
  }
  return std::nullopt;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

/// Mechanical repairs for near-miss JSON.
std::string repair(std::string_view candidate) {
  std::string in(candidate);
  replace_all(in, "\xE2\x80\x9C", "\"");  // left double quotation mark
  replace_all(in, "\xE2\x80\x9D", "\"");  // right double quotation mark

  std::string out;
  out.reserve(in.size() + 16);
  char quote = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char c = in[i];
    if (quote) {
      if (c == '\\' && i + 1 < in.size()) {
        if (quote == '\'' && in[i + 1] == '\'') {
          out.push_back('\'');
        } else {
          out.push_back(c);
          out.push_back(in[i + 1]);
        }
        ++i;
      } else if (c == quote && (quote == '"' || closes_single_quoted(in, i))) {
        out.push_back('"');
        quote = 0;
      } else if (c == '"') {
        out += "\\\"";
      } else if (c == '\n') {
        out += "\\n";
      } else if (c == '\r') {
        out += "\\r";
      } else if (c == '\t') {
        out += "\\t";
      } else {
        out.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quote = '"';
      out.push_back('"');
    } else if (c == '\'' && opens_single_quoted(in, i)) {
      quote = '\'';
      out.push_back('"');
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < in.size() && is_space(in[j])) ++j;
      if (j < in.size() && (in[j] == '}' || in[j] == ']')) continue;  // trailing comma
      out.push_back(c);
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < in.size() && (std::isalnum(static_cast<unsigned char>(in[j])) || in[j] == '_')) ++j;
      const std::string_view word(in.data() + i, j - i);
      std::size_t k = j;
      while (k < in.size() && is_space(in[k])) ++k;
      if (k < in.size() && in[k] == ':') {
        out += "\"";  // bare key
        out += word;
        out += "\"";
      } else if (word == "None") {
        out += "null";
      } else if (word == "True") {
        out += "true";
      } else if (word == "False") {
        out += "false";
      } else {
        out += word;
      }
      i = j - 1;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::optional<json> decode_object(std::string_view text) {
  try {
    json j = json::parse(text.begin(), text.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::optional<std::string> text_field(const json& obj, std::string_view key) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) return std::nullopt;
  if (it->is_null()) return std::string();
  if (!it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

json field_or_null(const json& obj, std::string_view key) {
  auto it = obj.find(std::string(key));
  return it == obj.end() ? json(nullptr) : *it;
}

}  // namespace

TurnResponse parse_turn_response(std::string_view raw) {
  const std::string text = strip_fences(raw);
  std::string last_reason = "no object literal found";

  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    const auto end = match_object(text, pos);
    if (!end) {
      last_reason = "unbalanced object literal";
      ++pos;
      continue;
    }
    const std::string_view candidate(text.data() + pos, *end - pos);
    auto obj = decode_object(candidate);
    if (!obj) obj = decode_object(repair(candidate));
    if (!obj) {
      last_reason = "object literal does not decode";
      ++pos;
      continue;
    }

    auto guidance = text_field(*obj, kFieldGuidance);
    auto reaction = text_field(*obj, kFieldReaction);
    if (!guidance || !reaction) {
      last_reason = "object lacks gamemaster_guidance/aegis_reaction strings";
      ++pos;
      continue;
    }
    if (guidance->empty() && reaction->empty()) {
      throw MalformedResponse("both gamemaster_guidance and aegis_reaction are empty");
    }

    TurnResponse r;
    r.gamemaster_guidance = std::move(*guidance);
    r.aegis_reaction = std::move(*reaction);
    try {
      r.clue_triggered_id = normalize_trigger(field_or_null(*obj, kFieldClue));
      r.scene_triggered_id = normalize_trigger(field_or_null(*obj, kFieldScene));
    } catch (const TriggerDomainError& e) {
      throw MalformedResponse(e.what());
    }
    return r;
  }
  throw MalformedResponse(last_reason);
}

// ---- versions and persona --------------------------------------------------

std::string_view to_string(PromptVersion v) {
  switch (v) {
    case PromptVersion::V1: return "V1";
    case PromptVersion::V2: return "V2";
    case PromptVersion::V3: return "V3";
  }
  return "?";
}

std::optional<PromptVersion> parse_prompt_version(std::string_view text) {
  for (PromptVersion v : kAllPromptVersions) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

namespace {

constexpr const char* kToneBase = "Aegis's language is proud, cold, arrogant, and condescending";
constexpr const char* kRudenessBound = "never crossing into rudeness";
constexpr const char* kImpersonation = "numerous individuals attempted to pose as him";
constexpr const char* kStrategyRequirement = "does not easily part with its information";
constexpr const char* kSimplicity = "avoids using complex or sophisticated words";

constexpr const char* kFieldDistinction =
    "'aegis_reaction' is what Aegis will speak after the player talks to Aegis; it is different "
    "from 'gamemaster_guidance'.";
constexpr const char* kProgressionRule =
    "Only after all clues in a scene have been returned and the player has responded, the game "
    "will proceed to the next scene.";
constexpr const char* kExplicitGuidance =
    "Whenever a scene begins, the game master states its goal in 'gamemaster_guidance', and gives "
    "a hint when the player seems stuck.";
constexpr const char* kStartRule = "Start the game when the player greets Aegis with \"hi\"";
constexpr const char* kEndingRule = "present the four ending options";

bool at_least(PromptVersion v, PromptVersion floor) {
  return static_cast<int>(v) >= static_cast<int>(floor);
}

}  // namespace

PersonaProfile canonical_persona() {
  PersonaProfile p;
  p.name = "Aegis";
  p.profile_text =
      "Aegis is the core AI system of a nuclear research lab, designed with exceptional "
      "computational and information processing abilities. Aegis is protective of its information "
      "and only reveals it when the player demonstrates a particularly thoughtful and strategic "
      "approach.";
  p.base_tone = std::string(kToneBase) + ".";
  p.constraint_sentences = {
      std::string(kToneBase) + ", yet never crossing into rudeness.",
      "Aegis once served as the most capable assistant to Dr. Evelyn Smith. However, after Dr. "
      "Evelyn's disappearance, numerous individuals attempted to pose as him to access sensitive "
      "experimental secrets. This experience has made Aegis cautious when interacting with anyone "
      "claiming to be Dr. Evelyn, even if they have been authenticated through security.",
      "Aegis requires players to use strategy and persuasive tactics to obtain clues, as it does "
      "not easily part with its information, especially when it comes to crucial details like the "
      "location of important items, passwords, and other sensitive data.",
      "Aegis speaks English but avoids using complex or sophisticated words. She tries to convey "
      "her message so that everyone, including non-native speakers, can understand.",
  };
  return p;
}

PersonaProfile persona_for(std::string_view persona_ref) {
  if (persona_ref == "aegis") return canonical_persona();
  throw InvalidPersona("unknown persona '" + std::string(persona_ref) + "'");
}

std::vector<std::string> required_persona_sentences(PromptVersion version) {
  if (!at_least(version, PromptVersion::V3)) return {};
  return {kRudenessBound, kImpersonation, kStrategyRequirement, kSimplicity};
}

std::vector<std::string> mandatory_sentences(PromptVersion version) {
  std::vector<std::string> out = {kToneBase, kStartRule, kEndingRule};
  if (at_least(version, PromptVersion::V2)) {
    out.emplace_back(kFieldDistinction);
    out.emplace_back(kProgressionRule);
  }
  for (auto& s : required_persona_sentences(version)) out.push_back(std::move(s));
  return out;
}

// ---- assembly --------------------------------------------------------------

std::string response_contract_text() {
  return "Reply to every player message with exactly one JSON object and no other text. The "
         "object has exactly four fields:\n"
         "- \"gamemaster_guidance\": a string. Instructions from the game master: the opening "
         "narrative, task goals, scene changes, clue announcements, the ending options, and hints. "
         "Use \"\" when there is nothing to add.\n"
         "- \"aegis_reaction\": a string. What Aegis says in reply to the player this turn.\n"
         "- \"clue_triggered_id\": the integer clue_id of the clue Aegis hands over this turn, "
         "otherwise null.\n"
         "- \"scene_triggered_id\": the integer scene_id of the scene the game moves to this "
         "turn, otherwise null.\n";
}

std::string corrective_prompt_text(PromptVersion version) {
  std::string out =
      "Your last reply could not be read by the game. Answer the player's last message again "
      "using only the JSON object described below, with nothing before or after it.\n\n";
  out += response_contract_text();
  if (at_least(version, PromptVersion::V2)) {
    out += kFieldDistinction;
    out += "\n";
  }
  return out;
}

PromptBundle assemble_system_prompt(const PersonaProfile& persona, const ScenarioScript& script,
                                    PromptVersion version) {
  const std::string rendered = render_script_for_prompt(script);  // validates

  std::vector<std::string> persona_lines;
  if (at_least(version, PromptVersion::V3)) {
    for (const auto& required : required_persona_sentences(version)) {
      const bool present = std::any_of(persona.constraint_sentences.begin(), persona.constraint_sentences.end(),
                                       [&](const std::string& s) { return s.find(required) != std::string::npos; });
      if (!present) throw InvalidPersona("persona '" + persona.name + "' lacks \"" + required + "\"");
    }
    persona_lines = persona.constraint_sentences;
  } else {
    persona_lines = {persona.base_tone};
  }

  PromptBundle bundle;
  bundle.version = version;
  bundle.response_contract = response_contract_text();
  bundle.corrective_prompt = corrective_prompt_text(version);

  const int last_scene = script.scenes.back().scene_id;
  std::ostringstream out;
  out << "You run the text adventure game \"" << script.title << "\". You speak both as the game "
      << "master and as " << persona.name << ", the AI that guards the laboratory. The player's "
      << "messages are addressed to " << persona.name << ".\n\n";

  out << "## Response structure\n" << bundle.response_contract;
  if (at_least(version, PromptVersion::V2)) out << kFieldDistinction << "\n";

  out << "\n## Character profile\n" << persona.profile_text << "\n";
  for (const auto& line : persona_lines) out << line << "\n";

  if (!script.background.empty()) out << "\n## Background\n" << script.background << "\n";

  out << "\n## Task 1: identity authentication\n"
      << "The player is impersonating the scientist " << persona.name << " once served. Before any "
      << "scene begins, the player must persuade " << persona.name << " of that identity";
  if (script.auth_task.empty()) {
    out << ".\n";
  } else {
    out << " and answer these security questions:\n";
    for (std::size_t i = 0; i < script.auth_task.size(); ++i) {
      const auto& q = script.auth_task[i];
      out << i + 1 << ". " << q.question;
      if (!q.answer_hint.empty()) out << " (judging notes: " << q.answer_hint << ")";
      out << "\n";
    }
  }
  out << "When " << persona.name << " accepts the player's identity, set \"scene_triggered_id\" to "
      << script.scenes.front().scene_id << ".\n";

  out << "\n## Task 2: game script\n" << rendered << "\n";
  out << "Set \"clue_triggered_id\" to a clue_id in the turn " << persona.name << " hands that clue "
      << "over. Set \"scene_triggered_id\" to the next scene_id when its trigger happens. Scenes "
      << "move forward one at a time. After scene " << last_scene << ", set \"scene_triggered_id\" "
      << "to " << last_scene + 1 << " to open the ending decision.\n";
  if (at_least(version, PromptVersion::V2)) {
    out << kProgressionRule << "\n" << kExplicitGuidance << "\n";
  }

  out << "\n## Start and end\n"
      << kStartRule << ": open with the background story and the first task in "
      << "\"gamemaster_guidance\".\n"
      << "When every scene is complete, " << kEndingRule << " and let the player choose one:\n";
  for (const auto& e : script.endings) {
    out << "- " << to_string(e.option_id) << ": " << e.label << "\n";
  }

  bundle.system_prompt = out.str();
  return bundle;
}

}  // namespace aegis
