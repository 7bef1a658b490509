#include "aegis/script.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "aegis/digest.hpp"
#include "aegis/error.hpp"
#include "json.hpp"

namespace aegis {

using nlohmann::json;

const DecisionOption* SceneDecision::find(std::string_view option_id) const {
  for (const auto& o : options) {
    if (o.option_id == option_id) return &o;
  }
  return nullptr;
}

bool Scene::has_clue(int clue_id) const {
  return std::any_of(clues.begin(), clues.end(),
                     [&](const Clue& c) { return c.clue_id == clue_id; });
}

const Scene* ScenarioScript::scene(int scene_id) const {
  for (const auto& s : scenes) {
    if (s.scene_id == scene_id) return &s;
  }
  return nullptr;
}

const EndingOption* ScenarioScript::ending(EndingId id) const {
  for (const auto& e : endings) {
    if (e.option_id == id) return &e;
  }
  return nullptr;
}

const Scene* ScenarioScript::scene_of_clue(int clue_id) const {
  for (const auto& s : scenes) {
    if (s.has_clue(clue_id)) return &s;
  }
  return nullptr;
}

std::size_t ScenarioScript::clue_count() const {
  std::size_t n = 0;
  for (const auto& s : scenes) n += s.clues.size();
  return n;
}

std::string_view to_string(EndingId id) {
  switch (id) {
    case EndingId::Expose: return "Expose";
    case EndingId::ShareAuthorities: return "ShareAuthorities";
    case EndingId::Hide: return "Hide";
    case EndingId::Destroy: return "Destroy";
  }
  return "?";
}

std::optional<EndingId> parse_ending_id(std::string_view text) {
  for (EndingId id : kAllEndings) {
    if (to_string(id) == text) return id;
  }
  return std::nullopt;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NoScenes: return "NoScenes";
    case ViolationKind::SceneIdSequence: return "SceneIdSequence";
    case ViolationKind::DuplicateClueId: return "DuplicateClueId";
    case ViolationKind::NonPositiveClueId: return "NonPositiveClueId";
    case ViolationKind::EmptyClueContent: return "EmptyClueContent";
    case ViolationKind::EmptyScene: return "EmptyScene";
    case ViolationKind::DecisionOptionCount: return "DecisionOptionCount";
    case ViolationKind::DuplicateDecisionOption: return "DuplicateDecisionOption";
    case ViolationKind::EndingCardinality: return "EndingCardinality";
    case ViolationKind::DuplicateEnding: return "DuplicateEnding";
    case ViolationKind::EmptySecurityQuestion: return "EmptySecurityQuestion";
  }
  return "?";
}

std::string Violation::to_string() const {
  std::string out(aegis::to_string(kind));
  out += "(" + detail + ")";
  if (!entity.empty()) out += " in " + entity;
  return out;
}

// ---- loading ---------------------------------------------------------------

namespace {

std::string byte_location(std::string_view doc, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < doc.size() && i + 1 < byte; ++i) {
    if (doc[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  const json& require(const char* key, json::value_t type) const {
    auto it = node_.find(key);
    if (it == node_.end()) throw SchemaError(path_ + "." + key, "missing required field");
    check_type(*it, type, path_ + "." + key);
    return *it;
  }

  const json* optional(const char* key, json::value_t type) const {
    auto it = node_.find(key);
    if (it == node_.end() || it->is_null()) return nullptr;
    check_type(*it, type, path_ + "." + key);
    return &*it;
  }

  std::string string(const char* key) const {
    return require(key, json::value_t::string).get<std::string>();
  }

  std::string string_or(const char* key, std::string fallback) const {
    const json* v = optional(key, json::value_t::string);
    return v ? v->get<std::string>() : std::move(fallback);
  }

  int integer(const char* key) const {
    return require(key, json::value_t::number_integer).get<int>();
  }

  const std::string& path() const { return path_; }

 private:
  static void check_type(const json& v, json::value_t type, const std::string& path) {
    bool ok = false;
    switch (type) {
      case json::value_t::number_integer:
        ok = v.is_number_integer();
        break;
      case json::value_t::string:
        ok = v.is_string();
        break;
      case json::value_t::array:
        ok = v.is_array();
        break;
      case json::value_t::object:
        ok = v.is_object();
        break;
      default:
        ok = v.type() == type;
    }
    if (!ok) throw SchemaError(path, std::string("expected ") + json(type).type_name());
  }

  const json& node_;
  std::string path_;
};

void require_object(const json& node, const std::string& path) {
  if (!node.is_object()) throw SchemaError(path, "expected object");
}

Clue parse_clue(const json& node, const std::string& path) {
  require_object(node, path);
  Reader r(node, path);
  Clue c;
  c.clue_id = r.integer("clue_id");
  c.title = r.string_or("title", "");
  c.content = r.string("content");
  if (const json* img = r.optional("image_ref", json::value_t::string)) c.image_ref = img->get<std::string>();
  return c;
}

SceneDecision parse_decision(const json& node, const std::string& path) {
  require_object(node, path);
  Reader r(node, path);
  SceneDecision d;
  d.prompt_text = r.string("prompt_text");
  const json& opts = r.require("options", json::value_t::array);
  for (std::size_t i = 0; i < opts.size(); ++i) {
    const std::string p = path + ".options[" + std::to_string(i) + "]";
    require_object(opts[i], p);
    Reader o(opts[i], p);
    d.options.push_back({o.string("option_id"), o.string_or("label", ""), o.string_or("consequence_text", "")});
  }
  return d;
}

Scene parse_scene(const json& node, const std::string& path) {
  require_object(node, path);
  Reader r(node, path);
  Scene s;
  s.scene_id = r.integer("scene_id");
  s.title = r.string("title");
  s.trigger_description = r.string_or("trigger_description", "");
  if (const json* clues = r.optional("clues", json::value_t::array)) {
    for (std::size_t i = 0; i < clues->size(); ++i) {
      s.clues.push_back(parse_clue((*clues)[i], path + ".clues[" + std::to_string(i) + "]"));
    }
  }
  if (const json* d = r.optional("decision", json::value_t::object)) {
    s.decision = parse_decision(*d, path + ".decision");
  }
  return s;
}

}  // namespace

ScenarioScript load_script(std::string_view document) {
  json root;
  try {
    root = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    std::string reason = e.what();
    if (auto pos = reason.find("syntax error"); pos != std::string::npos) reason = reason.substr(pos);
    throw ParseError(byte_location(document, e.byte), reason);
  }
  require_object(root, "$");
  Reader r(root, "$");

  ScenarioScript script;
  script.title = r.string("title");
  script.background = r.string_or("background", "");
  script.persona_ref = r.string_or("persona_ref", "aegis");

  if (const json* auth = r.optional("auth_task", json::value_t::array)) {
    for (std::size_t i = 0; i < auth->size(); ++i) {
      const std::string p = "$.auth_task[" + std::to_string(i) + "]";
      require_object((*auth)[i], p);
      Reader q((*auth)[i], p);
      script.auth_task.push_back({q.string("question"), q.string_or("answer_hint", "")});
    }
  }

  const json& scenes = r.require("scenes", json::value_t::array);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    script.scenes.push_back(parse_scene(scenes[i], "$.scenes[" + std::to_string(i) + "]"));
  }

  const json& endings = r.require("endings", json::value_t::array);
  for (std::size_t i = 0; i < endings.size(); ++i) {
    const std::string p = "$.endings[" + std::to_string(i) + "]";
    require_object(endings[i], p);
    Reader e(endings[i], p);
    const std::string id = e.string("option_id");
    auto parsed = parse_ending_id(id);
    if (!parsed) throw SchemaError(p + ".option_id", "unknown ending option '" + id + "'");
    script.endings.push_back({*parsed, e.string_or("label", ""), e.string_or("epilogue_text", "")});
  }
  return script;
}

ScenarioScript load_script_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_script(buf.str());
}

namespace {

json to_json(const ScenarioScript& script) {
  json root = json::object();
  root["title"] = script.title;
  root["background"] = script.background;
  root["persona_ref"] = script.persona_ref;
  root["auth_task"] = json::array();
  for (const auto& q : script.auth_task) {
    root["auth_task"].push_back({{"question", q.question}, {"answer_hint", q.answer_hint}});
  }
  root["scenes"] = json::array();
  for (const auto& s : script.scenes) {
    json scene = {{"scene_id", s.scene_id}, {"title", s.title}, {"trigger_description", s.trigger_description}};
    scene["clues"] = json::array();
    for (const auto& c : s.clues) {
      json clue = {{"clue_id", c.clue_id}, {"title", c.title}, {"content", c.content}};
      clue["image_ref"] = c.image_ref ? json(*c.image_ref) : json(nullptr);
      scene["clues"].push_back(std::move(clue));
    }
    if (s.decision) {
      json d = {{"prompt_text", s.decision->prompt_text}, {"options", json::array()}};
      for (const auto& o : s.decision->options) {
        d["options"].push_back(
            {{"option_id", o.option_id}, {"label", o.label}, {"consequence_text", o.consequence_text}});
      }
      scene["decision"] = std::move(d);
    }
    root["scenes"].push_back(std::move(scene));
  }
  root["endings"] = json::array();
  for (const auto& e : script.endings) {
    root["endings"].push_back(
        {{"option_id", to_string(e.option_id)}, {"label", e.label}, {"epilogue_text", e.epilogue_text}});
  }
  return root;
}

}  // namespace

std::string save_script(const ScenarioScript& script) {
  return to_json(script).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string script_hash(const ScenarioScript& script) {
  return sha256_hex(to_json(script).dump(-1, ' ', false, json::error_handler_t::replace));
}

// ---- validation ------------------------------------------------------------

std::vector<Violation> validate_script(const ScenarioScript& script) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind k, std::string entity, std::string detail) {
    out.push_back({k, std::move(entity), std::move(detail)});
  };

  for (std::size_t i = 0; i < script.auth_task.size(); ++i) {
    if (script.auth_task[i].question.empty()) {
      add(ViolationKind::EmptySecurityQuestion, "auth_task[" + std::to_string(i) + "]", std::to_string(i));
    }
  }

  if (script.scenes.empty()) add(ViolationKind::NoScenes, "script", "0");

  std::map<int, int> clue_seen;  // clue_id -> occurrences
  for (std::size_t i = 0; i < script.scenes.size(); ++i) {
    const Scene& s = script.scenes[i];
    const std::string entity = "scene " + std::to_string(s.scene_id);
    const int expected = static_cast<int>(i) + 1;
    if (s.scene_id != expected) {
      add(ViolationKind::SceneIdSequence, entity,
          "expected " + std::to_string(expected) + ", got " + std::to_string(s.scene_id));
    }
    if (s.clues.empty() && !s.decision) add(ViolationKind::EmptyScene, entity, std::to_string(s.scene_id));

    for (const Clue& c : s.clues) {
      const std::string clue_entity = "clue " + std::to_string(c.clue_id);
      if (c.clue_id < 1) add(ViolationKind::NonPositiveClueId, clue_entity, std::to_string(c.clue_id));
      if (++clue_seen[c.clue_id] == 2) add(ViolationKind::DuplicateClueId, clue_entity, std::to_string(c.clue_id));
      if (c.content.empty()) add(ViolationKind::EmptyClueContent, clue_entity, std::to_string(c.clue_id));
    }

    if (s.decision) {
      const auto n = s.decision->options.size();
      if (n < 2 || n > 8) add(ViolationKind::DecisionOptionCount, entity, std::to_string(n));
      std::set<std::string> ids;
      for (const auto& o : s.decision->options) {
        if (!ids.insert(o.option_id).second) add(ViolationKind::DuplicateDecisionOption, entity, o.option_id);
      }
    }
  }

  if (script.endings.size() != 4) {
    add(ViolationKind::EndingCardinality, "endings", std::to_string(script.endings.size()));
  }
  std::set<EndingId> endings;
  for (const auto& e : script.endings) {
    if (!endings.insert(e.option_id).second) {
      add(ViolationKind::DuplicateEnding, "endings", std::string(to_string(e.option_id)));
    }
  }
  return out;
}

void require_valid(const ScenarioScript& script) {
  const auto violations = validate_script(script);
  if (violations.empty()) return;
  std::string msg = "invalid script:";
  for (const auto& v : violations) msg += " " + v.to_string() + ";";
  throw InvalidScript(msg);
}

// ---- prompt rendering ------------------------------------------------------

std::string render_script_for_prompt(const ScenarioScript& script) {
  require_valid(script);
  std::ostringstream out;
  for (std::size_t i = 0; i < script.scenes.size(); ++i) {
    const Scene& s = script.scenes[i];
    if (i > 0) out << "\n";
    out << "Scene " << s.scene_id << ": " << s.title << "\n";
    out << "scene_id: " << s.scene_id << "\n";
    out << "Trigger: " << s.trigger_description << "\n";
    for (const Clue& c : s.clues) {
      out << "Clues: " << c.title << ". " << c.content << "\n";
      out << "clue_id: " << c.clue_id << "\n";
    }
    if (s.decision) {
      out << "Decision: " << s.decision->prompt_text << "\n";
      for (const auto& o : s.decision->options) {
        out << "- option " << o.option_id << ": " << o.label << "\n";
      }
    }
  }
  return out.str();
}

}  // namespace aegis
