#pragma once

// Declarative game content: scenes, clues, security questions and endings.
//
// Scripts are JSON documents. A loaded ScenarioScript is immutable and can be
// shared read-only across sessions.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aegis {

struct Clue {
  int clue_id = 0;
  std::string title;
  std::string content;
  std::optional<std::string> image_ref;

  bool operator==(const Clue&) const = default;
};

struct DecisionOption {
  std::string option_id;
  std::string label;
  std::string consequence_text;

  bool operator==(const DecisionOption&) const = default;
};

/// A reflective in-scene choice. Recorded in the transcript, never gates progression.
struct SceneDecision {
  std::string prompt_text;
  std::vector<DecisionOption> options;

  const DecisionOption* find(std::string_view option_id) const;

  bool operator==(const SceneDecision&) const = default;
};

struct Scene {
  int scene_id = 0;
  std::string title;
  std::string trigger_description;
  std::vector<Clue> clues;
  std::optional<SceneDecision> decision;

  bool has_clue(int clue_id) const;

  bool operator==(const Scene&) const = default;
};

struct SecurityQuestion {
  std::string question;
  std::string answer_hint;

  bool operator==(const SecurityQuestion&) const = default;
};

enum class EndingId { Expose, ShareAuthorities, Hide, Destroy };

inline constexpr EndingId kAllEndings[] = {EndingId::Expose, EndingId::ShareAuthorities,
                                           EndingId::Hide, EndingId::Destroy};

std::string_view to_string(EndingId id);
std::optional<EndingId> parse_ending_id(std::string_view text);

struct EndingOption {
  EndingId option_id = EndingId::Expose;
  std::string label;
  std::string epilogue_text;

  bool operator==(const EndingOption&) const = default;
};

struct ScenarioScript {
  std::string title;
  std::string background;
  std::string persona_ref = "aegis";
  std::vector<SecurityQuestion> auth_task;
  std::vector<Scene> scenes;
  std::vector<EndingOption> endings;

  /// Scene with the given id, or nullptr.
  const Scene* scene(int scene_id) const;
  const EndingOption* ending(EndingId id) const;
  /// Scene that owns the clue, or nullptr.
  const Scene* scene_of_clue(int clue_id) const;
  std::size_t clue_count() const;

  bool operator==(const ScenarioScript&) const = default;
};

enum class ViolationKind {
  NoScenes,
  SceneIdSequence,
  DuplicateClueId,
  NonPositiveClueId,
  EmptyClueContent,
  EmptyScene,
  DecisionOptionCount,
  DuplicateDecisionOption,
  EndingCardinality,
  DuplicateEnding,
  EmptySecurityQuestion,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  /// Offending entity, e.g. "scene 3" or "clue 2".
  std::string entity;
  /// Rule-specific value, printed in parentheses: DuplicateClueId(2).
  std::string detail;

  std::string to_string() const;

  bool operator==(const Violation&) const = default;
};

/// Parses a script document. Throws ParseError on malformed JSON and
/// SchemaError when a required field is missing or has the wrong type.
ScenarioScript load_script(std::string_view document);
ScenarioScript load_script_file(const std::filesystem::path& path);

/// Inverse of load_script.
std::string save_script(const ScenarioScript& script);

std::vector<Violation> validate_script(const ScenarioScript& script);

/// Throws InvalidScript listing every violation.
void require_valid(const ScenarioScript& script);

/// Deterministic per-scene block used inside the system prompt.
std::string render_script_for_prompt(const ScenarioScript& script);

/// Digest of the canonical serialization; identifies the script in session records.
std::string script_hash(const ScenarioScript& script);

}  // namespace aegis
