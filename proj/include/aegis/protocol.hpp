#pragma once

// The four-field turn response contract, its parser, and the versioned
// system prompt assembly.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aegis/script.hpp"
#include "json.hpp"

namespace aegis {

struct TurnResponse {
  std::string gamemaster_guidance;
  std::string aegis_reaction;
  std::optional<int> clue_triggered_id;
  std::optional<int> scene_triggered_id;

  bool operator==(const TurnResponse&) const = default;
};

nlohmann::json to_json(const TurnResponse& r);
TurnResponse turn_response_from_json(const nlohmann::json& j);

/// Field names of the response contract, bit-exact.
inline constexpr std::string_view kFieldGuidance = "gamemaster_guidance";
inline constexpr std::string_view kFieldReaction = "aegis_reaction";
inline constexpr std::string_view kFieldClue = "clue_triggered_id";
inline constexpr std::string_view kFieldScene = "scene_triggered_id";

/// Maps a decoded trigger field to an optional positive id.
///
/// null, empty text and whitespace-only text mean "not triggered". Integers
/// (or integral numbers) >= 1 and decimal text "n" with n >= 1 are accepted.
/// Zero, negatives, booleans and non-numeric text throw TriggerDomainError.
/// Pass a null json for an absent field.
std::optional<int> normalize_trigger(const nlohmann::json& value);

/// Extracts a TurnResponse from arbitrary model output.
///
/// Strips code fences and surrounding prose, scans for the first balanced
/// object literal that decodes (trying a small set of mechanical repairs:
/// trailing commas, single-quoted strings, smart quotes, Python literals),
/// then reads the four fields. Unknown fields are ignored. Throws
/// MalformedResponse when no candidate carries both text fields, when both
/// text fields are empty, or when a trigger is out of domain.
TurnResponse parse_turn_response(std::string_view raw);

enum class PromptVersion { V1, V2, V3 };

inline constexpr PromptVersion kAllPromptVersions[] = {PromptVersion::V1, PromptVersion::V2,
                                                       PromptVersion::V3};

std::string_view to_string(PromptVersion v);
std::optional<PromptVersion> parse_prompt_version(std::string_view text);

struct PersonaProfile {
  std::string name;
  /// Backstory and role, shared by every version.
  std::string profile_text;
  /// Tone line used by V1 and V2; V3 replaces it with constraint_sentences.
  std::string base_tone;
  /// Refinements emitted by V3.
  std::vector<std::string> constraint_sentences;
};

/// The bundled Aegis persona.
PersonaProfile canonical_persona();

/// Persona registered under `persona_ref`; throws InvalidPersona when unknown.
PersonaProfile persona_for(std::string_view persona_ref);

/// Sentences a persona must carry for `version` (empty below V3).
std::vector<std::string> required_persona_sentences(PromptVersion version);

/// Sentences an assembled prompt of `version` must contain, cumulative
/// across versions. Used by the prompt ledger checks.
std::vector<std::string> mandatory_sentences(PromptVersion version);

struct PromptBundle {
  PromptVersion version = PromptVersion::V3;
  std::string system_prompt;
  std::string start_token = "hi";
  std::string response_contract;
  /// User message sent after a reply fails to parse.
  std::string corrective_prompt;
};

/// The response contract text embedded in every system prompt.
std::string response_contract_text();

/// Fixed reprompt for a malformed reply, versioned with the bundle.
std::string corrective_prompt_text(PromptVersion version);

/// Deterministic system prompt assembly. Throws InvalidScript when the
/// script fails validation and InvalidPersona when a V3 persona lacks
/// its required sentences.
PromptBundle assemble_system_prompt(const PersonaProfile& persona, const ScenarioScript& script,
                                    PromptVersion version);

}  // namespace aegis
