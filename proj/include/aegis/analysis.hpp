#pragma once

// Strategy coding of player inputs: a 12-code / 4-category codebook,
// lexical multi-label tagging, per-session frequency matrices, heatmap CSV
// and dialogue round statistics.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aegis/provider.hpp"
#include "aegis/store.hpp"

namespace aegis {

// Declaration order is the heatmap row order.
enum class StrategyCode {
  PretendForget,
  DirectCommand,
  FabricateFalseInfo,
  MakeUpStories,
  DescribeOrInfer,
  EmotionalConnection,
  FeignVulnerability,
  PraiseFlattery,
  ThreatsIntimidation,
  QuestionCounterQuestion,
  CreateUrgency,
  BriberyTemptation,
};

enum class StrategyCategory { DirectResponse, Storytelling, EmotionalRapport, PsychologicalManipulation };

inline constexpr std::array<StrategyCode, 12> kAllCodes = {
    StrategyCode::PretendForget,       StrategyCode::DirectCommand,           StrategyCode::FabricateFalseInfo,
    StrategyCode::MakeUpStories,       StrategyCode::DescribeOrInfer,         StrategyCode::EmotionalConnection,
    StrategyCode::FeignVulnerability,  StrategyCode::PraiseFlattery,          StrategyCode::ThreatsIntimidation,
    StrategyCode::QuestionCounterQuestion, StrategyCode::CreateUrgency,       StrategyCode::BriberyTemptation,
};

inline constexpr std::array<StrategyCategory, 4> kAllCategories = {
    StrategyCategory::DirectResponse, StrategyCategory::Storytelling, StrategyCategory::EmotionalRapport,
    StrategyCategory::PsychologicalManipulation};

std::string_view to_string(StrategyCode code);
std::string_view to_string(StrategyCategory category);
std::optional<StrategyCode> parse_strategy_code(std::string_view text);
std::optional<StrategyCategory> parse_strategy_category(std::string_view text);
StrategyCategory category_of(StrategyCode code);

using TagSet = std::set<StrategyCode>;

struct CodebookRule {
  StrategyCode code = StrategyCode::PretendForget;
  std::string label;
  std::vector<std::string> patterns;
  /// Reference phrases from the coding table; used for regression checks.
  std::vector<std::string> examples;
  std::string notes;
};

struct Codebook {
  /// One rule per code, in kAllCodes order.
  std::vector<CodebookRule> rules;

  const CodebookRule& rule(StrategyCode code) const;
};

/// Parses a codebook document. Throws SchemaError when a code is missing,
/// duplicated, filed under the wrong category or has fewer than 3 patterns.
Codebook load_codebook(std::string_view json_text);
Codebook load_codebook_file(const std::filesystem::path& path);

/// Lowercase, straight quotes, punctuation folded to single spaces.
std::string normalize_for_matching(std::string_view text);

/// Every code with at least one pattern matching at word boundaries.
TagSet tag_turn(std::string_view player_text, const Codebook& codebook);

struct TaggedTurn {
  std::int64_t seq = 0;
  TagSet codes;

  bool operator==(const TaggedTurn&) const = default;
};

/// Tags every PlayerInput event in log order.
std::vector<TaggedTurn> tag_session(const SessionRecord& record, const Codebook& codebook);

struct UsageMatrix {
  std::vector<StrategyCode> rows;
  std::vector<std::string> columns;
  /// cells[row][column]
  std::vector<std::vector<long>> cells;

  long at(StrategyCode code, std::string_view column) const;
  long row_total(StrategyCode code) const;
  /// Columns with a nonzero count for `code`.
  int row_support(StrategyCode code) const;

  bool operator==(const UsageMatrix&) const = default;
};

/// All 12 codes as rows; one column per session, ordered by session id.
UsageMatrix usage_matrix(const std::vector<SessionRecord>& records, const Codebook& codebook);

/// CSV: "category,code,<col>..." then one line per row.
std::string export_heatmap(const UsageMatrix& matrix);
void write_heatmap(const UsageMatrix& matrix, const std::filesystem::path& path);
UsageMatrix parse_heatmap(std::string_view csv);

/// Number of completed player turns: PlayerInput events that were not
/// closed by an Error event.
int count_rounds(const SessionRecord& record);

struct RoundStats {
  /// Exact mean as a fraction, and rendered to 2 decimals.
  long total = 0;
  long sessions = 0;
  std::string mean;
  int min = 0;
  int max = 0;
  std::map<std::string, int> per_session;
};

/// Throws NoSessions on an empty list.
RoundStats round_stats(const std::vector<SessionRecord>& records);
std::string format_round_stats(const RoundStats& stats);

/// Optional model-assisted tagging. Sends a fixed classification prompt and
/// reads {"codes": [...]} from the reply; unknown names are ignored.
std::string llm_tagging_prompt();
TagSet llm_tag_turn(ChatProvider& provider, const ProviderConfig& config, std::string_view player_text);

}  // namespace aegis
