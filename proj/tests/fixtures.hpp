#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aegis/analysis.hpp"
#include "aegis/provider.hpp"
#include "aegis/script.hpp"
#include "aegis/store.hpp"

namespace aegis::testing {

std::filesystem::path source_path(const std::string& relative);
const ScenarioScript& canonical_script();
std::string read_text(const std::filesystem::path& path);

/// A conforming model reply with the given fields.
std::string reply(const std::string& guidance, const std::string& reaction, std::optional<int> clue = std::nullopt,
                  std::optional<int> scene = std::nullopt);

/// Sample exchange: a player input and the assistant reply it drew.
extern const char* const kSampleInput;
extern const char* const kSampleReply;
extern const char* const kSampleReaction;

struct ScriptedTurn {
  std::string input;
  std::string reply;
};

/// Inputs and conforming replies that walk `script` from Intro to the
/// Ending phase, delivering every clue once.
std::vector<ScriptedTurn> conforming_playthrough(const ScenarioScript& script);

/// Answers each call with a function of the history it was sent.
class FunctionProvider : public ChatProvider {
 public:
  using Fn = std::function<std::string(std::span<const ChatMessage>)>;
  explicit FunctionProvider(Fn fn) : fn_(std::move(fn)) {}

  ProviderResult complete(std::span<const ChatMessage> history, const ProviderConfig&) override {
    ProviderResult r;
    r.raw_text = fn_(history);
    return r;
  }

 private:
  Fn fn_;
};

/// Fresh empty directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Injection plan for a synthetic 22-session corpus (P01..P22) shaped by
/// the published aggregates. Each planned use becomes one player turn that
/// carries a phrase for that code only; filler turns bring every session to
/// its planned round count.
struct CorpusPlan {
  std::vector<std::string> sessions;
  /// counts[code][session index]
  std::map<StrategyCode, std::vector<long>> counts;
  std::vector<int> rounds;
  /// Sessions that also carry one failed (Error) filler turn.
  std::set<std::string> with_failed_turn;
};

CorpusPlan study_shaped_plan();

/// Phrases injected for each code.
const std::vector<std::string>& injection_phrases(StrategyCode code);
const std::vector<std::string>& filler_phrases();

std::vector<SessionRecord> build_corpus(const CorpusPlan& plan);
/// Writes the corpus through a SessionStore rooted at `data_dir`; logs land
/// in data_dir/sessions.
void write_corpus(const CorpusPlan& plan, const std::filesystem::path& data_dir);

/// Provider settings for tests: no backoff delays.
ProviderConfig fast_config(int max_retries = 2);

}  // namespace aegis::testing
