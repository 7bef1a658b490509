#pragma once

// Chat-completion backends: a live HTTP client, a scripted mock, and the
// parse-and-reprompt wrapper that turns raw replies into TurnResponses.

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aegis/protocol.hpp"
#include "json.hpp"

namespace aegis {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);
Role parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// Throws PreconditionError unless the history has exactly one system
/// message, first, and non-empty user/assistant contents.
void validate_history(std::span<const ChatMessage> history);

struct ProviderConfig {
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-4o";
  double temperature = 0.7;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::string api_key_env = "OPENAI_API_KEY";
  /// First transport backoff; doubles per retry.
  std::chrono::milliseconds backoff_initial{250};

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Reads the fields present in a JSON config object over the defaults.
ProviderConfig provider_config_from_json(const nlohmann::json& j);

struct ProviderResult {
  std::string raw_text;
  std::chrono::milliseconds latency{0};
  /// Outbound requests spent producing this result (>= 1).
  int attempt = 1;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;

  virtual ProviderResult complete(std::span<const ChatMessage> history, const ProviderConfig& config) = 0;
};

/// Replays queued raw replies in order. Exhaustion raises TransportError.
class ScriptedProvider : public ChatProvider {
 public:
  explicit ScriptedProvider(std::vector<std::string> queue);

  ProviderResult complete(std::span<const ChatMessage> history, const ProviderConfig& config) override;

  std::size_t calls() const;
  std::size_t remaining() const;
  /// Every history received, in call order.
  std::vector<std::vector<ChatMessage>> requests() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
  std::vector<std::vector<ChatMessage>> requests_;
};

std::shared_ptr<ScriptedProvider> scripted_provider(std::vector<std::string> queue);

/// Queue file: a JSON array of raw reply strings, or a session log whose
/// RawModelReply events are replayed in order.
std::vector<std::string> load_reply_queue(const std::string& path);

/// Speaks the chat-completions HTTP contract: POST {model, messages,
/// temperature} with a bearer token taken from the environment.
class HttpProvider : public ChatProvider {
 public:
  ProviderResult complete(std::span<const ChatMessage> history, const ProviderConfig& config) override;

  /// Request body for the given history; exposed for tests.
  static nlohmann::json request_body(std::span<const ChatMessage> history, const ProviderConfig& config);
  /// Assistant text from a chat-completions response body.
  static std::string extract_content(std::string_view body);
};

using ReplyParser = std::function<TurnResponse(std::string_view)>;

/// Raw replies seen during one complete_parsed call, for the transcript.
struct ParseAttempt {
  std::string raw_text;
  int requests = 1;
  bool parsed = false;
};

struct ParsedReply {
  TurnResponse response;
  std::string raw_text;
};

/// Calls `provider` until a reply parses. After a malformed reply the raw
/// text and `corrective_prompt` are appended to a working copy of the
/// history. At most 1 + config.max_retries outbound requests are made,
/// transport retries included. Throws ProtocolError when every reply was
/// malformed; transport errors propagate. `attempts` receives every raw
/// reply even when the call fails.
ParsedReply complete_parsed(ChatProvider& provider, std::span<const ChatMessage> history,
                            const ProviderConfig& config, const std::string& corrective_prompt,
                            std::vector<ParseAttempt>& attempts,
                            const ReplyParser& parse = parse_turn_response);

}  // namespace aegis
