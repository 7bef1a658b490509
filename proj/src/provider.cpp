#include "aegis/provider.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "aegis/error.hpp"
#include "httplib.h"

namespace aegis {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  throw Error("unknown chat role '" + std::string(text) + "'");
}

void validate_history(std::span<const ChatMessage> history) {
  if (history.empty() || history.front().role != Role::System) {
    throw PreconditionError("history must start with the system message");
  }
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].role == Role::System) throw PreconditionError("only one system message is allowed");
    if (history[i].content.empty()) throw PreconditionError("empty chat message at index " + std::to_string(i));
  }
}

void ProviderConfig::validate() const {
  if (max_retries < 0 || max_retries > 5) throw ConfigError("max_retries must be in [0,5]");
  if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("temperature must be in [0,2]");
  if (backoff_initial.count() < 0) throw ConfigError("backoff must not be negative");
}

ProviderConfig provider_config_from_json(const json& j) {
  ProviderConfig c;
  if (!j.is_object()) throw ConfigError("provider config must be an object");
  try {
    c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
    c.model_name = j.value("model_name", c.model_name);
    c.temperature = j.value("temperature", c.temperature);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
    c.max_retries = j.value("max_retries", c.max_retries);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.backoff_initial = std::chrono::milliseconds(j.value("backoff_ms", c.backoff_initial.count()));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- scripted --------------------------------------------------------------

ScriptedProvider::ScriptedProvider(std::vector<std::string> queue)
    : queue_(std::make_move_iterator(queue.begin()), std::make_move_iterator(queue.end())) {}

ProviderResult ScriptedProvider::complete(std::span<const ChatMessage> history, const ProviderConfig&) {
  std::lock_guard lock(mutex_);
  requests_.emplace_back(history.begin(), history.end());
  if (queue_.empty()) throw TransportError("scripted provider queue exhausted");
  ProviderResult r;
  r.raw_text = std::move(queue_.front());
  queue_.pop_front();
  return r;
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::size_t ScriptedProvider::remaining() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::vector<std::vector<ChatMessage>> ScriptedProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::shared_ptr<ScriptedProvider> scripted_provider(std::vector<std::string> queue) {
  return std::make_shared<ScriptedProvider>(std::move(queue));
}

std::vector<std::string> load_reply_queue(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open reply queue " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  std::vector<std::string> queue;
  const json doc = json::parse(text, nullptr, false);
  if (!doc.is_discarded() && doc.is_array()) {
    for (const auto& item : doc) {
      if (!item.is_string()) throw Error("reply queue entries must be strings");
      queue.push_back(item.get<std::string>());
    }
    return queue;
  }
  // Otherwise a session log: one event object per line.
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json ev = json::parse(line, nullptr, false);
    if (ev.is_discarded() || !ev.is_object()) throw Error("reply queue is neither a JSON array nor a session log");
    if (ev.value("kind", "") == "RawModelReply") queue.push_back(ev.at("payload").at("text").get<std::string>());
  }
  return queue;
}

// ---- live HTTP -------------------------------------------------------------

json HttpProvider::request_body(std::span<const ChatMessage> history, const ProviderConfig& config) {
  json messages = json::array();
  for (const auto& m : history) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", config.model_name}, {"messages", std::move(messages)}, {"temperature", config.temperature}};
}

std::string HttpProvider::extract_content(std::string_view body) {
  const json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded()) throw TransportError("provider returned a non-JSON body");
  try {
    const json& content = doc.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("provider body lacks choices[0].message.content");
  }
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint_url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

ProviderResult HttpProvider::complete(std::span<const ChatMessage> history, const ProviderConfig& config) {
  config.validate();
  validate_history(history);

  const char* key = std::getenv(config.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw AuthError("API key variable " + config.api_key_env + " is not set");
  }

  const Endpoint ep = split_url(config.endpoint_url);
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_bearer_token_auth(key);

  const std::string body = request_body(history, config).dump();
  const int max_attempts = 1 + config.max_retries;
  auto backoff = config.backoff_initial;
  std::string last_failure;
  bool last_was_timeout = false;
  const auto started = std::chrono::steady_clock::now();

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) {
      last_was_timeout = res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout;
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw AuthError("provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
      last_was_timeout = false;
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    ProviderResult out;
    out.raw_text = extract_content(res->body);
    out.attempt = attempt;
    out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    return out;
  }
  const std::string msg = "provider failed after " + std::to_string(max_attempts) + " attempts: " + last_failure;
  if (last_was_timeout) throw TimeoutError(msg);
  throw TransportError(msg);
}

// ---- parse wrapper ---------------------------------------------------------

ParsedReply complete_parsed(ChatProvider& provider, std::span<const ChatMessage> history,
                            const ProviderConfig& config, const std::string& corrective_prompt,
                            std::vector<ParseAttempt>& attempts, const ReplyParser& parse) {
  config.validate();
  std::vector<ChatMessage> working(history.begin(), history.end());
  int budget = 1 + config.max_retries;
  std::string last_raw;

  while (budget > 0) {
    ProviderConfig call_config = config;
    call_config.max_retries = budget - 1;
    ProviderResult result = provider.complete(working, call_config);
    budget -= std::max(1, result.attempt);

    attempts.push_back({result.raw_text, std::max(1, result.attempt), false});
    try {
      TurnResponse response = parse(result.raw_text);
      attempts.back().parsed = true;
      return {std::move(response), std::move(result.raw_text)};
    } catch (const MalformedResponse&) {
      last_raw = result.raw_text;
      if (!result.raw_text.empty()) working.push_back({Role::Assistant, result.raw_text});
      working.push_back({Role::User, corrective_prompt});
    }
  }
  throw ProtocolError(last_raw);
}

}  // namespace aegis
