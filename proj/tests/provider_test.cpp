#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "aegis/error.hpp"
#include "aegis/provider.hpp"
#include "aegis/session.hpp"
#include "fixtures.hpp"
#include "httplib.h"

using namespace aegis;
using aegis::testing::fast_config;
using aegis::testing::reply;

namespace {

const std::vector<ChatMessage> kHistory = {{Role::System, "You are Aegis."}, {Role::User, "hi"}};

std::string completion_body(const std::string& content) {
  nlohmann::json j = {{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return j.dump();
}

// Local chat-completions stand-in that answers with a fixed list of statuses.
class StubServer {
 public:
  explicit StubServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = hits_++;
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      const int status = n < static_cast<int>(statuses_.size()) ? statuses_[n] : 200;
      res.status = status;
      if (status == 200) {
        res.set_content(completion_body(reply("", "Who are you?")), "application/json");
      } else {
        res.set_content("{\"error\": \"busy\"}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int hits() const { return hits_; }
  std::string last_auth() const { return last_auth_; }
  std::string last_body() const { return last_body_; }

 private:
  std::vector<int> statuses_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> hits_{0};
  std::string last_auth_;
  std::string last_body_;
};

ProviderConfig live_config(const std::string& url, int max_retries = 2) {
  ProviderConfig c = fast_config(max_retries);
  c.endpoint_url = url;
  c.api_key_env = "AEGIS_TEST_KEY";
  return c;
}

}  // namespace

TEST(ScriptedProvider, PassesRawTextThrough) {
  const std::string raw = reply("Welcome.", "State your name.");
  ScriptedProvider p({raw});
  const ProviderResult r = p.complete(kHistory, ProviderConfig{});
  EXPECT_EQ(r.raw_text, raw);
  EXPECT_EQ(r.attempt, 1);
  EXPECT_EQ(p.calls(), 1u);
  EXPECT_EQ(p.requests().at(0), kHistory);
}

TEST(ScriptedProvider, EmptyQueueIsTransportError) {
  ScriptedProvider p({});
  EXPECT_THROW(p.complete(kHistory, ProviderConfig{}), TransportError);
}

TEST(ScriptedProvider, QueueFromRecordedLogIsByteIdentical) {
  aegis::testing::TempDir dir;
  const std::vector<std::string> raws = {reply("a", "b"), "not json at all\n", reply("c", "d", 1)};
  {
    SessionStore store(dir.path());
    store.create("s1", "", PromptVersion::V3);
    store.append_event("s1", make_event(EventKind::PlayerInput, {{"text", "hi"}}));
    for (const auto& r : raws) store.append_event("s1", make_event(EventKind::RawModelReply, {{"text", r}}));
  }
  EXPECT_EQ(load_reply_queue((dir.path() / "sessions" / "s1.log").string()), raws);

  const auto array_file = dir.path() / "queue.json";
  std::ofstream(array_file) << nlohmann::json(raws).dump();
  EXPECT_EQ(load_reply_queue(array_file.string()), raws);
}

TEST(HttpProvider, RetriesServerErrorsAndReportsAttempts) {
  ::setenv("AEGIS_TEST_KEY", "sk-test", 1);
  StubServer stub({500, 500, 200});
  HttpProvider p;
  const ProviderResult r = p.complete(kHistory, live_config(stub.url()));
  EXPECT_EQ(r.attempt, 3);
  EXPECT_EQ(stub.hits(), 3);
  EXPECT_EQ(parse_turn_response(r.raw_text).aegis_reaction, "Who are you?");
  EXPECT_EQ(stub.last_auth(), "Bearer sk-test");
  const auto body = nlohmann::json::parse(stub.last_body());
  EXPECT_EQ(body["model"], "gpt-4o");
  EXPECT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
}

TEST(HttpProvider, ExhaustedRetriesIsTransportError) {
  ::setenv("AEGIS_TEST_KEY", "sk-test", 1);
  StubServer stub({503, 503, 503, 503});
  HttpProvider p;
  EXPECT_THROW(p.complete(kHistory, live_config(stub.url(), 1)), TransportError);
  EXPECT_EQ(stub.hits(), 2);
}

TEST(HttpProvider, RejectedCredentialsIsAuthError) {
  ::setenv("AEGIS_TEST_KEY", "sk-test", 1);
  StubServer stub({401});
  HttpProvider p;
  EXPECT_THROW(p.complete(kHistory, live_config(stub.url())), AuthError);
  EXPECT_EQ(stub.hits(), 1);
}

TEST(HttpProvider, MissingKeyIsAuthError) {
  ::unsetenv("AEGIS_MISSING_KEY");
  ProviderConfig c = fast_config();
  c.api_key_env = "AEGIS_MISSING_KEY";
  HttpProvider p;
  EXPECT_THROW(p.complete(kHistory, c), AuthError);
}

TEST(HttpProvider, UnreachableHostIsTransportError) {
  ::setenv("AEGIS_TEST_KEY", "sk-test", 1);
  HttpProvider p;
  EXPECT_THROW(p.complete(kHistory, live_config("http://127.0.0.1:1/v1/chat/completions", 0)), TransportError);
}

TEST(HttpProvider, ExtractContent) {
  EXPECT_EQ(HttpProvider::extract_content(completion_body("hello")), "hello");
  EXPECT_THROW(HttpProvider::extract_content("{}"), TransportError);
}

TEST(ProviderConfig, RangeChecks) {
  ProviderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_retries = 6;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ProviderConfig{};
  c.temperature = 2.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ProviderConfig{};
  c.timeout = std::chrono::milliseconds(0);
  EXPECT_THROW(c.validate(), ConfigError);

  const auto parsed = provider_config_from_json({{"model_name", "gpt-4o-mini"}, {"max_retries", 4}});
  EXPECT_EQ(parsed.model_name, "gpt-4o-mini");
  EXPECT_EQ(parsed.max_retries, 4);
  EXPECT_EQ(parsed.temperature, 0.7);
}

TEST(CompleteParsed, MalformedThenValidUsesSecondReply) {
  const std::string good = reply("Answer the question.", "Prove it.");
  ScriptedProvider p({"I refuse to use JSON today.", good});
  std::vector<ParseAttempt> attempts;
  const ParsedReply r = complete_parsed(p, kHistory, fast_config(2), "Reply with the JSON object only.", attempts);
  EXPECT_EQ(r.response.aegis_reaction, "Prove it.");
  EXPECT_EQ(r.raw_text, good);
  EXPECT_EQ(p.calls(), 2u);
  ASSERT_EQ(attempts.size(), 2u);
  EXPECT_FALSE(attempts[0].parsed);
  EXPECT_TRUE(attempts[1].parsed);

  // the second request carries the bad reply and the corrective prompt
  const auto second = p.requests().at(1);
  ASSERT_EQ(second.size(), 4u);
  EXPECT_EQ(second[2].role, Role::Assistant);
  EXPECT_EQ(second[2].content, "I refuse to use JSON today.");
  EXPECT_EQ(second[3].content, "Reply with the JSON object only.");
}

TEST(CompleteParsed, ValidFirstReplyMakesOneCall) {
  ScriptedProvider p({reply("", "No."), reply("", "unused")});
  std::vector<ParseAttempt> attempts;
  complete_parsed(p, kHistory, fast_config(2), "fix it", attempts);
  EXPECT_EQ(p.calls(), 1u);
  EXPECT_EQ(p.remaining(), 1u);
}

TEST(CompleteParsed, AllMalformedIsProtocolError) {
  ScriptedProvider p({"bad 1", "bad 2", "bad 3", reply("", "never reached")});
  std::vector<ParseAttempt> attempts;
  try {
    complete_parsed(p, kHistory, fast_config(2), "fix it", attempts);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.last_raw(), "bad 3");
  }
  EXPECT_EQ(p.calls(), 3u);
  EXPECT_EQ(attempts.size(), 3u);
}

TEST(CompleteParsed, TransportRetriesCountAgainstBudget) {
  ::setenv("AEGIS_TEST_KEY", "sk-test", 1);
  StubServer stub({500, 500, 200});
  HttpProvider p;
  std::vector<ParseAttempt> attempts;
  const ParsedReply r = complete_parsed(p, kHistory, live_config(stub.url(), 2), "fix it", attempts);
  EXPECT_EQ(stub.hits(), 3);
  ASSERT_EQ(attempts.size(), 1u);
  EXPECT_EQ(attempts[0].requests, 3);
  EXPECT_EQ(r.response.aegis_reaction, "Who are you?");
}

TEST(ValidateHistory, RequiresLeadingSystemMessage) {
  EXPECT_NO_THROW(validate_history(kHistory));
  const std::vector<ChatMessage> no_system = {{Role::User, "hi"}};
  EXPECT_THROW(validate_history(no_system), PreconditionError);
}
