#include "fake_llm.hpp"
#include "fixtures.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"
#include "tsflow/llm_gateway.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace tsflow;
using fixtures::FakeLlmServer;

namespace {

ChatRequest request(const std::string& text) {
  ChatRequest r;
  r.messages = {{"system", "be brief"}, {"user", text}};
  return r;
}

FakeLlmServer::Handler echo() {
  return [](const nlohmann::json& req, int) {
    return FakeLlmServer::Reply{200, "echo: " + req["messages"].back()["content"].get<std::string>()};
  };
}

GatewayConfig live(const FakeLlmServer& server) {
  GatewayConfig g;
  g.mode = GatewayMode::Live;
  g.endpoint = server.endpoint();
  g.api_key = "sk-secret-123";
  g.model_name = "test-model";
  g.sleeper = [](std::chrono::milliseconds) {};
  return g;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ChatRequest, DigestIsCanonicalAndSensitive) {
  const auto a = request("hi"), b = request("hi"), c = request("hi!");
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_NE(a.digest(), c.digest());
  EXPECT_EQ(a.digest(), json_digest(to_json(a)));
  ChatRequest hot = a;
  hot.params.temperature = 0.9;
  EXPECT_NE(hot.digest(), a.digest());
}

TEST(ChatRequest, Validation) {
  EXPECT_EQ(code_of([] { ChatRequest{}.validate(); }), ErrorCode::InvalidArgument);
  ChatRequest r = request("x");
  r.messages[0].role = "wizard";
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Gateway, LiveSendsBearerAuthAndModel) {
  FakeLlmServer server(echo());
  LlmGateway gw(live(server));
  EXPECT_EQ(gw.complete(request("ping")), "echo: ping");
  ASSERT_EQ(server.auth_headers().size(), 1u);
  EXPECT_EQ(server.auth_headers()[0], "Bearer sk-secret-123");
  EXPECT_EQ(server.requests()[0]["model"], "test-model");
  EXPECT_EQ(server.requests()[0]["messages"].size(), 2u);
}

TEST(Gateway, RetriesServerErrorsWithBackoff) {
  FakeLlmServer server([](const nlohmann::json&, int i) {
    return i < 2 ? FakeLlmServer::Reply{503, "busy"} : FakeLlmServer::Reply{200, "ok"};
  });
  GatewayConfig g = live(server);
  std::vector<std::chrono::milliseconds> waits;
  g.sleeper = [&](std::chrono::milliseconds d) { waits.push_back(d); };
  LlmGateway gw(g);
  EXPECT_EQ(gw.complete(request("x")), "ok");
  EXPECT_EQ(server.calls(), 3);
  EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(1000),
                                                          std::chrono::milliseconds(2000)}));
}

TEST(Gateway, GivesUpAfterTheBackoffSchedule) {
  FakeLlmServer server([](const nlohmann::json&, int) { return FakeLlmServer::Reply{500, "down"}; });
  LlmGateway gw(live(server));
  EXPECT_EQ(code_of([&] { gw.complete(request("x")); }), ErrorCode::TransportExhausted);
  EXPECT_EQ(server.calls(), 4);
}

TEST(Gateway, ClientErrorsAreNotRetried) {
  FakeLlmServer server([](const nlohmann::json&, int) { return FakeLlmServer::Reply{401, "nope"}; });
  LlmGateway gw(live(server));
  EXPECT_EQ(code_of([&] { gw.complete(request("x")); }), ErrorCode::BackendUnavailable);
  EXPECT_EQ(server.calls(), 1);
}

TEST(Gateway, UnreachableEndpointExhausts) {
  GatewayConfig g;
  g.mode = GatewayMode::Live;
  g.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  g.api_key = "k";
  g.backoff = {std::chrono::milliseconds(1)};
  g.http_timeout = std::chrono::seconds(2);
  LlmGateway gw(g);
  EXPECT_EQ(code_of([&] { gw.complete(request("x")); }), ErrorCode::TransportExhausted);
}

TEST(Gateway, MissingCredentialsFailEarly) {
  GatewayConfig g;
  g.mode = GatewayMode::Live;
  g.endpoint = "http://127.0.0.1:9/v1/chat/completions";
  EXPECT_EQ(code_of([&] { LlmGateway gw(g); }), ErrorCode::AuthMissing);
}

TEST(Gateway, RecordThenReplayWithoutTheServer) {
  fixtures::TempDir dir;
  FakeLlmServer server(echo());
  GatewayConfig g = live(server);
  g.mode = GatewayMode::Record;
  g.transcript = dir / "t.ndjson";
  {
    LlmGateway gw(g);
    EXPECT_EQ(gw.complete(request("one")), "echo: one");
    EXPECT_EQ(gw.complete(request("two")), "echo: two");
  }
  server.stop();
  const std::string text = slurp(g.transcript);
  EXPECT_EQ(text.find("sk-secret-123"), std::string::npos);
  EXPECT_EQ(text.find("Bearer"), std::string::npos);
  const auto entries = load_transcript(g.transcript);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].request_digest, request("one").digest());
  EXPECT_EQ(entries[0].prompt_tokens, 10);

  GatewayConfig r;
  r.mode = GatewayMode::Replay;
  r.transcript = g.transcript;
  LlmGateway replay(r);
  EXPECT_EQ(replay.complete(request("two")), "echo: two");
  EXPECT_EQ(replay.complete(request("one")), "echo: one");
  EXPECT_EQ(code_of([&] { replay.complete(request("three")); }), ErrorCode::ReplayMiss);
}

TEST(Gateway, StrictReplayEnforcesOrder) {
  fixtures::TempDir dir;
  std::ofstream(dir / "t.ndjson") << to_json(TranscriptEntry{request("a").digest(), "A", 1, {}, {}}).dump() << "\n"
                                  << to_json(TranscriptEntry{request("b").digest(), "B", 1, {}, {}}).dump() << "\n";
  GatewayConfig g;
  g.mode = GatewayMode::Replay;
  g.transcript = dir / "t.ndjson";
  g.strict_sequence = true;
  LlmGateway gw(g);
  EXPECT_EQ(code_of([&] { gw.complete(request("b")); }), ErrorCode::ReplayMiss);
  EXPECT_EQ(gw.complete(request("a")), "A");
  EXPECT_EQ(gw.complete(request("b")), "B");
}

TEST(Gateway, MockPrefersDigestThenQueue) {
  MockScript script;
  script.by_digest[request("fixed").digest()] = "pinned";
  script.queue = {"first", "second"};
  LlmGateway gw(GatewayConfig{}, script);
  EXPECT_EQ(gw.complete(request("fixed")), "pinned");
  EXPECT_EQ(gw.complete(request("x")), "first");
  EXPECT_EQ(gw.complete(request("y")), "second");
  EXPECT_EQ(code_of([&] { gw.complete(request("z")); }), ErrorCode::BackendUnavailable);
}

TEST(Gateway, ParseUrl) {
  const auto u = parse_url("https://api.example.com/v1/chat/completions");
  EXPECT_EQ(u.scheme, "https");
  EXPECT_EQ(u.host, "api.example.com");
  EXPECT_EQ(u.port, 443);
  EXPECT_EQ(u.path, "/v1/chat/completions");
  EXPECT_EQ(parse_url("http://localhost:8080/x").port, 8080);
  EXPECT_EQ(code_of([] { parse_url("ftp://x/y"); }), ErrorCode::ConfigError);
}

TEST(RateLimiter, SpacesCallsAfterTheBurst) {
  RateLimiter limiter(20.0, 1.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) limiter.acquire();
  EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(140));
}
