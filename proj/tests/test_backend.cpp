#include <gtest/gtest.h>

#include <atomic>
#include <functional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "memoria/backend.hpp"
#include "memoria/error.hpp"
#include "support.hpp"

using namespace memoria;
using namespace memoria::testing;

namespace {

ChatRequest request(std::string template_id, std::string user_text) {
  ChatRequest r;
  r.template_id = std::move(template_id);
  r.messages.push_back({Role::system, "system text", {}, {}});
  r.messages.push_back({Role::user, std::move(user_text), {}, {}});
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::reject_invalid;
}

}  // namespace

TEST(ChatRequest, Validate) {
  auto r = request("response", "hi");
  EXPECT_NO_THROW(r.validate());
  r.messages.push_back({Role::user, "again", {}, {}});
  EXPECT_THROW(r.validate(), Error);
  ChatRequest empty;
  EXPECT_THROW(empty.validate(), Error);
  EXPECT_EQ(request("x", "hi").rendered_prompt(), "system text\n\nhi");
}

TEST(Scripted, StrictOrderAndMismatch) {
  ScriptFixture f;
  f.strict = true;
  f.entries = {entry("response", {"hi"}, "one"), entry("semantic", {}, "two")};
  ScriptedBackend b(f);
  EXPECT_EQ(b.chat(request("response", "hi")), "one");
  try {
    b.chat(request("response", "hi"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::fixture_mismatch);
    EXPECT_NE(std::string(e.what()).find("template: expected 'semantic', got 'response'"), std::string::npos);
  }
  EXPECT_EQ(b.chat(request("semantic", "")), "two");
  EXPECT_EQ(code_of([&] { b.chat(request("semantic", "")); }), ErrorCode::fixture_mismatch);
  EXPECT_EQ(b.consumed(), 2u);
  EXPECT_EQ(b.remaining(), 0u);
  EXPECT_EQ(b.requests().size(), 4u);
}

TEST(Scripted, StrictReportsMissingSubstring) {
  ScriptFixture f;
  f.strict = true;
  f.entries = {entry("response", {"Sprite"}, "x", {"Pepsi"})};
  ScriptedBackend b(f);
  try {
    b.chat(request("response", "Pepsi please"));
    FAIL();
  } catch (const Error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("missing substring: \"Sprite\""), std::string::npos) << what;
    EXPECT_NE(what.find("unexpected substring: \"Pepsi\""), std::string::npos) << what;
  }
}

TEST(Scripted, NonStrictFirstMatchThenFallback) {
  ScriptFixture f;
  f.entries = {entry("response", {"tea"}, "tea reply"), entry("response", {}, "any reply"),
               entry("", {"coffee"}, "coffee reply")};
  f.fallbacks = {{"response", "fallback"}};
  ScriptedBackend b(f);
  EXPECT_EQ(b.chat(request("response", "coffee")), "any reply");
  EXPECT_EQ(b.chat(request("response", "tea")), "tea reply");
  EXPECT_EQ(b.chat(request("semantic", "coffee")), "coffee reply");
  EXPECT_EQ(b.chat(request("response", "tea")), "fallback");
  EXPECT_EQ(code_of([&] { b.chat(request("core", "")); }), ErrorCode::fixture_mismatch);
}

TEST(Scripted, FixtureJson) {
  const auto f = ScriptFixture::from_json_text(
      R"({"strict": true, "entries": [{"template": "response", "contains": ["a"], "excludes": ["b"], "reply": "r"}],
          "fallbacks": {"core": ""}})");
  EXPECT_TRUE(f.strict);
  ASSERT_EQ(f.entries.size(), 1u);
  EXPECT_EQ(f.entries[0], (ScriptEntry{"response", {"a"}, {"b"}, "r"}));
  EXPECT_EQ(f.fallbacks.at("core"), "");
  EXPECT_EQ(code_of([] { ScriptFixture::from_json_text("{"); }), ErrorCode::malformed);
  EXPECT_EQ(code_of([] { ScriptFixture::from_json_text(R"({"entries": [{"template": "x"}]})"); }), ErrorCode::malformed);
  EXPECT_EQ(code_of([] { ScriptFixture::load("/nonexistent/fixture.json"); }), ErrorCode::malformed);
}

namespace {

// Local chat-completions endpoint; fails the first `failures` requests.
class FakeServer {
 public:
  explicit FakeServer(int failures) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      bodies_.push_back(req.body);
      auth_ = req.get_header_value("Authorization");
      if (calls_++ < failures_) {
        res.status = 503;
        return;
      }
      const auto j = nlohmann::json::parse(req.body);
      const std::string echo = j["messages"].back()["content"].is_string()
                                   ? j["messages"].back()["content"].get<std::string>()
                                   : std::string("parts");
      res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", "echo: " + echo}}}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int calls() const { return calls_; }
  const std::vector<std::string>& bodies() const { return bodies_; }
  const std::string& auth() const { return auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  std::atomic<int> calls_{0};
  std::vector<std::string> bodies_;
  std::string auth_;
};

HttpBackendConfig config_for(const std::string& url) {
  HttpBackendConfig c;
  c.endpoint = url;
  c.api_key = "secret";
  c.model = "m1";
  c.timeout = std::chrono::milliseconds(2000);
  c.backoff_base = std::chrono::milliseconds(1);
  return c;
}

}  // namespace

TEST(Http, RequestBodyShape) {
  HttpBackend b(config_for("http://127.0.0.1:1/x"));
  auto r = request("response", "look");
  r.temperature = 0.0;
  r.max_output_tokens = 77;
  r.messages.back().image = "img/bike.jpg";
  r.messages.back().image_descriptors = {"bicycle", "tree"};
  const auto j = nlohmann::json::parse(b.request_body(r));
  EXPECT_EQ(j["model"], "m1");
  EXPECT_EQ(j["max_tokens"], 77);
  EXPECT_EQ(j["temperature"], 0.0);
  ASSERT_EQ(j["messages"].size(), 2u);
  EXPECT_EQ(j["messages"][0]["role"], "system");
  EXPECT_EQ(j["messages"][1]["content"], "look\n[Image attached: bicycle, tree]");
}

TEST(Http, InlineImage) {
  TempDir dir;
  write_file(dir.path() / "a.png", "PNG");
  auto c = config_for("http://127.0.0.1:1/x");
  c.send_images = true;
  c.asset_root = dir.path();
  HttpBackend b(c);
  auto r = request("response", "look");
  r.messages.back().image = "a.png";
  const auto j = nlohmann::json::parse(b.request_body(r));
  const auto& parts = j["messages"][1]["content"];
  ASSERT_TRUE(parts.is_array());
  EXPECT_EQ(parts[0]["text"], "look");
  EXPECT_EQ(parts[1]["image_url"]["url"], "data:image/png;base64,UE5H");
}

TEST(Http, RoundTripWithRetries) {
  FakeServer server(2);
  HttpBackend b(config_for(server.url()));
  EXPECT_EQ(b.chat(request("response", "hello")), "echo: hello");
  EXPECT_EQ(server.calls(), 3);
  EXPECT_EQ(server.auth(), "Bearer secret");
  EXPECT_EQ(nlohmann::json::parse(server.bodies().back())["messages"][1]["content"], "hello");
}

TEST(Http, GivesUpAfterMaxAttempts) {
  FakeServer server(10);
  HttpBackend b(config_for(server.url()));
  try {
    b.chat(request("response", "hello"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::backend_unavailable);
    EXPECT_EQ(e.location(), "retries=3");
  }
  EXPECT_EQ(server.calls(), 3);
}

TEST(Http, UnreachableAndInvalid) {
  auto c = config_for("http://127.0.0.1:1/x");
  c.max_attempts = 1;
  HttpBackend b(c);
  EXPECT_EQ(code_of([&] { b.chat(request("response", "x")); }), ErrorCode::backend_unavailable);
  EXPECT_EQ(code_of([&] { HttpBackend bad(config_for("no-scheme")); }), ErrorCode::reject_invalid);
  ChatRequest bad_roles;
  bad_roles.messages.push_back({Role::user, "x", {}, {}});
  EXPECT_EQ(code_of([&] { b.chat(bad_roles); }), ErrorCode::reject_invalid);
}

TEST(Http, EmbeddingProvider) {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"embedding": [3, 4]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpEmbeddingProvider p("http://127.0.0.1:" + std::to_string(port) + "/embed", 2);
  const auto v = p.embed("x");
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  HttpEmbeddingProvider wrong("http://127.0.0.1:" + std::to_string(port) + "/embed", 3);
  EXPECT_EQ(code_of([&] { wrong.embed("x"); }), ErrorCode::backend_unavailable);
  server.stop();
  t.join();
}
