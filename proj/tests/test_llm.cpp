#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "krone/extraction.hpp"
#include "krone/llm.hpp"
#include "krone/llm_http.hpp"
#include "support/testing.hpp"

using namespace krone;

TEST(ParseVerdict, AcceptsTheRequestedFormatAndCommonNoise) {
  auto v = parse_verdict("VERDICT: ANOMALY\nEXPLANATION: responder never terminated.");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->label, Label::Anomaly);
  EXPECT_EQ(v->explanation, "responder never terminated.");

  auto bold = parse_verdict("**Verdict:** normal\nExplanation: matches the\nusual pipeline");
  ASSERT_TRUE(bold);
  EXPECT_EQ(bold->label, Label::Normal);
  EXPECT_EQ(bold->explanation, "matches the usual pipeline");

  EXPECT_FALSE(parse_verdict("I think it is fine."));
  EXPECT_FALSE(parse_verdict("VERDICT: maybe"));
}

TEST(ParseTriple, FencedBlock) {
  auto t = parse_triple("```\nentity: Session\naction: Open\nstatus: Started\n```", "E1");
  ASSERT_TRUE(t);
  EXPECT_EQ(t->normalized(), (SemanticTriple{"E1", "session", "open", "started"}));
  EXPECT_FALSE(parse_triple("entity: session\naction: open\n", "E1"));
}

TEST(Prompts, VerifyPromptMentionsMissingExamples) {
  auto p = prompts::verify_user("scope", "open → started", {});
  EXPECT_NE(p.find("No normal examples are available"), std::string::npos);
  auto q = prompts::verify_user("scope", "open → started", {"open → started succeeded"});
  EXPECT_NE(q.find("1. open → started succeeded"), std::string::npos);
}

TEST(ExtractSemantics, OpenSessionStarted) {
  CallbackLlm llm([](const LlmRequest& r) {
    EXPECT_EQ(r.task, LlmTask::Extract);
    EXPECT_NE(r.user_prompt.find("Open session started"), std::string::npos);
    return std::string("```\nentity: Session\naction: Open\nstatus: Started\n```");
  });
  auto r = extract_semantics({"E1", "Open session started"}, llm);
  EXPECT_EQ(r.triple, (SemanticTriple{"E1", "session", "open", "started"}));
  EXPECT_EQ(r.attempts, 1u);
  EXPECT_FALSE(r.raw_response.empty());
}

TEST(ExtractSemantics, RetriesOnceThenFails) {
  int calls = 0;
  CallbackLlm flaky([&](const LlmRequest&) {
    return ++calls == 1 ? std::string("no idea") : std::string("entity: a\naction: b\nstatus: c");
  });
  auto r = extract_semantics({"E1", "x"}, flaky);
  EXPECT_EQ(r.attempts, 2u);

  CallbackLlm broken([](const LlmRequest&) { return std::string("entity: a"); });
  try {
    extract_semantics({"E1", "x"}, broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ExtractionInvalid);
    EXPECT_EQ(e.detail(), "entity: a");
  }
  EXPECT_EQ(broken.call_count(), 2u);
}

TEST(ExtractHierarchy, FixtureFirstMakesNoCalls) {
  auto cat = testing_support::catalog({{"E1", "Open session started"}});
  TripleFixture fixture{{"E1", {"E1", "session", "open", "started"}}};
  ConstantLlm llm(Label::Normal);
  auto ex = extract_hierarchy(cat, &fixture, &llm);
  ASSERT_EQ(ex.triples.size(), 1u);
  EXPECT_EQ(ex.triples[0], fixture.at("E1"));
  EXPECT_EQ(llm.call_count(), 0u);
}

TEST(ExtractHierarchy, UncoveredWithoutClientIsUnavailable) {
  auto cat = testing_support::catalog({{"E1", "a"}, {"E2", "b"}});
  TripleFixture fixture{{"E1", {"E1", "x", "y", "z"}}};
  try {
    extract_hierarchy(cat, &fixture, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LlmUnavailable);
  }
}

TEST(ExtractHierarchy, ConcurrentExtractionIsOrderedAndComplete) {
  std::vector<Template> templates;
  for (int i = 1; i <= 40; ++i) templates.push_back({"E" + std::to_string(i), "text " + std::to_string(i)});
  TemplateCatalog cat(templates);
  std::atomic<int> in_flight{0}, peak{0};
  CallbackLlm llm([&](const LlmRequest& r) {
    const int now = ++in_flight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --in_flight;
    return "entity: ent\naction: act " + r.key + "\nstatus: done";
  });
  auto ex = extract_hierarchy(cat, nullptr, &llm, 3);
  ASSERT_EQ(ex.triples.size(), 40u);
  EXPECT_EQ(ex.from_llm, 40u);
  EXPECT_EQ(ex.raw.size(), 40u);
  EXPECT_LE(peak.load(), 3);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(ex.triples[i].template_id, "E" + std::to_string(i + 1));
  EXPECT_EQ(ex.triples[9].action, "act_e10");
}

TEST(ExtractHierarchy, FirstFailurePropagates) {
  auto cat = testing_support::catalog({{"E1", "a"}, {"E2", "b"}});
  CallbackLlm llm([](const LlmRequest&) -> std::string { throw Error(ErrorCode::LlmUnavailable, "down"); });
  EXPECT_THROW(extract_hierarchy(cat, nullptr, &llm), Error);
}

TEST(TripleFixtureFile, RoundTripAndErrors) {
  std::vector<SemanticTriple> triples{{"E2", "block", "write", "finished, ok"}, {"E10", "a", "b", "c"}};
  std::ostringstream out;
  write_triple_fixture(out, triples);
  std::istringstream in(out.str());
  auto f = read_triple_fixture(in);
  EXPECT_EQ(f.at("E2").status, "finished, ok");
  EXPECT_EQ(f.begin()->first, "E2");

  std::istringstream dup("template_id,entity,action,status\nE1,a,b,c\nE1,a,b,d\n");
  EXPECT_THROW(read_triple_fixture(dup), Error);
}

TEST(MockClients, ConstantAndFixture) {
  ConstantLlm anomaly(Label::Anomaly);
  auto v = parse_verdict(anomaly.complete({LlmTask::Verify, "k", "", ""}));
  ASSERT_TRUE(v);
  EXPECT_EQ(v->label, Label::Anomaly);
  EXPECT_EQ(v->explanation, "mock: flagged");

  FixtureLlm fixture;
  std::istringstream in("scope_key,label,explanation\n\"S|root/a/b|c\",Normal,\"ok, routine\"\n");
  fixture.load_verdicts(in);
  auto f = parse_verdict(fixture.complete({LlmTask::Verify, "S|root/a/b|c", "", ""}));
  ASSERT_TRUE(f);
  EXPECT_EQ(f->explanation, "ok, routine");
  EXPECT_THROW(fixture.complete({LlmTask::Verify, "S|root/a/b|zzz", "", ""}), Error);
  EXPECT_EQ(fixture.verify_calls(), 2u);
}

// ---------------------------------------------------------------------------
// Live client against a local chat-completion stand-in

class LocalEndpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      if (status != 200) {
        res.status = status;
        return;
      }
      nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(malformed ? std::string("{oops") : reply.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  void TearDown() override {
    server.stop();
    thread.join();
  }
  HttpLlmConfig config() const {
    HttpLlmConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
    c.model = "test-model";
    c.api_key = "sk-secret-123";
    return c;
  }

  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string content = "VERDICT: ANOMALY\nEXPLANATION: odd";
  int status = 200;
  bool malformed = false;
  std::string last_body, last_auth;
};

TEST_F(LocalEndpoint, SendsChatCompletionRequest) {
  HttpLlm llm(config());
  auto raw = llm.complete({LlmTask::Verify, "S|root/a/b|c", "system text", "user text"});
  EXPECT_EQ(raw, content);
  EXPECT_EQ(last_auth, "Bearer sk-secret-123");
  auto body = nlohmann::json::parse(last_body);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["temperature"], 0);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "user text");
}

TEST_F(LocalEndpoint, AuditLogRedactsTheKey) {
  auto c = config();
  c.audit = true;
  content = "echo sk-secret-123";
  std::ostringstream audit;
  HttpLlm llm(c, audit);
  llm.complete({LlmTask::Verify, "k", "s", "u"});
  EXPECT_NE(audit.str().find("[llm request]"), std::string::npos);
  EXPECT_NE(audit.str().find("[REDACTED]"), std::string::npos);
  EXPECT_EQ(audit.str().find("sk-secret-123"), std::string::npos);
}

TEST_F(LocalEndpoint, ServerErrorsAreUnavailable) {
  HttpLlm llm(config());
  status = 500;
  EXPECT_THROW(llm.complete({LlmTask::Verify, "k", "s", "u"}), Error);
  status = 200;
  malformed = true;
  try {
    llm.complete({LlmTask::Verify, "k", "s", "u"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LlmUnavailable);
  }
}

TEST_F(LocalEndpoint, ExtractionThroughTheLiveClient) {
  content = "```\nentity: Session\naction: Open\nstatus: Started\n```";
  HttpLlm llm(config());
  auto r = extract_semantics({"E1", "Open session started"}, llm);
  EXPECT_EQ(r.triple, (SemanticTriple{"E1", "session", "open", "started"}));
}

TEST(HttpLlmConfig, MissingSettingsAreUnavailable) {
  HttpLlmConfig c;
  EXPECT_THROW(HttpLlm{c}, Error);
  c.base_url = "http://127.0.0.1:1/v1";
  c.model = "m";
  HttpLlm llm(c);
  try {
    llm.complete({LlmTask::Verify, "k", "s", "u"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LlmUnavailable);
  }
}
