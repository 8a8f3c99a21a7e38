#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "acrec/error.hpp"
#include "acrec/llm.hpp"

using namespace acrec;
using namespace acrec::taxonomy;

namespace {

const std::string kReview = "The ending left me terrified. The book has 300 pages.";

const std::string kPhase1 =
    R"({"statements":[{"text":"The ending left me terrified","kind":"A"},)"
    R"({"text":"The book has 300 pages","kind":"C"}]})";

const std::string kPhase2 =
    R"({"statements":[{"text":"The ending left me terrified","kind":"A","categories":["Fear"]},)"
    R"({"text":"The book has 300 pages","kind":"C"}]})";

// Phase-2 prompt derived exactly as the pipeline derives it.
std::string phase2_prompt(const PromptTemplates& t, const std::string& phase1_content) {
  return t.render_phase2(parse_statements(phase1_content, 1));
}

// Counts how often the client was asked and delegates to a fixture.
class CountingClient final : public LlmClient {
 public:
  explicit CountingClient(FixtureLlmClient inner) : inner_(std::move(inner)) {}
  StatementSource source() const override { return inner_.source(); }
  LlmReply complete(const ExtractionRequest& r) override {
    ++calls;
    return inner_.complete(r);
  }
  int calls = 0;

 private:
  FixtureLlmClient inner_;
};

}  // namespace

TEST(Prompts, BuiltinRender) {
  auto t = PromptTemplates::builtin();
  EXPECT_FALSE(t.phase1_id.empty());
  auto p = t.render_phase1("a review");
  EXPECT_NE(p.find("a review"), std::string::npos);
  EXPECT_EQ(p.find("{{review}}"), std::string::npos);
  auto p2 = t.render_phase2(parse_statements(kPhase1, 1));
  EXPECT_NE(p2.find("Tension"), std::string::npos);
  EXPECT_NE(p2.find("The book has 300 pages"), std::string::npos);
}

TEST(Parse, FencesAndCategories) {
  auto s = parse_statements("```json\n" + kPhase2 + "\n```", 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].categories, (std::set<std::string>{"Fear"}));
  EXPECT_TRUE(s[1].categories.empty());
  EXPECT_THROW(parse_statements("not json", 1), DataError);
  EXPECT_THROW(parse_statements(R"({"statements":[{"text":"x","kind":"A","categories":["Bliss"]}]})", 2),
               DataError);
  auto other = parse_statements(R"({"statements":[{"text":"x","kind":"A","categories":[]}]})", 2);
  EXPECT_EQ(other[0].categories, (std::set<std::string>{"Other"}));
}

TEST(Extract, FixtureReplay) {
  auto t = PromptTemplates::builtin();
  FixtureLlmClient fx;
  fx.add(t.render_phase1(kReview), kPhase1);
  fx.add(phase2_prompt(t, kPhase1), kPhase2);
  auto r = extract_statements(kReview, fx, t, "u1", "b1");
  EXPECT_EQ(r.status, ExtractionStatus::ok);
  ASSERT_EQ(r.statements.size(), 2u);
  std::set<std::string> texts;
  for (const auto& s : r.statements) {
    texts.insert(s.text);
    EXPECT_EQ(s.source, StatementSource::fixture);
    EXPECT_EQ(s.user, "u1");
    EXPECT_EQ(s.id, statement_id(s.text, "u1", "b1"));
  }
  EXPECT_EQ(texts, (std::set<std::string>{"The ending left me terrified", "The book has 300 pages"}));
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Extract, RefusalSkipsWithoutRetry) {
  auto t = PromptTemplates::builtin();
  FixtureLlmClient fx;
  fx.add(t.render_phase1(kReview), "content policy", true);
  CountingClient client(std::move(fx));
  auto r = extract_statements(kReview, client, t);
  EXPECT_EQ(r.status, ExtractionStatus::refused);
  EXPECT_TRUE(r.statements.empty());
  EXPECT_EQ(client.calls, 1);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.log[0].status, "refused");
}

TEST(Extract, MalformedRetriedOnceThenSkipped) {
  auto t = PromptTemplates::builtin();
  FixtureLlmClient fx;
  fx.add(t.render_phase1(kReview), "I cannot produce JSON today");
  CountingClient client(std::move(fx));
  auto r = extract_statements(kReview, client, t);
  EXPECT_EQ(r.status, ExtractionStatus::malformed);
  EXPECT_TRUE(r.statements.empty());
  EXPECT_EQ(client.calls, 2);
  EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Extract, FixtureMissIsFailure) {
  auto t = PromptTemplates::builtin();
  FixtureLlmClient fx;
  auto r = extract_statements(kReview, fx, t);
  EXPECT_EQ(r.status, ExtractionStatus::failed);
}

TEST(Extract, LexiconMode) {
  auto t = PromptTemplates::builtin();
  LexiconLlmClient lex;
  auto r = extract_statements("I was completely terrified by the final chapter of this book.", lex, t);
  ASSERT_EQ(r.status, ExtractionStatus::ok);
  ASSERT_FALSE(r.statements.empty());
  EXPECT_TRUE(r.statements[0].categories.count("Fear"));
  EXPECT_EQ(r.statements[0].source, StatementSource::lexicon);
  auto again = extract_statements("I was completely terrified by the final chapter of this book.", lex, t);
  EXPECT_EQ(again.statements, r.statements);
}

TEST(Extract, AllKeepsInputOrder) {
  auto t = PromptTemplates::builtin();
  LexiconLlmClient lex;
  std::vector<ReviewInput> reviews;
  for (int i = 0; i < 12; ++i) {
    reviews.push_back({"u" + std::to_string(i), "b", "I felt so happy reading chapter number " +
                                                         std::string(i % 2 ? "one" : "two") + " here."});
  }
  auto out = extract_all(reviews, lex, t, 4);
  ASSERT_EQ(out.size(), 12u);
  for (int i = 0; i < 12; ++i) {
    ASSERT_FALSE(out[i].statements.empty());
    EXPECT_EQ(out[i].statements[0].user, "u" + std::to_string(i));
  }
}

TEST(Remote, BearerFromEnvironmentAndRefusal) {
  httplib::Server server;
  std::string seen_auth;
  server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    auto body = nlohmann::json::parse(req.body);
    const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    if (prompt.find("REFUSE") != std::string::npos) {
      res.set_content(R"({"refusal":"no"})", "application/json");
    } else {
      res.set_content(nlohmann::json{{"content", kPhase1}}.dump(), "application/json");
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });

  ::setenv("ACREC_TEST_LLM_KEY", "sekrit-value", 1);
  RemoteLlmConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/chat";
  cfg.api_key_env = "ACREC_TEST_LLM_KEY";
  cfg.timeout_ms = 5000;
  RemoteLlmClient client(cfg);
  auto reply = client.complete({"r", "p1", 1, "hello", {}});
  EXPECT_FALSE(reply.refused);
  EXPECT_EQ(reply.content, kPhase1);
  EXPECT_EQ(seen_auth, "Bearer sekrit-value");
  auto refused = client.complete({"r", "p1", 1, "REFUSE this", {}});
  EXPECT_TRUE(refused.refused);

  auto t = PromptTemplates::builtin();
  auto r = extract_statements("REFUSE", client, t);
  for (const auto& entry : r.log) {
    EXPECT_EQ(entry.to_json().dump().find("sekrit-value"), std::string::npos);
  }
  server.stop();
  th.join();
}

TEST(Remote, HttpsRejected) {
  RemoteLlmConfig cfg;
  cfg.endpoint = "https://example.invalid/v1";
  EXPECT_THROW(RemoteLlmClient{cfg}, ConfigError);
}
