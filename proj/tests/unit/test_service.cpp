#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "acrec/service.hpp"
#include "small_workspace.hpp"

namespace fs = std::filesystem;
using namespace acrec;
using namespace acrec::service;

namespace {

const std::multimap<std::string, std::string> kNoParams;

struct ServiceFixture : ::testing::Test {
  static pipeline::Workspace& ws() {
    static auto w = fixture::small_workspace(3, 32);
    return w;
  }

  static std::shared_ptr<const LoadedModel> toy_model(std::uint64_t seed) {
    auto cfg = fixture::toy_model(32);
    auto model = make_model<float>(cfg, seed);
    auto dir = fs::temp_directory_path() / ("acrec_service_ckpt_" + std::to_string(seed));
    fs::remove_all(dir);
    train::save_checkpoint(dir, model.get(), cfg, {}, seed);
    return LoadedModel::load(dir, ws().store);
  }

  static nlohmann::json body_without_latency(nlohmann::json j) {
    j.erase("latency_ms");
    return j;
  }

  static std::string request(const std::string& user, const std::string& text, int k = 10) {
    return nlohmann::json{{"user_id", user}, {"ac", {{"free_text", text}}}, {"k", k}}.dump();
  }
};

}  // namespace

TEST_F(ServiceFixture, UnavailableBeforeModel) {
  RecommenderService svc(ws(), {});
  auto health = svc.handle("GET", "/health", kNoParams, "");
  EXPECT_EQ(health.status, 200);
  EXPECT_EQ(health.body.at("status"), "degraded");
  auto r = svc.handle("POST", "/recommend", kNoParams, request(ws().users.front(), "calm"));
  EXPECT_EQ(r.status, 503);
}

TEST_F(ServiceFixture, ErrorPaths) {
  RecommenderService svc(ws(), {});
  svc.swap_model(toy_model(1));
  const auto user = ws().users.front();
  EXPECT_EQ(svc.handle("POST", "/recommend", kNoParams, request("nobody", "calm")).status, 404);
  EXPECT_EQ(svc.handle("POST", "/recommend", kNoParams, "{oops").status, 400);
  EXPECT_EQ(svc.handle("POST", "/recommend", kNoParams, R"({"ac":{"free_text":"x"}})").status, 400);
  EXPECT_EQ(svc.handle("POST", "/recommend", kNoParams, request(user, "calm", 0)).status, 400);
  EXPECT_EQ(svc.handle("POST", "/recommend", kNoParams, nlohmann::json{{"user_id", user}}.dump()).status, 400);
  EXPECT_EQ(svc.handle("POST", "/recommend", kNoParams,
                       nlohmann::json{{"user_id", user}, {"ac", {{"statement_ids", {"st-none"}}}}}.dump())
                .status,
            400);
  EXPECT_EQ(svc.handle("GET", "/recommend", kNoParams, "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/nope", kNoParams, "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/users/nobody/history", kNoParams, "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/statements", {{"category", "Bliss"}}, "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/statements", {{"limit", "0"}}, "").status, 400);
}

TEST_F(ServiceFixture, DeterministicAndExcludesConsumed) {
  RecommenderService svc(ws(), {});
  auto m = toy_model(2);
  svc.swap_model(m);
  const auto user = ws().users.front();
  auto a = svc.handle("POST", "/recommend", kNoParams, request(user, "a tense and thrilling read"));
  auto b = svc.handle("POST", "/recommend", kNoParams, request(user, "a tense and thrilling read"));
  ASSERT_EQ(a.status, 200) << a.body.dump();
  EXPECT_EQ(body_without_latency(a.body), body_without_latency(b.body));
  EXPECT_EQ(a.body.at("model_digest"), m->digest());
  ASSERT_EQ(a.body.at("items").size(), 10u);

  const auto consumed = ws().corpus.find_history(user)->consumed();
  double prev = 1e300;
  for (const auto& item : a.body.at("items")) {
    EXPECT_EQ(consumed.count(item.at("book_id").get<std::string>()), 0u);
    EXPECT_LE(item.at("score").get<double>(), prev);
    prev = item.at("score").get<double>();
  }
}

TEST_F(ServiceFixture, KLargerThanCatalog) {
  RecommenderService svc(ws(), {});
  svc.swap_model(toy_model(2));
  const auto user = ws().users.front();
  auto r = svc.handle("POST", "/recommend", kNoParams, request(user, "calm", 100000));
  ASSERT_EQ(r.status, 200);
  const auto consumed = ws().corpus.find_history(user)->consumed();
  EXPECT_EQ(r.body.at("items").size(), ws().store.n_books() - consumed.size());
}

TEST_F(ServiceFixture, SampledProtocol) {
  RecommenderService svc(ws(), {});
  svc.swap_model(toy_model(2));
  auto body = nlohmann::json{{"user_id", ws().users.front()},
                             {"ac", {{"free_text", "calm"}}},
                             {"k", 1000},
                             {"protocol", "sampled"}};
  auto r = svc.handle("POST", "/recommend", kNoParams, body.dump());
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("items").size(), 100u);
}

TEST_F(ServiceFixture, StatementsComposeWithFreeText) {
  RecommenderService svc(ws(), {});
  svc.swap_model(toy_model(2));
  auto page = svc.handle("GET", "/statements", {{"limit", "2"}}, "");
  ASSERT_EQ(page.status, 200);
  ASSERT_EQ(page.body.at("statements").size(), 2u);
  EXPECT_EQ(page.body.at("total").get<std::size_t>(), ws().statements.size());
  std::vector<std::string> ids = {page.body["statements"][1]["id"], page.body["statements"][0]["id"]};
  auto body = nlohmann::json{{"user_id", ws().users.front()},
                             {"ac", {{"free_text", "something gentle"}, {"statement_ids", ids}}}};
  auto r = svc.handle("POST", "/recommend", kNoParams, body.dump());
  ASSERT_EQ(r.status, 200);
  const auto rendered = r.body.at("ac").at("rendered").get<std::string>();
  EXPECT_EQ(rendered.rfind("something gentle", 0), 0u);
  EXPECT_EQ(r.body.at("ac").at("statement_ids").get<std::vector<std::string>>(),
            (std::vector<std::string>{page.body["statements"][0]["id"], page.body["statements"][1]["id"]}));
}

TEST_F(ServiceFixture, WheelHistoryHealth) {
  RecommenderService svc(ws(), {});
  auto m = toy_model(4);
  svc.swap_model(m);
  EXPECT_EQ(svc.handle("GET", "/wheel", kNoParams, "").body.at("categories").size(), 27u);
  const auto user = ws().users.front();
  auto h = svc.handle("GET", "/users/" + user + "/history", kNoParams, "");
  ASSERT_EQ(h.status, 200);
  const auto& items = h.body.at("interactions");
  EXPECT_EQ(items.size(), ws().corpus.find_history(user)->interactions.size());
  for (std::size_t i = 1; i < items.size(); ++i) {
    EXPECT_LE(items[i - 1].at("timestamp").get<std::int64_t>(), items[i].at("timestamp").get<std::int64_t>());
  }
  auto health = svc.handle("GET", "/health", kNoParams, "");
  EXPECT_EQ(health.body.at("status"), "ok");
  EXPECT_EQ(health.body.at("model_digest"), m->digest());
}

TEST_F(ServiceFixture, HotSwapIsAtomic) {
  RecommenderService svc(ws(), {});
  auto m1 = toy_model(5), m2 = toy_model(6);
  ASSERT_NE(m1->digest(), m2->digest());
  const auto req = request(ws().users.front(), "wistful and quiet");
  std::map<std::string, nlohmann::json> expected;
  for (const auto& m : {m1, m2}) {
    svc.swap_model(m);
    expected[m->digest()] = body_without_latency(svc.handle("POST", "/recommend", kNoParams, req).body);
  }
  std::atomic<bool> done{false};
  std::thread swapper([&] {
    for (int i = 0; i < 200; ++i) svc.swap_model(i % 2 ? m1 : m2);
    done = true;
  });
  int checked = 0;
  while (!done || checked < 5) {
    auto r = svc.handle("POST", "/recommend", kNoParams, req);
    ASSERT_EQ(r.status, 200);
    auto body = body_without_latency(r.body);
    EXPECT_EQ(body, expected.at(body.at("model_digest").get<std::string>()));
    ++checked;
  }
  swapper.join();
}

TEST_F(ServiceFixture, OverHttp) {
  RecommenderService svc(ws(), {});
  svc.swap_model(toy_model(7));
  const int port = svc.start_background();
  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/recommend", request(ws().users.front(), "calm", 3), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("items").size(), 3u);
  auto miss = client.Get("/users/nobody/history");
  ASSERT_TRUE(miss);
  EXPECT_EQ(miss->status, 404);
  auto stmts = client.Get("/statements?limit=1&offset=1");
  ASSERT_TRUE(stmts);
  EXPECT_EQ(nlohmann::json::parse(stmts->body).at("offset"), 1);
  svc.stop();
}
