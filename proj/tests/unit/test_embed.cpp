#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "acrec/embed.hpp"
#include "acrec/error.hpp"
#include "acrec/rng.hpp"
#include "hand_corpus.hpp"

namespace fs = std::filesystem;
using namespace acrec;
using namespace acrec::embed;

namespace {

fs::path cache_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("acrec_cache_" + name);
  fs::remove_all(dir);
  return dir;
}

double norm(const EmbeddingVector& v) {
  double s = 0;
  for (float x : v.values) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

std::string random_text(Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    const int len = 3 + static_cast<int>(rng.uniform_index(6));
    for (int c = 0; c < len; ++c) out += static_cast<char>('a' + rng.uniform_index(26));
  }
  return out;
}

// Counts calls to an upstream provider.
class CountingProvider final : public EmbeddingProvider {
 public:
  CountingProvider() : inner_(64, 0) {}
  const ProviderIdentity& identity() const override { return inner_.identity(); }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    ++calls;
    texts_seen += texts.size();
    return inner_.embed_batch(texts);
  }
  std::size_t calls = 0;
  std::size_t texts_seen = 0;

 private:
  HashProvider inner_;
};

}  // namespace

TEST(HashEmbed, DeterministicAndNormalised) {
  auto a = hash_embed("the quiet lake at dawn", 768, 0);
  auto b = hash_embed("the quiet lake at dawn", 768, 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.dim(), 768u);
  EXPECT_NEAR(norm(a), 1.0, 1e-6);
  EXPECT_TRUE(a.all_finite());
  EXPECT_NE(hash_embed("the quiet lake at dawn", 768, 1), a);
}

TEST(HashEmbed, RepetitionKeepsDirection) {
  auto a = hash_embed("abc def ghi", 768, 0);
  auto b = hash_embed("abc def ghi abc def ghi", 768, 0);
  EXPECT_NEAR(cosine(a.values, b.values), 1.0, 1e-6);
}

TEST(HashEmbed, OneCharacterDiscriminates) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    auto t = random_text(rng, 3 + static_cast<int>(rng.uniform_index(5)));
    auto u = t;
    u[rng.uniform_index(u.size())] = u[0] == 'q' ? 'z' : 'q';
    if (u == t) continue;
    auto a = hash_embed(t, 768, 0), b = hash_embed(u, 768, 0);
    EXPECT_LT(cosine(a.values, b.values), 0.999) << t << " | " << u;
  }
}

TEST(HashEmbed, RandomTextsNearOrthogonal) {
  Rng rng(8);
  std::vector<double> cos;
  for (int i = 0; i < 1000; ++i) {
    auto a = hash_embed(random_text(rng, 200), 768, 0);
    auto b = hash_embed(random_text(rng, 200), 768, 0);
    cos.push_back(std::abs(cosine(a.values, b.values)));
  }
  std::sort(cos.begin(), cos.end());
  EXPECT_LT(cos[500], 0.2);
  EXPECT_LT(cos[999], 0.4);
}

TEST(HashProviderTest, BatchConsistency) {
  HashProvider p(64, 3);
  std::vector<std::string> texts = {"alpha beta", "gamma"};
  auto batch = p.embed_batch(texts);
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_EQ(batch[0], p.embed_text("alpha beta"));
  EXPECT_EQ(batch[1], p.embed_text("gamma"));
  EXPECT_TRUE(p.embed_batch({}).empty());
  EXPECT_ANY_THROW(p.embed_text(""));
}

TEST(Cache, RoundTripBitwise) {
  auto dir = cache_dir("rt");
  ProviderIdentity id{"hash", "m", 4};
  EmbeddingVector v{{0.1f, -2.5f, 3.0e-8f, 1e30f}};
  auto key = record_key(id, "text");
  {
    EmbeddingCache cache(dir, id);
    std::vector<std::pair<RecordKey, EmbeddingVector>> recs = {{key, v}};
    cache.insert(recs);
  }
  auto reopened = EmbeddingCache::open_existing(dir);
  EXPECT_EQ(reopened.identity(), id);
  auto got = reopened.lookup(key);
  ASSERT_TRUE(got);
  EXPECT_EQ(std::memcmp(got->values.data(), v.values.data(), 16), 0);
  EXPECT_FALSE(reopened.lookup(record_key(id, "other")));
}

TEST(Cache, KeysDependOnIdentity) {
  ProviderIdentity a{"hash", "m", 4}, b{"hash", "m2", 4}, c{"remote", "m", 4};
  EXPECT_NE(record_key(a, "x"), record_key(b, "x"));
  EXPECT_NE(record_key(a, "x"), record_key(c, "x"));
  EXPECT_EQ(record_key(a, "x"), record_key(a, "x"));
}

TEST(Cache, ProducerMismatchRefused) {
  auto dir = cache_dir("mismatch");
  { EmbeddingCache cache(dir, {"hash", "m", 4}); }
  EXPECT_THROW(EmbeddingCache(dir, ProviderIdentity{"hash", "m", 8}), ConfigError);
}

TEST(Cache, WarmCacheMakesNoUpstreamCalls) {
  auto dir = cache_dir("warm");
  std::vector<std::string> texts;
  for (int i = 0; i < 10000; ++i) texts.push_back("text number " + std::to_string(i));
  {
    auto upstream = std::make_unique<CountingProvider>();
    auto* counter = upstream.get();
    CachingProvider caching(std::move(upstream), dir);
    caching.embed_batch(texts);
    EXPECT_EQ(counter->texts_seen, 10000u);
  }
  auto upstream = std::make_unique<CountingProvider>();
  auto* counter = upstream.get();
  CachingProvider caching(std::move(upstream), dir);
  auto out = caching.embed_batch(texts);
  EXPECT_EQ(out.size(), 10000u);
  EXPECT_EQ(counter->calls, 0u);
  EXPECT_EQ(out[7], hash_embed(texts[7], 64, 0));
}

TEST(Cache, DuplicatesForwardedOnce) {
  auto upstream = std::make_unique<CountingProvider>();
  auto* counter = upstream.get();
  CachingProvider caching(std::move(upstream), cache_dir("dups"));
  std::vector<std::string> texts = {"same", "same", "other"};
  auto out = caching.embed_batch(texts);
  EXPECT_EQ(counter->texts_seen, 2u);
  EXPECT_EQ(out[0], out[1]);
}

TEST(Cache, FileCacheMissIsExplicit) {
  auto dir = cache_dir("miss");
  { CachingProvider caching(std::make_unique<HashProvider>(16, 0), dir); caching.embed_text("known"); }
  FileCacheProvider fc(dir);
  EXPECT_EQ(fc.embed_text("known"), hash_embed("known", 16, 0));
  EXPECT_THROW(fc.embed_text("unknown"), CacheMissError);
}

TEST(ProviderConfig, Validation) {
  EmbeddingProviderConfig c;
  c.kind = ProviderKind::remote;
  EXPECT_THROW(c.validate(), ConfigError);
  c.endpoint = "http://127.0.0.1:1/embed";
  c.validate();
  auto back = EmbeddingProviderConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  c.dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

namespace {

struct FakeEmbeddingServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};
  int fail_first = 0;

  explicit FakeEmbeddingServer(int fail) : fail_first(fail) {
    server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      if (calls++ < fail_first) {
        res.status = 503;
        return;
      }
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& t : body.at("texts")) rows.push_back(hash_embed(t.get<std::string>(), 8, 0).values);
      res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
  }
  ~FakeEmbeddingServer() {
    server.stop();
    thread.join();
  }
};

EmbeddingProviderConfig remote_config(int port) {
  EmbeddingProviderConfig c;
  c.kind = ProviderKind::remote;
  c.dim = 8;
  c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/embed";
  c.backoff_ms = 1;
  c.max_retries = 2;
  c.batch_size = 2;
  return c;
}

}  // namespace

TEST(Remote, RetriesThenSucceeds) {
  FakeEmbeddingServer fake(2);
  RemoteProvider p(remote_config(fake.port));
  std::vector<std::string> texts = {"amber lantern", "cobalt meadow", "ember falcon"};
  auto out = p.embed_batch(texts);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[2], hash_embed("ember falcon", 8, 0));
  EXPECT_EQ(fake.calls.load(), 4);
}

TEST(Remote, BudgetExhausted) {
  FakeEmbeddingServer fake(100);
  RemoteProvider p(remote_config(fake.port));
  EXPECT_THROW(p.embed_text("x"), RetriableError);
  EXPECT_EQ(fake.calls.load(), 3);
}
