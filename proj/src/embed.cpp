#include "acrec/embed.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "acrec/digest.hpp"
#include "acrec/io.hpp"
#include "acrec/rng.hpp"
#include "acrec/text.hpp"

namespace acrec::embed {

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::remote: return "remote";
    case ProviderKind::file_cache: return "file_cache";
    case ProviderKind::hash: return "hash";
  }
  return "hash";
}

ProviderKind provider_kind_from_string(std::string_view s) {
  if (s == "remote") return ProviderKind::remote;
  if (s == "file_cache") return ProviderKind::file_cache;
  if (s == "hash") return ProviderKind::hash;
  throw ConfigError("unknown embedding provider '" + std::string(s) + "'");
}

void EmbeddingProviderConfig::validate() const {
  if (dim <= 0) throw ConfigError("embedding dim must be positive");
  if (kind == ProviderKind::remote && (!endpoint || endpoint->empty())) {
    throw ConfigError("remote embedding provider requires an endpoint");
  }
  if (kind == ProviderKind::file_cache && !cache_dir) {
    throw ConfigError("file_cache embedding provider requires a cache directory");
  }
  if (batch_size <= 0 || max_retries < 0 || timeout_ms <= 0) {
    throw ConfigError("invalid embedding provider limits");
  }
}

nlohmann::json EmbeddingProviderConfig::to_json() const {
  nlohmann::json j = {{"provider", std::string(to_string(kind))},
                      {"model_id", model_id},
                      {"dim", dim},
                      {"timeout_ms", timeout_ms},
                      {"max_retries", max_retries},
                      {"backoff_ms", backoff_ms},
                      {"batch_size", batch_size},
                      {"seed", seed}};
  if (endpoint) j["endpoint"] = *endpoint;
  if (cache_dir) j["cache_dir"] = cache_dir->string();
  return j;
}

EmbeddingProviderConfig EmbeddingProviderConfig::from_json(const nlohmann::json& j) {
  EmbeddingProviderConfig c;
  c.kind = provider_kind_from_string(j.value("provider", std::string("hash")));
  c.model_id = j.value("model_id", c.model_id);
  c.dim = j.value("dim", c.dim);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("endpoint")) c.endpoint = j.at("endpoint").get<std::string>();
  if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
  return c;
}

RecordKey record_key(const ProviderIdentity& identity, std::string_view text) {
  std::string material;
  material.reserve(identity.kind.size() + identity.model_id.size() + text.size() + 16);
  material += identity.kind;
  material.push_back('\0');
  material += identity.model_id;
  material.push_back('\0');
  material += std::to_string(identity.dim);
  material.push_back('\0');
  material += text;
  const auto full = sha256(material);
  RecordKey key{};
  std::copy_n(full.begin(), key.size(), key.begin());
  return key;
}

std::size_t RecordKeyHash::operator()(const RecordKey& k) const noexcept {
  std::size_t h;
  std::memcpy(&h, k.data(), sizeof h);
  return h;
}

EmbeddingVector hash_embed(std::string_view input, int dim, std::uint64_t seed) {
  if (dim <= 0) throw ConfigError("hash_embed: dim must be positive");
  EmbeddingVector out;
  out.values.assign(static_cast<std::size_t>(dim), 0.0f);
  std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
  const std::uint64_t basis = mix_seed(seed, 0x68617368ULL);
  std::string padded;
  for (const auto& token : text::tokenize(input)) {
    padded.clear();
    padded.push_back('\x02');
    padded += text::to_lower_ascii(token);
    padded.push_back('\x03');
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      const std::uint64_t h = mix_seed(fnv1a64(std::string_view(padded).substr(i, 3), basis), 7);
      const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
      acc[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  if (norm == 0.0) {
    throw EmbeddingError("hash_embed: text has no usable trigrams");
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] / norm);
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DataError("cosine: zero vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

EmbeddingVector EmbeddingProvider::embed_text(std::string_view text) {
  const std::string s(text);
  auto out = embed_batch(std::span<const std::string>(&s, 1));
  return std::move(out.front());
}

namespace {

void require_nonempty(std::span<const std::string> texts) {
  for (const auto& t : texts) {
    if (text::count_tokens(t) == 0) throw EmbeddingError("cannot embed empty text");
  }
}

}  // namespace

HashProvider::HashProvider(int dim, std::uint64_t seed)
    : identity_{"hash", "hash-trigram-v1-s" + std::to_string(seed), dim}, seed_(seed) {
  if (dim <= 0) throw ConfigError("hash provider: dim must be positive");
}

std::vector<EmbeddingVector> HashProvider::embed_batch(std::span<const std::string> texts) {
  require_nonempty(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, identity_.dim, seed_));
  return out;
}

RemoteProvider::RemoteProvider(const EmbeddingProviderConfig& config)
    : config_(config), identity_{"remote", config.model_id, config.dim} {
  config_.validate();
  const std::string& url = *config_.endpoint;
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  scheme_host_port_ = path_start == std::string::npos ? url : url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::vector<EmbeddingVector> RemoteProvider::post_once(std::span<const std::string> texts) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  nlohmann::json body = {{"model", config_.model_id},
                         {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  ++requests_;
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw RetriableError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status >= 500 || res->status == 429) {
    throw RetriableError("embedding service returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw EmbeddingError("embedding service returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw RetriableError(std::string("malformed embedding response: ") + e.what());
  }
  const auto& rows = doc.at("embeddings");
  if (!rows.is_array() || rows.size() != texts.size()) {
    throw RetriableError("embedding response has the wrong number of rows");
  }
  std::vector<EmbeddingVector> out;
  for (const auto& row : rows) {
    EmbeddingVector v{row.get<std::vector<float>>()};
    if (static_cast<int>(v.dim()) != config_.dim || !v.all_finite()) {
      throw EmbeddingError("embedding response row has dim " + std::to_string(v.dim()) +
                           " or non-finite values");
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> RemoteProvider::embed_batch(std::span<const std::string> texts) {
  require_nonempty(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += static_cast<std::size_t>(config_.batch_size)) {
    const auto n = std::min(texts.size() - start, static_cast<std::size_t>(config_.batch_size));
    const auto chunk = texts.subspan(start, n);
    for (int attempt = 0;; ++attempt) {
      try {
        auto rows = post_once(chunk);
        for (auto& r : rows) out.push_back(std::move(r));
        break;
      } catch (const RetriableError& e) {
        if (attempt >= config_.max_retries) {
          throw RetriableError(std::string(e.what()) + " (retry budget exhausted)");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << attempt));
      }
    }
  }
  return out;
}

// Cache -----------------------------------------------------------------------

namespace {

constexpr const char* kCacheFormat = "acrec-embedding-cache-v1";

void append_le_floats(std::string& out, std::span<const float> values) {
  const auto start = out.size();
  out.resize(start + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) {
      out[start + i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
}

float read_le_float(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[b];
  return std::bit_cast<float>(bits);
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path dir, ProviderIdentity identity)
    : dir_(std::move(dir)), identity_(std::move(identity)) {
  const auto manifest = dir_ / "manifest.json";
  if (std::filesystem::exists(manifest)) {
    const auto doc = io::read_json(manifest);
    ProviderIdentity stored{doc.at("provider_kind").get<std::string>(),
                            doc.at("model_id").get<std::string>(), doc.at("dim").get<int>()};
    if (!(stored == identity_)) {
      throw ConfigError("embedding cache at " + dir_.string() + " was produced by " + stored.kind +
                        "/" + stored.model_id + "/" + std::to_string(stored.dim));
    }
    shards_ = doc.at("shards").get<std::vector<std::string>>();
    for (const auto& s : shards_) load_shard(dir_ / s);
  } else {
    std::filesystem::create_directories(dir_);
    write_manifest();
  }
}

EmbeddingCache EmbeddingCache::open_existing(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.json";
  if (!std::filesystem::exists(manifest)) {
    throw DataError("no embedding cache manifest at " + manifest.string());
  }
  const auto doc = io::read_json(manifest);
  if (doc.value("format", "") != kCacheFormat) throw DataError("unknown cache format");
  return EmbeddingCache(dir, ProviderIdentity{doc.at("provider_kind").get<std::string>(),
                                              doc.at("model_id").get<std::string>(),
                                              doc.at("dim").get<int>()});
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

void EmbeddingCache::load_shard(const std::filesystem::path& file) {
  const std::string bytes = io::read_file(file);
  const std::size_t record = 16 + 4 * static_cast<std::size_t>(identity_.dim);
  if (bytes.size() % record != 0) throw CorruptionError("truncated cache shard " + file.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    RecordKey key;
    std::copy_n(p + off, 16, key.begin());
    std::vector<float> v(static_cast<std::size_t>(identity_.dim));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = read_le_float(p + off + 16 + 4 * i);
    records_.emplace(key, std::move(v));
  }
}

void EmbeddingCache::write_manifest() const {
  nlohmann::json doc = {{"format", kCacheFormat},
                        {"provider_kind", identity_.kind},
                        {"model_id", identity_.model_id},
                        {"dim", identity_.dim},
                        {"shards", shards_}};
  io::write_json(dir_ / "manifest.json", doc);
}

std::optional<EmbeddingVector> EmbeddingCache::lookup(const RecordKey& key) const {
  std::shared_lock lock(mutex_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return EmbeddingVector{it->second};
}

void EmbeddingCache::insert(std::span<const std::pair<RecordKey, EmbeddingVector>> records) {
  std::unique_lock lock(mutex_);
  std::string blob;
  std::vector<std::pair<RecordKey, const EmbeddingVector*>> fresh;
  for (const auto& [key, vec] : records) {
    if (static_cast<int>(vec.dim()) != identity_.dim) {
      throw ConfigError("cache insert: vector dim does not match cache dim");
    }
    if (records_.contains(key)) continue;
    if (std::any_of(fresh.begin(), fresh.end(), [&](const auto& f) { return f.first == key; })) continue;
    blob.append(reinterpret_cast<const char*>(key.data()), key.size());
    append_le_floats(blob, vec.values);
    fresh.emplace_back(key, &vec);
  }
  if (fresh.empty()) return;
  char name[32];
  std::snprintf(name, sizeof name, "shard-%06zu.bin", shards_.size());
  io::write_file_atomic(dir_ / name, blob);
  shards_.emplace_back(name);
  write_manifest();
  for (const auto& [key, vec] : fresh) records_.emplace(key, vec->values);
}

FileCacheProvider::FileCacheProvider(const std::filesystem::path& dir)
    : cache_(EmbeddingCache::open_existing(dir)) {}

std::vector<EmbeddingVector> FileCacheProvider::embed_batch(std::span<const std::string> texts) {
  require_nonempty(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto hit = cache_.lookup(record_key(cache_.identity(), t));
    if (!hit) {
      throw CacheMissError("embedding cache miss for text starting \"" + t.substr(0, 40) + "\"");
    }
    out.push_back(std::move(*hit));
  }
  return out;
}

CachingProvider::CachingProvider(std::unique_ptr<EmbeddingProvider> upstream,
                                 const std::filesystem::path& dir)
    : upstream_(std::move(upstream)), cache_(dir, upstream_->identity()) {}

std::vector<EmbeddingVector> CachingProvider::embed_batch(std::span<const std::string> texts) {
  require_nonempty(texts);
  std::vector<std::optional<EmbeddingVector>> slots(texts.size());
  std::vector<RecordKey> keys(texts.size());
  std::vector<std::string> misses;
  std::vector<RecordKey> miss_keys;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = record_key(identity(), texts[i]);
    slots[i] = cache_.lookup(keys[i]);
    if (!slots[i] && std::find(miss_keys.begin(), miss_keys.end(), keys[i]) == miss_keys.end()) {
      misses.push_back(texts[i]);
      miss_keys.push_back(keys[i]);
    }
  }
  if (!misses.empty()) {
    ++upstream_calls_;
    auto fresh = upstream_->embed_batch(misses);
    std::vector<std::pair<RecordKey, EmbeddingVector>> records;
    for (std::size_t i = 0; i < fresh.size(); ++i) records.emplace_back(miss_keys[i], std::move(fresh[i]));
    cache_.insert(records);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (!slots[i]) slots[i] = cache_.lookup(keys[i]);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& config) {
  config.validate();
  std::unique_ptr<EmbeddingProvider> base;
  switch (config.kind) {
    case ProviderKind::file_cache:
      return std::make_unique<FileCacheProvider>(*config.cache_dir);
    case ProviderKind::hash:
      base = std::make_unique<HashProvider>(config.dim, config.seed);
      break;
    case ProviderKind::remote:
      base = std::make_unique<RemoteProvider>(config);
      break;
  }
  if (config.cache_dir) return std::make_unique<CachingProvider>(std::move(base), *config.cache_dir);
  return base;
}

}  // namespace acrec::embed
