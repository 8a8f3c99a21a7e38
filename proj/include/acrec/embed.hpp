#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "acrec/domain.hpp"
#include "acrec/error.hpp"

namespace acrec::embed {

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

/// Transient provider failure; the caller may retry later.
class RetriableError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

class CacheMissError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

enum class ProviderKind { remote, file_cache, hash };

std::string_view to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(std::string_view s);

struct EmbeddingProviderConfig {
  ProviderKind kind = ProviderKind::hash;
  std::string model_id = "jina-embeddings-v3";
  int dim = 768;
  std::optional<std::string> endpoint;             // remote: http://host:port/path
  std::optional<std::filesystem::path> cache_dir;  // file_cache, or write-through for others
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_ms = 200;
  int batch_size = 64;
  std::uint64_t seed = 0;  // hash provider

  /// Throws ConfigError when inconsistent.
  void validate() const;
  nlohmann::json to_json() const;
  static EmbeddingProviderConfig from_json(const nlohmann::json& j);
};

/// What a cached vector was produced by.
struct ProviderIdentity {
  std::string kind;
  std::string model_id;
  int dim = 0;

  bool operator==(const ProviderIdentity&) const = default;
};

using RecordKey = std::array<std::uint8_t, 16>;

/// Content digest over (provider kind, model id, dim, text).
RecordKey record_key(const ProviderIdentity& identity, std::string_view text);

struct RecordKeyHash {
  std::size_t operator()(const RecordKey& k) const noexcept;
};

/// Signed character-trigram hashing embedder. Trigrams are taken within each
/// whitespace token (ASCII lower-cased, padded with boundary markers), hashed
/// into `dim` buckets with a hash-derived sign, and L2-normalised.
EmbeddingVector hash_embed(std::string_view text, int dim, std::uint64_t seed);

double cosine(std::span<const float> a, std::span<const float> b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual const ProviderIdentity& identity() const = 0;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;

  EmbeddingVector embed_text(std::string_view text);
};

class HashProvider final : public EmbeddingProvider {
 public:
  HashProvider(int dim, std::uint64_t seed);

  const ProviderIdentity& identity() const override { return identity_; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  ProviderIdentity identity_;
  std::uint64_t seed_;
};

/// POST {model, texts[]} -> {embeddings[][]} over HTTP.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(const EmbeddingProviderConfig& config);

  const ProviderIdentity& identity() const override { return identity_; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  std::size_t request_count() const { return requests_.load(); }

 private:
  std::vector<EmbeddingVector> post_once(std::span<const std::string> texts);

  EmbeddingProviderConfig config_;
  ProviderIdentity identity_;
  std::string scheme_host_port_;
  std::string path_;
  std::atomic<std::size_t> requests_{0};
};

/// Content-addressed on-disk store. Layout: manifest.json naming the producer
/// identity and the shard list; each shard is a sequence of records
/// [16-byte key][dim little-endian float32].
class EmbeddingCache {
 public:
  /// Opens (or creates) the cache at `dir` for vectors produced by `identity`.
  /// Throws ConfigError if an existing manifest names a different producer.
  EmbeddingCache(std::filesystem::path dir, ProviderIdentity identity);

  /// Opens an existing cache and adopts its manifest identity.
  static EmbeddingCache open_existing(const std::filesystem::path& dir);

  const ProviderIdentity& identity() const { return identity_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t size() const;

  std::optional<EmbeddingVector> lookup(const RecordKey& key) const;

  /// Appends the records as one new shard (atomic write-then-rename) and
  /// republishes the manifest. Keys already present are skipped.
  void insert(std::span<const std::pair<RecordKey, EmbeddingVector>> records);

 private:
  void load_shard(const std::filesystem::path& file);
  void write_manifest() const;

  std::filesystem::path dir_;
  ProviderIdentity identity_;
  std::vector<std::string> shards_;
  std::unordered_map<RecordKey, std::vector<float>, RecordKeyHash> records_;
  mutable std::shared_mutex mutex_;
};

/// Read-only view of a cache; misses raise CacheMissError.
class FileCacheProvider final : public EmbeddingProvider {
 public:
  explicit FileCacheProvider(const std::filesystem::path& dir);

  const ProviderIdentity& identity() const override { return cache_.identity(); }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  EmbeddingCache cache_;
};

/// Serves hits from a cache and forwards misses (de-duplicated) upstream,
/// writing the results back.
class CachingProvider final : public EmbeddingProvider {
 public:
  CachingProvider(std::unique_ptr<EmbeddingProvider> upstream, const std::filesystem::path& dir);

  const ProviderIdentity& identity() const override { return upstream_->identity(); }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  std::size_t upstream_calls() const { return upstream_calls_.load(); }
  EmbeddingCache& cache() { return cache_; }

 private:
  std::unique_ptr<EmbeddingProvider> upstream_;
  EmbeddingCache cache_;
  std::atomic<std::size_t> upstream_calls_{0};
};

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& config);

}  // namespace acrec::embed
