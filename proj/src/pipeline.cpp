#include "acrec/pipeline.hpp"

#include <algorithm>
#include <set>

#include "acrec/digest.hpp"
#include "acrec/io.hpp"
#include "acrec/text.hpp"

namespace acrec::pipeline {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

std::set<std::string> keys_of(const nlohmann::json& j) {
  std::set<std::string> out;
  for (const auto& [key, value] : j.items()) out.insert(key);
  return out;
}

ingest::IngestConfig ingest_from_json(const nlohmann::json& j) {
  ingest::IngestConfig c;
  check_keys(j, keys_of(ingest::to_json(c)), "ingest");
  c.bands.band_width = j.value("band_width", c.bands.band_width);
  c.bands.min_books = j.value("min_books", c.bands.min_books);
  c.bands.max_books = j.value("max_books", c.bands.max_books);
  c.bands.per_band = j.value("per_band", c.bands.per_band);
  c.thresholds.min_rating = j.value("min_rating", c.thresholds.min_rating);
  c.thresholds.min_review_tokens = j.value("min_review_tokens", c.thresholds.min_review_tokens);
  c.thresholds.min_description_tokens =
      j.value("min_description_tokens", c.thresholds.min_description_tokens);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.max_extended_tokens = j.value("max_extended_tokens", c.max_extended_tokens);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Serves cached vectors and embeds misses upstream without writing back.
class CacheFirstProvider final : public embed::EmbeddingProvider {
 public:
  CacheFirstProvider(std::unique_ptr<embed::EmbeddingProvider> upstream,
                     const std::filesystem::path& dir)
      : upstream_(std::move(upstream)), cache_(embed::EmbeddingCache::open_existing(dir)) {
    if (!(cache_.identity() == upstream_->identity())) {
      throw ConfigError("embedding cache at " + dir.string() +
                        " was produced by a different provider");
    }
  }

  const embed::ProviderIdentity& identity() const override { return cache_.identity(); }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::string> missing;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (auto hit = cache_.lookup(embed::record_key(cache_.identity(), texts[i]))) {
        out[i] = std::move(*hit);
      } else {
        missing.push_back(texts[i]);
        where.push_back(i);
      }
    }
    if (!missing.empty()) {
      auto fresh = upstream_->embed_batch(missing);
      for (std::size_t k = 0; k < where.size(); ++k) out[where[k]] = std::move(fresh[k]);
    }
    return out;
  }

 private:
  std::unique_ptr<embed::EmbeddingProvider> upstream_;
  embed::EmbeddingCache cache_;
};

}  // namespace

nlohmann::json AppConfig::to_json() const {
  return {{"seed", seed},
          {"ingest", ingest::to_json(ingest)},
          {"embedding", embedding.to_json()},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"eval", {{"protocol", eval::to_string(protocol)}, {"split", acrec::to_string(eval_split)}}},
          {"service",
           {{"host", service.host},
            {"port", service.port},
            {"request_timeout_ms", service.request_timeout_ms},
            {"sampled_negatives", service.sampled_negatives}}},
          {"llm",
           {{"endpoint", llm.endpoint},
            {"model", llm.model},
            {"timeout_ms", llm.timeout_ms},
            {"max_in_flight", llm.max_in_flight}}}};
}

AppConfig AppConfig::from_json(const nlohmann::json& j) {
  AppConfig c;
  check_keys(j, {"seed", "ingest", "embedding", "model", "train", "eval", "service", "llm"}, "config");
  try {
    if (j.contains("ingest")) c.ingest = ingest_from_json(j["ingest"]);
    if (j.contains("embedding")) {
      check_keys(j["embedding"],
                 {"provider", "model_id", "dim", "timeout_ms", "max_retries", "backoff_ms",
                  "batch_size", "seed", "endpoint", "cache_dir"},
                 "embedding");
      c.embedding = embed::EmbeddingProviderConfig::from_json(j["embedding"]);
    }
    if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
    if (j.contains("train")) {
      check_keys(j["train"], keys_of(c.train.to_json()), "train");
      c.train = train::TrainConfig::from_json(j["train"]);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      check_keys(e, {"protocol", "split"}, "eval");
      if (e.contains("protocol")) c.protocol = eval::protocol_from_string(e["protocol"].get<std::string>());
      if (e.contains("split")) c.eval_split = split_from_string(e["split"].get<std::string>());
    }
    if (j.contains("service")) {
      const auto& s = j["service"];
      check_keys(s, {"host", "port", "request_timeout_ms", "sampled_negatives"}, "service");
      c.service.host = s.value("host", c.service.host);
      c.service.port = s.value("port", c.service.port);
      c.service.request_timeout_ms = s.value("request_timeout_ms", c.service.request_timeout_ms);
      c.service.sampled_negatives = s.value("sampled_negatives", c.service.sampled_negatives);
    }
    if (j.contains("llm")) {
      const auto& l = j["llm"];
      check_keys(l, {"endpoint", "model", "timeout_ms", "max_in_flight"}, "llm");
      c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
      c.llm.model = l.value("model", c.llm.model);
      c.llm.timeout_ms = l.value("timeout_ms", c.llm.timeout_ms);
      c.llm.max_in_flight = l.value("max_in_flight", c.llm.max_in_flight);
    }
    if (j.contains("seed")) c.apply_seed(j["seed"].get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void AppConfig::apply_seed(std::uint64_t s) {
  seed = s;
  ingest.seed = s;
  train.seed = s;
}

std::string config_digest(const nlohmann::json& config) { return digest_string(config.dump()); }

std::string ac_text(const taxonomy::StatementRepository& statements, const ingest::Corpus& corpus,
                    const ingest::UsefulStep& step) {
  const auto found = statements.for_review(step.user, step.positive_book);
  if (!found.empty()) {
    std::vector<std::string> ids;
    for (const auto& s : found) ids.push_back(s.id);
    return statements.compose(ids).rendered;
  }
  if (!text::trim(step.review).empty()) return step.review;
  const Book* b = corpus.find_book(step.positive_book);
  if (!b) throw NotFoundError("unknown book " + step.positive_book);
  return original_text(*b);
}

taxonomy::StatementRepository synth_statements(const synth::SynthCorpus& corpus) {
  taxonomy::StatementRepository repo;
  const auto& lex = taxonomy::Lexicon::builtin();
  for (const auto& [key, phrase] : corpus.ac_texts) {
    taxonomy::ACStatement s;
    s.text = phrase;
    s.id = taxonomy::statement_id(phrase, key.first, key.second);
    s.kind = taxonomy::StatementKind::AC;
    s.categories = lex.classify(phrase);
    s.source = taxonomy::StatementSource::fixture;
    s.user = key.first;
    s.book = key.second;
    repo.add(std::move(s));
  }
  return repo;
}

void write_synth_inputs(const synth::SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<nlohmann::json> books, interactions;
  for (const auto& b : corpus.books) books.emplace_back(b);
  for (const auto& x : corpus.interactions) {
    nlohmann::json j = x;
    j.erase("index");
    interactions.push_back(std::move(j));
  }
  io::write_jsonl(dir / "books.jsonl", books);
  io::write_jsonl(dir / "interactions.jsonl", interactions);
  synth_statements(corpus).save(dir / "statements.jsonl");
}

std::vector<ingest::UsefulStep> Workspace::steps_in(Split split) const {
  std::vector<ingest::UsefulStep> out;
  for (const auto& s : steps) {
    if (s.split == split) out.push_back(s);
  }
  return out;
}

const std::vector<Query>& Workspace::queries(Split split) {
  auto it = queries_.find(split);
  if (it != queries_.end()) return it->second;
  auto q = make_queries(
      store, corpus, steps_in(split),
      [&](const ingest::UsefulStep& s) { return ac_text(statements, corpus, s); }, *provider);
  return queries_.emplace(split, std::move(q)).first->second;
}

std::vector<std::string> texts_to_embed(const ingest::Corpus& corpus,
                                        const std::vector<UserId>& users,
                                        const std::vector<ingest::UsefulStep>& steps,
                                        const taxonomy::StatementRepository& statements) {
  auto texts = FeatureStore::texts_to_embed(corpus, users);
  for (const auto& s : steps) {
    if (s.split == Split::train || s.split == Split::validation || s.split == Split::test) {
      texts.push_back(ac_text(statements, corpus, s));
    }
  }
  return texts;
}

Workspace make_workspace(ingest::Corpus corpus, std::vector<UserId> users,
                         std::vector<ingest::UsefulStep> steps,
                         taxonomy::StatementRepository statements,
                         const embed::EmbeddingProviderConfig& provider_config) {
  Workspace ws;
  ws.corpus = std::move(corpus);
  ws.users = std::move(users);
  ws.steps = std::move(steps);
  ws.statements = std::move(statements);
  ws.provider_config = provider_config;
  ws.provider = embed::make_provider(provider_config);
  ws.store = FeatureStore::build(ws.corpus, ws.users, *ws.provider);
  return ws;
}

void write_provider_config(const std::filesystem::path& cache_dir,
                           const embed::EmbeddingProviderConfig& config, const std::string& digest) {
  auto j = config.to_json();
  j.erase("cache_dir");
  j["config_digest"] = digest;
  io::write_json(cache_dir / "provider.json", j);
}

embed::EmbeddingProviderConfig read_provider_config(const std::filesystem::path& cache_dir) {
  auto j = io::read_json(cache_dir / "provider.json");
  j.erase("config_digest");
  return embed::EmbeddingProviderConfig::from_json(j);
}

Workspace open_workspace(const std::filesystem::path& corpus_dir,
                         const std::filesystem::path& cache_dir) {
  Workspace ws;
  auto dir = ingest::read_corpus_dir(corpus_dir);
  ws.corpus = std::move(dir.corpus);
  ws.steps = std::move(dir.steps);
  const auto stats = io::read_json(corpus_dir / "stats.json");
  ws.users = stats.at("dataset_users").get<std::vector<UserId>>();
  if (std::filesystem::exists(corpus_dir / "statements.jsonl")) {
    ws.statements = taxonomy::StatementRepository::load(corpus_dir / "statements.jsonl");
  }
  ws.provider_config = read_provider_config(cache_dir);
  if (ws.provider_config.kind == embed::ProviderKind::file_cache) {
    ws.provider = std::make_unique<embed::FileCacheProvider>(cache_dir);
  } else {
    auto upstream_config = ws.provider_config;
    upstream_config.cache_dir.reset();
    ws.provider = std::make_unique<CacheFirstProvider>(embed::make_provider(upstream_config), cache_dir);
  }
  embed::FileCacheProvider cached(cache_dir);
  ws.store = FeatureStore::build(ws.corpus, ws.users, cached);
  return ws;
}

Workspace synthetic_workspace(const synth::SynthConfig& config,
                              const embed::EmbeddingProviderConfig& provider_config) {
  auto sc = synth::generate(config);
  ingest::Corpus corpus;
  corpus.books = sc.books;
  corpus.histories = ingest::group_histories(sc.interactions);
  ingest::IngestConfig ic;
  ic.seed = config.seed;
  auto res = ingest::run_ingest(std::move(corpus), ic);
  return make_workspace(std::move(res.corpus), std::move(res.dataset_users), std::move(res.steps),
                        synth_statements(sc), provider_config);
}

std::unique_ptr<Scorer> make_scorer(const Model<float>* model, const FeatureStore& store) {
  if (!model) return std::make_unique<CosineScorer>(store);
  return std::make_unique<ModelScorer>(*model, store);
}

eval::MetricsReport evaluate(Workspace& ws, const Model<float>* model, eval::Protocol protocol,
                             Split split, std::uint64_t seed, const std::string& digest) {
  const auto& queries = ws.queries(split);
  if (queries.empty()) throw DataError("no " + std::string(acrec::to_string(split)) + " steps to evaluate");
  auto scorer = make_scorer(model, ws.store);
  return eval::run_protocol(*scorer, queries, protocol, ws.store.n_books(), seed, digest);
}

RunOutcome train_and_evaluate(Workspace& ws, const ModelConfig& model_config,
                              const train::TrainConfig& train_config, eval::Protocol protocol,
                              Split split, std::uint64_t seed, const std::string& digest) {
  RunOutcome out;
  if (model_config.kind != ModelKind::cosine) {
    auto tc = train_config;
    tc.seed = seed;
    out.model = make_model<float>(model_config, seed);
    out.fit = train::fit(*out.model, ws.store, ws.queries(Split::train),
                         ws.queries(Split::validation), tc);
  }
  out.report = evaluate(ws, out.model.get(), protocol, split, seed, digest);
  return out;
}

}  // namespace acrec::pipeline
