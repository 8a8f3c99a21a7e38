#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/embed.hpp"
#include "acrec/eval.hpp"
#include "acrec/features.hpp"
#include "acrec/ingest.hpp"
#include "acrec/synth.hpp"
#include "acrec/taxonomy.hpp"
#include "acrec/train.hpp"

namespace acrec::pipeline {

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  int request_timeout_ms = 10000;
  int sampled_negatives = 100;
};

struct LlmSettings {
  std::string endpoint;
  std::string model = "gpt-4o";
  int timeout_ms = 60000;
  int max_in_flight = 4;
};

/// The configuration schema shared by the CLI and the service.
struct AppConfig {
  std::uint64_t seed = 0;
  ingest::IngestConfig ingest;
  embed::EmbeddingProviderConfig embedding;
  ModelConfig model;
  train::TrainConfig train;
  eval::Protocol protocol = eval::Protocol::all_items;
  Split eval_split = Split::test;
  ServiceSettings service;
  LlmSettings llm;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ConfigError.
  static AppConfig from_json(const nlohmann::json& j);
  /// Seeds every component from `seed`.
  void apply_seed(std::uint64_t s);
};

std::string config_digest(const nlohmann::json& config);

/// Text embedded as the AC description of a step: the rendered statements
/// extracted from the step's review, or the review itself when there are none.
std::string ac_text(const taxonomy::StatementRepository& statements, const ingest::Corpus& corpus,
                    const ingest::UsefulStep& step);

/// One AC fixture statement per synthetic dataset-user review.
taxonomy::StatementRepository synth_statements(const synth::SynthCorpus& corpus);

/// books.jsonl, interactions.jsonl and statements.jsonl in ingest input format.
void write_synth_inputs(const synth::SynthCorpus& corpus, const std::filesystem::path& dir);

/// Everything training, evaluation and serving read.
struct Workspace {
  ingest::Corpus corpus;
  std::vector<UserId> users;
  std::vector<ingest::UsefulStep> steps;
  taxonomy::StatementRepository statements;
  embed::EmbeddingProviderConfig provider_config;
  std::unique_ptr<embed::EmbeddingProvider> provider;
  FeatureStore store;

  std::vector<ingest::UsefulStep> steps_in(Split split) const;
  /// Queries of a split, built on first use.
  const std::vector<Query>& queries(Split split);

 private:
  std::map<Split, std::vector<Query>> queries_;
};

/// Every text the workspace embeds: descriptions, reviews and AC texts.
std::vector<std::string> texts_to_embed(const ingest::Corpus& corpus,
                                        const std::vector<UserId>& users,
                                        const std::vector<ingest::UsefulStep>& steps,
                                        const taxonomy::StatementRepository& statements);

Workspace make_workspace(ingest::Corpus corpus, std::vector<UserId> users,
                         std::vector<ingest::UsefulStep> steps,
                         taxonomy::StatementRepository statements,
                         const embed::EmbeddingProviderConfig& provider_config);

/// Reads an ingested corpus directory (statements.jsonl optional) and the
/// embedding cache written by the embed step.
Workspace open_workspace(const std::filesystem::path& corpus_dir,
                         const std::filesystem::path& cache_dir);

/// The provider description stored next to an embedding cache.
void write_provider_config(const std::filesystem::path& cache_dir,
                           const embed::EmbeddingProviderConfig& config, const std::string& digest);
embed::EmbeddingProviderConfig read_provider_config(const std::filesystem::path& cache_dir);

/// Synthetic corpus -> ingest -> hash-embedded workspace, all in memory.
Workspace synthetic_workspace(const synth::SynthConfig& config,
                              const embed::EmbeddingProviderConfig& provider_config = {});

/// Scorer for a trained model, or the cosine baseline when `model` is null.
std::unique_ptr<Scorer> make_scorer(const Model<float>* model, const FeatureStore& store);

eval::MetricsReport evaluate(Workspace& ws, const Model<float>* model, eval::Protocol protocol,
                             Split split, std::uint64_t seed, const std::string& digest = "");

struct RunOutcome {
  std::unique_ptr<Model<float>> model;  // null for the cosine baseline
  train::FitResult fit;
  eval::MetricsReport report;
};

/// Trains (unless the cosine baseline is requested) and evaluates on `split`.
RunOutcome train_and_evaluate(Workspace& ws, const ModelConfig& model_config,
                              const train::TrainConfig& train_config, eval::Protocol protocol,
                              Split split, std::uint64_t seed, const std::string& digest = "");

}  // namespace acrec::pipeline
