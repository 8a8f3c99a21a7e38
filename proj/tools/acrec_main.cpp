#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "acrec/embed.hpp"
#include "acrec/io.hpp"
#include "acrec/llm.hpp"
#include "acrec/pipeline.hpp"
#include "acrec/service.hpp"

using namespace acrec;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kRuntime = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  bool verbose = false;
};

pipeline::AppConfig resolve_config(const Globals& g) {
  pipeline::AppConfig cfg;
  if (!g.config_path.empty()) cfg = pipeline::AppConfig::from_json(io::read_json(g.config_path));
  if (g.seed) cfg.apply_seed(*g.seed);
  return cfg;
}

void log(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << msg << "\n";
}

int run_synth(const Globals& g, const fs::path& out, int users, int books) {
  auto cfg = resolve_config(g);
  synth::SynthConfig sc;
  sc.seed = cfg.seed;
  if (users > 0) sc.n_users = users;
  if (books > 0) sc.n_books = books;
  pipeline::write_synth_inputs(synth::generate(sc), out);
  std::cout << "wrote synthetic inputs to " << out.string() << "\n";
  return 0;
}

int run_ingest(const Globals& g, const fs::path& books, const fs::path& interactions,
               const std::string& statements, const fs::path& out) {
  auto cfg = resolve_config(g);
  auto corpus = ingest::load_corpus(books, interactions);
  auto res = ingest::run_ingest(std::move(corpus), cfg.ingest);
  nlohmann::json digest_input = {{"ingest", ingest::to_json(cfg.ingest)},
                                 {"books", books.string()},
                                 {"interactions", interactions.string()}};
  const auto digest = pipeline::config_digest(digest_input);
  ingest::write_corpus_dir(out, res, digest);
  if (!statements.empty()) {
    taxonomy::StatementRepository::load(statements).save(out / "statements.jsonl");
  }
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << ingest::to_json(res.stats).dump() << "\n";
  return 0;
}

int run_embed(const Globals& g, const fs::path& corpus_dir, const std::string& provider,
              const fs::path& out, const std::string& endpoint) {
  auto cfg = resolve_config(g);
  cfg.embedding.kind = embed::provider_kind_from_string(provider);
  if (!endpoint.empty()) cfg.embedding.endpoint = endpoint;
  auto dir = ingest::read_corpus_dir(corpus_dir);
  const auto users =
      io::read_json(corpus_dir / "stats.json").at("dataset_users").get<std::vector<UserId>>();
  taxonomy::StatementRepository statements;
  if (fs::exists(corpus_dir / "statements.jsonl")) {
    statements = taxonomy::StatementRepository::load(corpus_dir / "statements.jsonl");
  }
  const auto texts = pipeline::texts_to_embed(dir.corpus, users, dir.steps, statements);
  log(g, "embedding " + std::to_string(texts.size()) + " texts");
  const auto digest = pipeline::config_digest({{"embedding", cfg.embedding.to_json()}});
  if (cfg.embedding.kind == embed::ProviderKind::file_cache) {
    embed::FileCacheProvider cached(out);
    cached.embed_batch(texts);
    std::cout << "cache at " << out.string() << " covers all " << texts.size() << " texts\n";
    return 0;
  }
  cfg.embedding.cache_dir = out;
  auto p = embed::make_provider(cfg.embedding);
  p->embed_batch(texts);
  auto stored = cfg.embedding;
  stored.cache_dir.reset();
  pipeline::write_provider_config(out, stored, digest);
  std::cout << "embedded " << texts.size() << " texts into " << out.string() << "\n";
  return 0;
}

int run_extract(const Globals& g, const fs::path& reviews_path, const std::string& mode,
                const fs::path& out, const std::string& fixture, const std::string& prompts_dir) {
  auto cfg = resolve_config(g);
  std::vector<taxonomy::ReviewInput> reviews;
  io::for_each_jsonl(reviews_path, [&](const nlohmann::json& j, std::size_t) {
    reviews.push_back({j.value("user_id", std::string()), j.value("book_id", std::string()),
                       j.at("review").get<std::string>()});
  });
  std::unique_ptr<taxonomy::LlmClient> client;
  if (mode == "remote") {
    if (cfg.llm.endpoint.empty()) throw ConfigError("remote mode needs llm.endpoint in the config");
    client = std::make_unique<taxonomy::RemoteLlmClient>(
        taxonomy::RemoteLlmConfig{cfg.llm.endpoint, cfg.llm.model, "ACREC_LLM_API_KEY",
                                  cfg.llm.timeout_ms});
  } else if (mode == "fixture") {
    if (fixture.empty()) throw ConfigError("fixture mode needs --fixture");
    client = std::make_unique<taxonomy::FixtureLlmClient>(taxonomy::FixtureLlmClient::load(fixture));
  } else if (mode == "lexicon") {
    client = std::make_unique<taxonomy::LexiconLlmClient>();
  } else {
    throw ConfigError("unknown extraction mode '" + mode + "'");
  }
  const auto templates = prompts_dir.empty() ? taxonomy::PromptTemplates::builtin()
                                             : taxonomy::PromptTemplates::load(prompts_dir);
  const auto results = taxonomy::extract_all(reviews, *client, templates, cfg.llm.max_in_flight);

  const auto digest = pipeline::config_digest(
      {{"mode", mode}, {"llm_model", cfg.llm.model}, {"phase1", templates.phase1_id},
       {"phase2", templates.phase2_id}});
  taxonomy::StatementRepository repo;
  std::vector<nlohmann::json> log_records;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.status != taxonomy::ExtractionStatus::ok) {
      ++skipped;
      std::cerr << "skipped review " << reviews[i].user << "/" << reviews[i].book << ": "
                << r.diagnostic << "\n";
    }
    for (const auto& s : r.statements) repo.add(s);
    for (const auto& e : r.log) {
      auto j = e.to_json();
      j["user_id"] = reviews[i].user;
      j["book_id"] = reviews[i].book;
      j["config_digest"] = digest;
      log_records.push_back(std::move(j));
    }
  }
  repo.save(out);
  auto log_path = out;
  log_path += ".log.jsonl";
  io::write_jsonl(log_path, log_records);
  auto meta_path = out;
  meta_path += ".meta.json";
  io::write_json(meta_path, {{"config_digest", digest},
                             {"reviews", reviews.size()},
                             {"skipped", skipped},
                             {"statements", repo.size()}});
  std::cout << repo.size() << " statements from " << reviews.size() - skipped << " of "
            << reviews.size() << " reviews\n";
  return 0;
}

int run_audit(const Globals& g, const fs::path& statements, std::size_t n, const fs::path& out,
              const std::string& annotated) {
  if (!annotated.empty()) {
    const auto w = taxonomy::AuditWorksheet::from_tsv(io::read_file(annotated));
    const auto p = w.precision();
    if (!p) {
      std::cout << "no fully annotated rows\n";
    } else {
      std::cout << "precision " << *p * 100.0 << "% over annotated rows\n";
    }
    return 0;
  }
  auto cfg = resolve_config(g);
  Rng rng(mix_seed(cfg.seed, fnv1a64("audit")));
  const auto w = taxonomy::audit_sample(taxonomy::StatementRepository::load(statements).all(), n, rng);
  io::write_file_atomic(out, w.to_tsv());
  std::cout << "wrote " << w.rows.size() << " worksheet rows to " << out.string() << "\n";
  return 0;
}

struct TrainArgs {
  fs::path corpus, cache, out;
  std::string model = "acrec";
  bool use_cosine = false;
  std::optional<int> max_epochs, patience, fcn_layers;
  std::optional<std::size_t> max_updates;
  std::optional<double> lr, dropout;
};

int run_train(const Globals& g, const TrainArgs& a) {
  auto cfg = resolve_config(g);
  cfg.model.kind = model_kind_from_string(a.model);
  if (a.use_cosine) cfg.model.use_cosine = true;
  if (a.fcn_layers) cfg.model.fcn_layers = *a.fcn_layers;
  if (a.max_epochs) cfg.train.max_epochs = *a.max_epochs;
  if (a.patience) cfg.train.patience = *a.patience;
  if (a.max_updates) cfg.train.max_updates = *a.max_updates;
  if (a.lr) cfg.train.lr = *a.lr;
  if (a.dropout) cfg.train.dropout = cfg.model.dropout = *a.dropout;
  cfg.model.validate();
  cfg.train.validate();

  auto ws = pipeline::open_workspace(a.corpus, a.cache);
  cfg.model.d_raw = ws.store.dim();
  const nlohmann::json run = {{"model", cfg.model.to_json()},
                              {"train", cfg.train.to_json()},
                              {"seed", cfg.seed},
                              {"provider", ws.provider_config.to_json()}};
  const auto digest = pipeline::config_digest(run);
  nlohmann::json extra = {{"config_digest", digest},
                          {"corpus", fs::absolute(a.corpus).lexically_normal().string()},
                          {"cache", fs::absolute(a.cache).lexically_normal().string()}};
  std::unique_ptr<Model<float>> model;
  if (cfg.model.kind != ModelKind::cosine) {
    auto tc = cfg.train;
    tc.log_path = a.out / "train_log.jsonl";
    fs::create_directories(a.out);
    model = make_model<float>(cfg.model, cfg.seed);
    const auto fr = train::fit(*model, ws.store, ws.queries(Split::train),
                               ws.queries(Split::validation), tc, [&](const train::EpochLog& e) {
                                 log(g, e.to_json().dump());
                               });
    extra["fit"] = {{"best_epoch", fr.best_epoch},
                    {"best_val_hr10", fr.best_hr10},
                    {"best_val_ndcg10", fr.best_ndcg10},
                    {"epochs", fr.epochs.size()},
                    {"updates", fr.updates}};
  }
  train::save_checkpoint(a.out, model.get(), cfg.model, cfg.train.to_json(), cfg.seed, extra);
  const auto ck = train::load_checkpoint(a.out);
  std::cout << "checkpoint " << a.out.string() << " " << ck.params_digest << "\n";
  return 0;
}

pipeline::Workspace workspace_for(const train::Checkpoint& ck, const std::string& corpus,
                                  const std::string& cache) {
  const fs::path c = corpus.empty() ? fs::path(ck.extra.value("corpus", std::string())) : fs::path(corpus);
  const fs::path e = cache.empty() ? fs::path(ck.extra.value("cache", std::string())) : fs::path(cache);
  if (c.empty() || e.empty()) throw ConfigError("checkpoint names no corpus/cache; pass --corpus and --cache");
  return pipeline::open_workspace(c, e);
}

int run_eval(const Globals& g, const fs::path& ckpt, const std::string& protocol,
             const std::string& split, const fs::path& out, const std::string& corpus,
             const std::string& cache) {
  auto cfg = resolve_config(g);
  if (!protocol.empty()) cfg.protocol = eval::protocol_from_string(protocol);
  if (!split.empty()) cfg.eval_split = split_from_string(split);
  const auto ck = train::load_checkpoint(ckpt);
  auto ws = workspace_for(ck, corpus, cache);
  const nlohmann::json run = {{"model_digest", ck.params_digest},
                              {"train_config_digest", ck.extra.value("config_digest", "")},
                              {"protocol", eval::to_string(cfg.protocol)},
                              {"split", to_string(cfg.eval_split)},
                              {"seed", cfg.seed}};
  const auto digest = pipeline::config_digest(run);
  const auto report = pipeline::evaluate(ws, ck.model.get(), cfg.protocol, cfg.eval_split, cfg.seed, digest);
  auto j = report.to_json();
  j["model_digest"] = ck.params_digest;
  j["split"] = to_string(cfg.eval_split);
  io::write_json(out, j);
  std::cout << j.dump() << "\n";
  return 0;
}

int run_serve(const Globals& g, const fs::path& ckpt, int port, const std::string& host,
              const std::string& corpus, const std::string& cache, int reload_ms) {
  auto cfg = resolve_config(g);
  if (port > 0) cfg.service.port = port;
  if (!host.empty()) cfg.service.host = host;
  const auto ck = train::load_checkpoint(ckpt);
  auto ws = workspace_for(ck, corpus, cache);
  service::RecommenderService svc(ws, cfg.service, cfg.seed);
  svc.swap_model(std::make_shared<const service::LoadedModel>(train::load_checkpoint(ckpt), ws.store));
  if (reload_ms > 0) svc.watch_checkpoint(ckpt, reload_ms);
  std::cerr << "serving on " << cfg.service.host << ":" << cfg.service.port << "\n";
  svc.listen(cfg.service.host, cfg.service.port);
  return 0;
}

int run_recommend(const Globals& g, const fs::path& ckpt, const std::string& user,
                  const std::string& ac, const std::vector<std::string>& statement_ids, int k,
                  const std::string& protocol, const std::string& corpus, const std::string& cache) {
  auto cfg = resolve_config(g);
  const auto ck = train::load_checkpoint(ckpt);
  auto ws = workspace_for(ck, corpus, cache);
  service::RecommenderService svc(ws, cfg.service, cfg.seed);
  svc.swap_model(std::make_shared<const service::LoadedModel>(train::load_checkpoint(ckpt), ws.store));
  nlohmann::json body = {{"user_id", user}, {"k", k}, {"protocol", protocol},
                         {"ac", {{"statement_ids", statement_ids}}}};
  if (!ac.empty()) body["ac"]["free_text"] = ac;
  const auto resp = svc.recommend(service::RecommendRequest::from_json(body));
  auto j = resp.to_json();
  j["config_digest"] = pipeline::config_digest({{"model_digest", ck.params_digest}, {"seed", cfg.seed}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affective-cognitive book recommender"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "random seed")->group("Global");
  app.add_option("--config", g.config_path, "config file (JSON)")->check(CLI::ExistingFile)->group("Global");
  app.add_flag("--verbose,-v", g.verbose, "progress on stderr")->group("Global");

  std::function<int()> action;

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus in ingest input format");
  fs::path synth_out;
  int synth_users = 0, synth_books = 0;
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--users", synth_users);
  synth_cmd->add_option("--books", synth_books);
  synth_cmd->callback([&] { action = [&] { return run_synth(g, synth_out, synth_users, synth_books); }; });

  auto* ingest_cmd = app.add_subcommand("ingest", "load, select useful steps and split");
  fs::path books, interactions, ingest_out;
  std::string ingest_statements;
  ingest_cmd->add_option("--books", books)->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--interactions", interactions)->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--statements", ingest_statements, "statement store to ship with the corpus")
      ->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest_out)->required();
  ingest_cmd->callback([&] {
    action = [&] { return run_ingest(g, books, interactions, ingest_statements, ingest_out); };
  });

  auto* embed_cmd = app.add_subcommand("embed", "populate the embedding cache");
  fs::path embed_corpus, embed_out;
  std::string embed_provider = "hash", embed_endpoint;
  embed_cmd->add_option("--corpus", embed_corpus)->required()->check(CLI::ExistingDirectory);
  embed_cmd->add_option("--provider", embed_provider)
      ->check(CLI::IsMember({"remote", "hash", "file_cache"}));
  embed_cmd->add_option("--endpoint", embed_endpoint, "remote provider URL");
  embed_cmd->add_option("--out", embed_out)->required();
  embed_cmd->callback([&] {
    action = [&] { return run_embed(g, embed_corpus, embed_provider, embed_out, embed_endpoint); };
  });

  auto* extract_cmd = app.add_subcommand("extract", "extract AC statements from reviews");
  fs::path reviews, extract_out;
  std::string mode = "lexicon", fixture, prompts_dir;
  extract_cmd->add_option("--reviews", reviews)->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--mode", mode)->check(CLI::IsMember({"remote", "fixture", "lexicon"}));
  extract_cmd->add_option("--fixture", fixture)->check(CLI::ExistingFile);
  extract_cmd->add_option("--prompts", prompts_dir)->check(CLI::ExistingDirectory);
  extract_cmd->add_option("--out", extract_out)->required();
  extract_cmd->callback([&] {
    action = [&] { return run_extract(g, reviews, mode, extract_out, fixture, prompts_dir); };
  });

  auto* audit_cmd = app.add_subcommand("audit", "sample statements for the manual quality audit");
  fs::path audit_statements, audit_out;
  std::size_t audit_n = 100;
  std::string annotated;
  audit_cmd->add_option("--statements", audit_statements)->check(CLI::ExistingFile);
  audit_cmd->add_option("-n", audit_n);
  audit_cmd->add_option("--out", audit_out);
  audit_cmd->add_option("--annotated", annotated, "annotated worksheet to score")
      ->check(CLI::ExistingFile);
  audit_cmd->callback([&] {
    action = [&] {
      if (annotated.empty() && (audit_statements.empty() || audit_out.empty())) {
        throw ConfigError("audit needs --statements and --out, or --annotated");
      }
      return run_audit(g, audit_statements, audit_n, audit_out, annotated);
    };
  });

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  TrainArgs ta;
  train_cmd->add_option("--corpus", ta.corpus)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--cache", ta.cache)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--model", ta.model)->check(CLI::IsMember({"acrec", "fcn", "cosine"}));
  train_cmd->add_flag("--use-cosine", ta.use_cosine);
  train_cmd->add_option("--fcn-layers", ta.fcn_layers);
  train_cmd->add_option("--max-epochs", ta.max_epochs);
  train_cmd->add_option("--patience", ta.patience);
  train_cmd->add_option("--max-updates", ta.max_updates);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--dropout", ta.dropout);
  train_cmd->add_option("--out", ta.out)->required();
  train_cmd->callback([&] { action = [&] { return run_train(g, ta); }; });

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path eval_ckpt, eval_out;
  std::string protocol, split, eval_corpus, eval_cache;
  eval_cmd->add_option("--ckpt", eval_ckpt)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--protocol", protocol)->check(CLI::IsMember({"all_items", "top1of20", "val101"}));
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "validation", "test"}));
  eval_cmd->add_option("--corpus", eval_corpus);
  eval_cmd->add_option("--cache", eval_cache);
  eval_cmd->add_option("--out", eval_out)->required();
  eval_cmd->callback([&] {
    action = [&] { return run_eval(g, eval_ckpt, protocol, split, eval_out, eval_corpus, eval_cache); };
  });

  auto* serve_cmd = app.add_subcommand("serve", "serve the HTTP API");
  fs::path serve_ckpt;
  int port = 0, reload_ms = 0;
  std::string host, serve_corpus, serve_cache;
  serve_cmd->add_option("--ckpt", serve_ckpt)->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--corpus", serve_corpus);
  serve_cmd->add_option("--cache", serve_cache);
  serve_cmd->add_option("--reload-ms", reload_ms, "poll the checkpoint and hot-swap changes");
  serve_cmd->callback([&] {
    action = [&] { return run_serve(g, serve_ckpt, port, host, serve_corpus, serve_cache, reload_ms); };
  });

  auto* rec_cmd = app.add_subcommand("recommend", "rank books for one user");
  fs::path rec_ckpt;
  std::string user, ac, rec_protocol = "all_items", rec_corpus, rec_cache;
  std::vector<std::string> statement_ids;
  int k = 10;
  rec_cmd->add_option("--ckpt", rec_ckpt)->required()->check(CLI::ExistingDirectory);
  rec_cmd->add_option("--user", user)->required();
  rec_cmd->add_option("--ac", ac, "free-text AC description");
  rec_cmd->add_option("--statement", statement_ids, "statement id (repeatable)");
  rec_cmd->add_option("-k", k);
  rec_cmd->add_option("--protocol", rec_protocol)->check(CLI::IsMember({"all_items", "sampled"}));
  rec_cmd->add_option("--corpus", rec_corpus);
  rec_cmd->add_option("--cache", rec_cache);
  rec_cmd->callback([&] {
    action = [&] {
      return run_recommend(g, rec_ckpt, user, ac, statement_ids, k, rec_protocol, rec_corpus, rec_cache);
    };
  });

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NotFoundError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const CorruptionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const embed::CacheMissError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
