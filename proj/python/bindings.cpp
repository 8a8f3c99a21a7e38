#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "acrec/embed.hpp"
#include "acrec/eval.hpp"
#include "acrec/ingest.hpp"
#include "acrec/llm.hpp"
#include "acrec/pipeline.hpp"
#include "acrec/service.hpp"
#include "acrec/taxonomy.hpp"
#include "acrec/train.hpp"

namespace py = pybind11;
using namespace acrec;

namespace {

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

/// Checkpoint + workspace held together for one-shot ranking.
class Recommender {
 public:
  Recommender(const std::string& ckpt, const std::string& corpus, const std::string& cache,
              std::uint64_t seed) {
    const auto ck = train::load_checkpoint(ckpt);
    ws_ = std::make_unique<pipeline::Workspace>(pipeline::open_workspace(
        corpus.empty() ? ck.extra.value("corpus", std::string()) : corpus,
        cache.empty() ? ck.extra.value("cache", std::string()) : cache));
    svc_ = std::make_unique<service::RecommenderService>(*ws_, pipeline::ServiceSettings{}, seed);
    svc_->swap_model(service::LoadedModel::load(ckpt, ws_->store));
  }

  py::object recommend(const std::string& user, const std::optional<std::string>& ac,
                       const std::vector<std::string>& statement_ids, int k,
                       const std::string& protocol) {
    nlohmann::json body = {{"user_id", user}, {"k", k}, {"protocol", protocol},
                           {"ac", {{"statement_ids", statement_ids}}}};
    if (ac) body["ac"]["free_text"] = *ac;
    return to_py(svc_->recommend(service::RecommendRequest::from_json(body)).to_json());
  }

  py::tuple handle(const std::string& method, const std::string& path,
                   const std::map<std::string, std::string>& params, const std::string& body) {
    std::multimap<std::string, std::string> mm(params.begin(), params.end());
    const auto r = svc_->handle(method, path, mm, body);
    return py::make_tuple(r.status, to_py(r.body));
  }

 private:
  std::unique_ptr<pipeline::Workspace> ws_;
  std::unique_ptr<service::RecommenderService> svc_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Affective-cognitive book recommender";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_KeyError);
  py::register_exception<CorruptionError>(m, "CorruptionError", PyExc_RuntimeError);

  m.def("long_term_weights", &long_term_weights, py::arg("n"));
  m.def("bpr_loss", [](double y_pos, const std::vector<double>& negs) {
    return train::bpr_loss_value(y_pos, negs);
  }, py::arg("y_pos"), py::arg("y_negs"));
  m.def("hit_ratio_at_k", &eval::hit_ratio_at_k, py::arg("rank"), py::arg("k"));
  m.def("ndcg_at_k", &eval::ndcg_at_k, py::arg("rank"), py::arg("k"));
  m.def("hash_embed", [](const std::string& text, int dim, std::uint64_t seed) {
    return embed::hash_embed(text, dim, seed).values;
  }, py::arg("text"), py::arg("dim") = 768, py::arg("seed") = 0);
  m.def("even_spread_positions", &ingest::even_spread_positions, py::arg("n"), py::arg("max_steps"));
  m.def("select_step_indices", [](const std::vector<int>& useful, int burn_in, std::size_t max_steps) {
    return ingest::select_step_indices(useful, burn_in, max_steps);
  }, py::arg("useful_indices"), py::arg("burn_in") = 15, py::arg("max_steps") = 20);

  m.def("wheel", [] { return to_py(taxonomy::wheel_to_json()); });
  m.def("classify_emotions", [](const std::string& text) {
    return taxonomy::Lexicon::builtin().classify(text);
  }, py::arg("text"));
  m.def("extract_statements", [](const std::string& review, const std::string& user, const std::string& book) {
    taxonomy::LexiconLlmClient client;
    const auto r = taxonomy::extract_statements(review, client, taxonomy::PromptTemplates::builtin(), user, book);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : r.statements) out.push_back(s);
    return to_py(out);
  }, py::arg("review"), py::arg("user") = "", py::arg("book") = "",
     "Two-phase extraction with the offline lexicon client.");
  m.def("compose", [](const py::object& statements, const std::vector<std::string>& ids,
                      const std::optional<std::string>& free_text) {
    taxonomy::StatementRepository repo;
    for (const auto& j : from_py(statements)) repo.add(j.get<taxonomy::ACStatement>());
    return repo.compose(ids, free_text).rendered;
  }, py::arg("statements"), py::arg("ids"), py::arg("free_text") = py::none());
  m.def("config_digest", [](const py::object& config) {
    return pipeline::config_digest(from_py(config));
  }, py::arg("config"));
  m.def("default_config", [] { return to_py(pipeline::AppConfig{}.to_json()); });

  m.def("run_synthetic", [](const std::string& model, bool use_cosine, int n_users, int n_books,
                            int max_epochs, std::size_t max_updates, std::uint64_t seed,
                            const std::string& protocol) {
    synth::SynthConfig sc;
    sc.n_users = n_users;
    sc.n_books = n_books;
    auto ws = pipeline::synthetic_workspace(sc);
    ModelConfig mc;
    mc.kind = model_kind_from_string(model);
    mc.use_cosine = use_cosine;
    train::TrainConfig tc;
    tc.max_epochs = max_epochs;
    tc.max_updates = max_updates;
    pipeline::RunOutcome out;
    {
      py::gil_scoped_release release;
      out = pipeline::train_and_evaluate(ws, mc, tc, eval::protocol_from_string(protocol),
                                         Split::test, seed);
    }
    return to_py(out.report.to_json());
  }, py::arg("model") = "cosine", py::arg("use_cosine") = false, py::arg("n_users") = 60,
     py::arg("n_books") = 400, py::arg("max_epochs") = 1, py::arg("max_updates") = 0,
     py::arg("seed") = 0, py::arg("protocol") = "val101",
     "Synthetic corpus, optional training, evaluation on the test steps.");

  py::class_<Recommender>(m, "Recommender")
      .def(py::init<const std::string&, const std::string&, const std::string&, std::uint64_t>(),
           py::arg("ckpt"), py::arg("corpus") = "", py::arg("cache") = "", py::arg("seed") = 0)
      .def("recommend", &Recommender::recommend, py::arg("user"), py::arg("ac") = py::none(),
           py::arg("statement_ids") = std::vector<std::string>{}, py::arg("k") = 10,
           py::arg("protocol") = "all_items")
      .def("handle", &Recommender::handle, py::arg("method"), py::arg("path"),
           py::arg("params") = std::map<std::string, std::string>{}, py::arg("body") = "");
}
