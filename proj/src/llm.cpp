#include "acrec/llm.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <set>
#include <thread>

#include <httplib.h>

#include "acrec/digest.hpp"
#include "acrec/io.hpp"
#include "acrec/text.hpp"

namespace acrec::taxonomy {

namespace {

std::string replace_all(std::string s, std::string_view what, std::string_view with) {
  std::size_t pos = 0;
  while ((pos = s.find(what, pos)) != std::string::npos) {
    s.replace(pos, what.size(), with);
    pos += with.size();
  }
  return s;
}

std::string category_listing() {
  std::string out;
  for (const auto& c : wheel()) {
    out += "- " + c.name;
    if (!c.intensity_levels.empty()) {
      out += " (";
      for (std::size_t i = 0; i < c.intensity_levels.size(); ++i) {
        if (i) out += ", ";
        out += c.intensity_levels[i];
      }
      out += ")";
    }
    out += '\n';
  }
  return out;
}

std::string prompt_key(std::string_view prompt) { return digest_string(prompt); }

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string strip_fences(std::string_view content) {
  std::string s = text::trim(content);
  if (s.rfind("```", 0) == 0) {
    const auto nl = s.find('\n');
    s = nl == std::string::npos ? std::string() : s.substr(nl + 1);
    const auto end = s.rfind("```");
    if (end != std::string::npos) s.resize(end);
  }
  return s;
}

}  // namespace

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates t;
  const auto& p = builtin_prompts();
  t.phase1 = p.at(t.phase1_id);
  t.phase2 = p.at(t.phase2_id);
  return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir, const std::string& phase1_id,
                                      const std::string& phase2_id) {
  PromptTemplates t;
  t.phase1_id = phase1_id;
  t.phase2_id = phase2_id;
  t.phase1 = io::read_file(dir / (phase1_id + ".txt"));
  t.phase2 = io::read_file(dir / (phase2_id + ".txt"));
  return t;
}

std::string PromptTemplates::render_phase1(std::string_view review) const {
  return replace_all(phase1, "{{review}}", text::trim(review));
}

std::string PromptTemplates::render_phase2(const std::vector<ACStatement>& phase1_output) const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& s : phase1_output) items.push_back({{"text", s.text}, {"kind", to_string(s.kind)}});
  std::string out = replace_all(phase2, "{{categories}}", category_listing());
  return replace_all(out, "{{statements}}", nlohmann::json{{"statements", items}}.dump(2));
}

RemoteLlmClient::RemoteLlmClient(RemoteLlmConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  if (url.rfind("http://", 0) != 0) {
    throw ConfigError("LLM endpoint must be an http:// URL");
  }
  const auto path_start = url.find('/', 7);
  scheme_host_port_ = path_start == std::string::npos ? url : url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

LlmReply RemoteLlmClient::complete(const ExtractionRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const nlohmann::json body = {
      {"model", config_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  const auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  LlmReply reply;
  reply.latency_ms = ms_since(t0);
  if (!res) throw LlmError("LLM request failed: " + httplib::to_string(res.error()));
  nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
  if (doc.is_object() && doc.contains("refusal") && !doc["refusal"].is_null()) {
    reply.refused = true;
    reply.content = doc["refusal"].is_string() ? doc["refusal"].get<std::string>() : "";
    return reply;
  }
  if (res->status != 200) throw LlmError("LLM service returned HTTP " + std::to_string(res->status));
  if (!doc.is_object() || !doc.contains("content") || !doc["content"].is_string()) {
    reply.content = res->body;  // surfaces as malformed output
    return reply;
  }
  reply.content = doc["content"].get<std::string>();
  return reply;
}

FixtureLlmClient FixtureLlmClient::load(const std::filesystem::path& path) {
  FixtureLlmClient c;
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    LlmReply r;
    if (j.contains("refusal")) {
      r.refused = true;
      r.content = j["refusal"].is_string() ? j["refusal"].get<std::string>() : "";
    } else {
      r.content = j.at("content").get<std::string>();
    }
    std::string key = j.contains("prompt_sha256") ? j["prompt_sha256"].get<std::string>()
                                                  : prompt_key(j.at("prompt").get<std::string>());
    c.replies_[key] = std::move(r);
  });
  return c;
}

void FixtureLlmClient::add(std::string_view prompt, std::string content, bool refused) {
  replies_[prompt_key(prompt)] = LlmReply{std::move(content), refused, 0.0};
}

LlmReply FixtureLlmClient::complete(const ExtractionRequest& request) {
  const auto key = prompt_key(request.prompt);
  auto it = replies_.find(key);
  if (it == replies_.end()) throw LlmError("no fixture reply for prompt " + key);
  return it->second;
}

namespace {

const std::set<std::string>& negative_words() {
  static const std::set<std::string> w = {
      "awful",  "bad",      "boring",  "disliked", "dull",   "mediocre", "pointless", "poorly",
      "slow",   "tedious",  "terrible", "waste",   "weak",   "worst",    "overrated", "predictable",
      "didnt",  "couldnt",  "wasnt",   "annoying", "confusing"};
  return w;
}

std::vector<std::string> split_sentences(std::string_view review) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : review) {
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      auto t = text::trim(cur);
      if (!t.empty()) out.push_back(std::move(t));
      cur.clear();
    }
  }
  auto t = text::trim(cur);
  if (!t.empty()) out.push_back(std::move(t));
  return out;
}

bool keep_sentence(const std::string& s) {
  if (text::count_tokens(s) < 3) return false;
  if (std::any_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '"'; })) {
    return false;
  }
  const auto words = text::tokenize(s);
  for (std::size_t i = 1; i < words.size(); ++i) {
    const auto c = static_cast<unsigned char>(words[i][0]);
    // Mid-sentence capitals are taken as names or titles.
    if (std::isupper(c) && words[i] != "I" && words[i].rfind("I'", 0) != 0) return false;
  }
  for (const auto& tok : lexicon_tokens(s)) {
    if (negative_words().count(tok)) return false;
  }
  return true;
}

}  // namespace

LlmReply LexiconLlmClient::complete(const ExtractionRequest& request) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& lex = Lexicon::builtin();
  nlohmann::json items = nlohmann::json::array();
  if (request.phase == 1) {
    for (const auto& s : split_sentences(request.review)) {
      if (!keep_sentence(s)) continue;
      std::string kind = "C";
      if (!lex.matches(s).empty()) kind = text::count_tokens(s) > 8 ? "AC" : "A";
      items.push_back({{"text", s}, {"kind", kind}});
    }
  } else {
    for (const auto& s : request.phase1_statements) {
      nlohmann::json j = {{"text", s.text}, {"kind", to_string(s.kind)}};
      if (s.kind == StatementKind::C) {
        j["categories"] = nlohmann::json::array();
      } else {
        j["categories"] = lex.classify(s.text);
      }
      items.push_back(std::move(j));
    }
  }
  LlmReply r;
  r.content = nlohmann::json{{"statements", items}}.dump();
  r.latency_ms = ms_since(t0);
  return r;
}

std::string_view to_string(ExtractionStatus s) {
  switch (s) {
    case ExtractionStatus::ok: return "ok";
    case ExtractionStatus::refused: return "refused";
    case ExtractionStatus::malformed: return "malformed";
    case ExtractionStatus::failed: return "failed";
  }
  return "failed";
}

nlohmann::json ExtractionLogEntry::to_json() const {
  return {{"phase", phase},           {"attempt", attempt},   {"template_id", template_id},
          {"prompt_digest", prompt_digest}, {"raw_output", raw_output}, {"latency_ms", latency_ms},
          {"status", status},         {"diagnostic", diagnostic}};
}

std::vector<ACStatement> parse_statements(std::string_view content, int phase) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(strip_fences(content));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("output is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("statements") || !doc["statements"].is_array()) {
    throw DataError("output lacks a statements array");
  }
  std::vector<ACStatement> out;
  for (const auto& item : doc["statements"]) {
    if (!item.is_object() || !item.contains("text") || !item["text"].is_string() ||
        !item.contains("kind") || !item["kind"].is_string()) {
      throw DataError("statement entry needs string text and kind");
    }
    ACStatement s;
    s.text = text::trim(item["text"].get<std::string>());
    if (s.text.empty()) throw DataError("empty statement text");
    s.kind = statement_kind_from_string(item["kind"].get<std::string>());
    if (phase == 2 && s.kind != StatementKind::C) {
      if (item.contains("categories")) {
        if (!item["categories"].is_array()) throw DataError("categories must be an array");
        for (const auto& c : item["categories"]) {
          if (!c.is_string() || !find_category(c.get<std::string>())) {
            throw DataError("unknown category " + c.dump());
          }
          s.categories.insert(c.get<std::string>());
        }
      }
      if (s.categories.empty()) s.categories.insert(std::string(kOther));
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct PhaseOutcome {
  std::vector<ACStatement> statements;
  std::string raw;
  ExtractionStatus status = ExtractionStatus::ok;
  std::string diagnostic;
};

PhaseOutcome run_phase(LlmClient& client, ExtractionRequest request, ExtractionResult& result) {
  PhaseOutcome out;
  for (int attempt = 1; attempt <= 2; ++attempt) {
    ExtractionLogEntry entry;
    entry.phase = request.phase;
    entry.attempt = attempt;
    entry.template_id = request.template_id;
    entry.prompt_digest = prompt_key(request.prompt);
    LlmReply reply;
    try {
      reply = client.complete(request);
    } catch (const LlmError& e) {
      entry.status = "error";
      entry.diagnostic = e.what();
      result.log.push_back(entry);
      out.status = ExtractionStatus::failed;
      out.diagnostic = e.what();
      continue;
    }
    entry.raw_output = reply.content;
    entry.latency_ms = reply.latency_ms;
    result.latency_ms += reply.latency_ms;
    if (reply.refused) {
      entry.status = "refused";
      result.log.push_back(entry);
      out.status = ExtractionStatus::refused;
      out.diagnostic = "refused in phase " + std::to_string(request.phase);
      return out;
    }
    try {
      out.statements = parse_statements(reply.content, request.phase);
      out.raw = reply.content;
      out.status = ExtractionStatus::ok;
      out.diagnostic.clear();
      entry.status = "ok";
      result.log.push_back(entry);
      return out;
    } catch (const DataError& e) {
      entry.status = "malformed";
      entry.diagnostic = e.what();
      result.log.push_back(entry);
      out.status = ExtractionStatus::malformed;
      out.diagnostic = "phase " + std::to_string(request.phase) + ": " + e.what();
    }
  }
  return out;
}

}  // namespace

ExtractionResult extract_statements(const std::string& review, LlmClient& client,
                                    const PromptTemplates& templates, const UserId& user,
                                    const BookId& book) {
  ExtractionResult result;
  ExtractionRequest p1{review, templates.phase1_id, 1, templates.render_phase1(review), {}};
  auto first = run_phase(client, std::move(p1), result);
  if (first.status != ExtractionStatus::ok) {
    result.status = first.status;
    result.diagnostic = first.diagnostic;
    return result;
  }
  if (first.statements.empty()) {
    result.raw_output = first.raw;
    return result;
  }
  ExtractionRequest p2{review, templates.phase2_id, 2, templates.render_phase2(first.statements),
                       first.statements};
  auto second = run_phase(client, std::move(p2), result);
  if (second.status != ExtractionStatus::ok) {
    result.status = second.status;
    result.diagnostic = second.diagnostic;
    return result;
  }
  result.raw_output = second.raw;
  std::set<std::string> seen;
  for (auto& s : second.statements) {
    s.id = statement_id(s.text, user, book);
    if (!seen.insert(s.id).second) continue;
    s.source = client.source();
    if (!user.empty()) s.user = user;
    if (!book.empty()) s.book = book;
    result.statements.push_back(std::move(s));
  }
  std::sort(result.statements.begin(), result.statements.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return result;
}

std::vector<ExtractionResult> extract_all(const std::vector<ReviewInput>& reviews,
                                          LlmClient& client, const PromptTemplates& templates,
                                          int max_in_flight) {
  std::vector<ExtractionResult> out(reviews.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reviews.size(); i = next++) {
      out[i] = extract_statements(reviews[i].text, client, templates, reviews[i].user,
                                  reviews[i].book);
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, max_in_flight)),
                                       std::max<std::size_t>(reviews.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace acrec::taxonomy
