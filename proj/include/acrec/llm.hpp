#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/error.hpp"
#include "acrec/taxonomy.hpp"

namespace acrec::taxonomy {

/// Prompt files compiled into the library, keyed by file stem.
const std::map<std::string, std::string>& builtin_prompts();

struct PromptTemplates {
  std::string phase1_id = "phase1_extract.v1";
  std::string phase1;
  std::string phase2_id = "phase2_categorize.v1";
  std::string phase2;

  static PromptTemplates builtin();
  /// Reads <dir>/<id>.txt for both phases.
  static PromptTemplates load(const std::filesystem::path& dir,
                              const std::string& phase1_id = "phase1_extract.v1",
                              const std::string& phase2_id = "phase2_categorize.v1");

  std::string render_phase1(std::string_view review) const;
  std::string render_phase2(const std::vector<ACStatement>& phase1_output) const;
};

struct ExtractionRequest {
  std::string review;
  std::string template_id;
  int phase = 1;
  std::string prompt;
  std::vector<ACStatement> phase1_statements;  // phase 2 input
};

struct LlmReply {
  std::string content;
  bool refused = false;
  double latency_ms = 0.0;
};

class LlmError : public Error {
 public:
  using Error::Error;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual StatementSource source() const = 0;
  virtual LlmReply complete(const ExtractionRequest& request) = 0;
};

struct RemoteLlmConfig {
  std::string endpoint;  // http://host:port/path
  std::string model = "gpt-4o";
  std::string api_key_env = "ACREC_LLM_API_KEY";
  int timeout_ms = 60000;
};

/// POST {model, messages[]} -> {content} (or {refusal}). The key is read from
/// the environment at request time and sent as a bearer token.
class RemoteLlmClient final : public LlmClient {
 public:
  explicit RemoteLlmClient(RemoteLlmConfig config);
  StatementSource source() const override { return StatementSource::llm; }
  LlmReply complete(const ExtractionRequest& request) override;

 private:
  RemoteLlmConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Replays recorded outputs keyed by the sha256 of the rendered prompt.
/// Records: {prompt_sha256, content} or {prompt_sha256, refusal}.
class FixtureLlmClient final : public LlmClient {
 public:
  FixtureLlmClient() = default;
  static FixtureLlmClient load(const std::filesystem::path& path);

  void add(std::string_view prompt, std::string content, bool refused = false);
  std::size_t size() const { return replies_.size(); }

  StatementSource source() const override { return StatementSource::fixture; }
  LlmReply complete(const ExtractionRequest& request) override;

 private:
  std::map<std::string, LlmReply> replies_;
};

/// Offline stand-in: sentence splitting with simple exclusion filters for
/// phase 1 and lexicon categories for phase 2.
class LexiconLlmClient final : public LlmClient {
 public:
  StatementSource source() const override { return StatementSource::lexicon; }
  LlmReply complete(const ExtractionRequest& request) override;
};

enum class ExtractionStatus { ok, refused, malformed, failed };
std::string_view to_string(ExtractionStatus s);

struct ExtractionLogEntry {
  int phase = 1;
  int attempt = 1;
  std::string template_id;
  std::string prompt_digest;
  std::string raw_output;
  double latency_ms = 0.0;
  std::string status;  // ok | refused | malformed | error
  std::string diagnostic;

  nlohmann::json to_json() const;
};

struct ExtractionResult {
  std::vector<ACStatement> statements;
  std::string raw_output;  // final phase-2 output
  double latency_ms = 0.0;
  ExtractionStatus status = ExtractionStatus::ok;
  std::string diagnostic;
  std::vector<ExtractionLogEntry> log;
};

/// Phase-1 extraction followed by phase-2 kind and category refinement.
/// Refusals skip the review; malformed output is retried once and then skipped.
ExtractionResult extract_statements(const std::string& review, LlmClient& client,
                                    const PromptTemplates& templates, const UserId& user = {},
                                    const BookId& book = {});

struct ReviewInput {
  UserId user;
  BookId book;
  std::string text;
};

/// Runs extract_statements over `reviews` with at most `max_in_flight`
/// concurrent requests; results follow input order.
std::vector<ExtractionResult> extract_all(const std::vector<ReviewInput>& reviews,
                                          LlmClient& client, const PromptTemplates& templates,
                                          int max_in_flight = 4);

/// Parses a model reply into statements. Throws DataError when malformed.
std::vector<ACStatement> parse_statements(std::string_view content, int phase);

}  // namespace acrec::taxonomy
