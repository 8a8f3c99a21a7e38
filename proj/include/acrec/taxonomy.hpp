#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/domain.hpp"
#include "acrec/rng.hpp"

namespace acrec::taxonomy {

enum class Valence { negative, positive };
enum class Control { low, high };

std::string_view to_string(Valence v);
std::string_view to_string(Control c);

struct EmotionCategory {
  std::string name;
  Valence valence = Valence::positive;
  Control control = Control::high;
  std::vector<std::string> intensity_levels;  // center -> rim
  bool is_other = false;
  bool added = false;  // not part of the original Geneva wheel

  bool operator==(const EmotionCategory&) const = default;
};

/// 26 named categories followed by "Other".
const std::vector<EmotionCategory>& wheel();
const EmotionCategory* find_category(std::string_view name);
nlohmann::json wheel_to_json();

inline constexpr std::string_view kOther = "Other";

enum class StatementKind { A, C, AC };
enum class StatementSource { llm, lexicon, fixture };

std::string_view to_string(StatementKind k);
StatementKind statement_kind_from_string(std::string_view s);
std::string_view to_string(StatementSource s);
StatementSource statement_source_from_string(std::string_view s);

struct ACStatement {
  std::string id;
  std::string text;
  StatementKind kind = StatementKind::A;
  std::set<std::string> categories;  // empty iff kind == C
  StatementSource source = StatementSource::fixture;
  std::optional<std::string> facet;
  // Review the statement was extracted from, when known.
  std::optional<UserId> user;
  std::optional<BookId> book;

  bool operator==(const ACStatement&) const = default;
};

/// "st-" followed by 16 hex digits of sha256 over (user, book, text).
std::string statement_id(std::string_view text, std::string_view user = {},
                         std::string_view book = {});

/// Throws DataError when kind/category invariants fail or a category is unknown.
void validate(const ACStatement& s);

void to_json(nlohmann::json& j, const ACStatement& s);
void from_json(const nlohmann::json& j, ACStatement& s);

struct LexiconEntry {
  std::string category;
  int level = 0;  // index into intensity_levels
};

/// Single-word lookup built from the wheel's intensity words plus a fixed
/// synonym list.
class Lexicon {
 public:
  static const Lexicon& builtin();

  const std::map<std::string, LexiconEntry>& entries() const { return entries_; }
  std::optional<LexiconEntry> lookup(std::string_view word) const;

  /// Categories of every matched token; {"Other"} when nothing matches.
  std::set<std::string> classify(std::string_view text) const;
  /// Matched (category, level) pairs, without the Other fallback.
  std::set<std::pair<std::string, int>> matches(std::string_view text) const;

 private:
  std::map<std::string, LexiconEntry> entries_;
};

/// Lower-cased alphabetic tokens; apostrophes are dropped.
std::vector<std::string> lexicon_tokens(std::string_view text);

/// Throws ConfigError for C statements.
std::set<std::string> classify_emotions(const ACStatement& statement, const Lexicon& lexicon);

class StatementRepository {
 public:
  StatementRepository() = default;
  StatementRepository(const StatementRepository& other);
  StatementRepository& operator=(const StatementRepository& other);

  /// Validates and inserts. Re-adding an identical statement is a no-op; a
  /// different statement under an existing id throws DataError.
  void add(ACStatement statement);

  std::size_t size() const;
  std::optional<ACStatement> get(const std::string& id) const;
  std::vector<ACStatement> all() const;

  /// Statements in ascending id order carrying `category`. With `intensity`,
  /// keeps those whose text uses a lexicon word at that intensity level.
  /// Throws NotFoundError on an unknown category or intensity word.
  std::vector<ACStatement> by_category(const std::string& category,
                                       const std::optional<std::string>& intensity = {}) const;

  /// Statements extracted from the review of (user, book), ascending id.
  std::vector<ACStatement> for_review(const UserId& user, const BookId& book) const;

  /// Renders free text plus the statements, de-duplicated in ascending id
  /// order. Throws NotFoundError on unknown ids, DataError when empty.
  ACDescription compose(const std::vector<std::string>& ids,
                        const std::optional<std::string>& free_text = {}) const;

  std::map<std::string, std::size_t> category_counts() const;

  static StatementRepository load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, ACStatement> statements_;
  std::map<std::pair<UserId, BookId>, std::vector<std::string>> by_review_;
};

/// Reads "category<TAB>count" lines (a header line is allowed). Names must be
/// wheel categories.
std::vector<std::pair<std::string, std::size_t>> load_distribution(
    const std::filesystem::path& path);

/// One single-category fixture statement per counted occurrence.
StatementRepository fixture_repository(
    const std::vector<std::pair<std::string, std::size_t>>& distribution);

struct AuditRow {
  std::string statement_id;
  std::string kind;
  std::string text;
  std::array<std::optional<bool>, 6> answers;
};

struct AuditWorksheet {
  std::vector<AuditRow> rows;

  static const std::array<std::string, 6>& questions();

  /// Share of fully annotated rows answering yes to every question;
  /// nullopt when nothing is annotated.
  std::optional<double> precision() const;

  std::string to_tsv() const;
  static AuditWorksheet from_tsv(std::string_view tsv);
};

/// Uniform sample of `n` statements without replacement. Throws ConfigError
/// when n exceeds the number of statements.
AuditWorksheet audit_sample(const std::vector<ACStatement>& statements, std::size_t n, Rng& rng);

}  // namespace acrec::taxonomy
