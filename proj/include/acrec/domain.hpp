#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace acrec {

using BookId = std::string;
using UserId = std::string;

struct Book {
  BookId id;
  std::string title;
  std::string original_description;
  std::string extended_description;  // empty until built by ingest

  bool operator==(const Book&) const = default;
};

struct Interaction {
  UserId user;
  BookId book;
  int rating = 0;  // 1..5
  std::string review;
  std::int64_t timestamp = 0;  // epoch seconds; only the order matters
  int index = 0;               // position within the user's chronological history

  bool operator==(const Interaction&) const = default;
};

struct ReadingHistory {
  UserId user;
  std::vector<Interaction> interactions;  // chronological

  /// B^u: every book this user consumed.
  std::set<BookId> consumed() const;
  /// Books consumed strictly before history position `step_index`.
  std::set<BookId> consumed_before(int step_index) const;

  bool operator==(const ReadingHistory&) const = default;
};

/// What the user wants to feel. `rendered` is the text that gets embedded.
struct ACDescription {
  std::optional<std::string> free_text;
  std::vector<std::string> statement_ids;  // ascending, unique
  std::string rendered;

  bool operator==(const ACDescription&) const = default;
};

/// Builds an AC description. Statements are de-duplicated and joined in
/// ascending id order by single spaces; free text, when present, comes first.
/// Throws DataError when the result would be empty.
ACDescription render_ac_description(const std::optional<std::string>& free_text,
                                    std::vector<std::pair<std::string, std::string>> statements);

enum class Split { train, validation, test, burn_in, skipped };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool all_finite() const;
  bool operator==(const EmbeddingVector&) const = default;
};

struct ValidationReport {
  std::vector<std::string> duplicate_books;
  std::vector<std::string> dangling_references;
  std::vector<std::string> rating_violations;
  std::vector<std::string> order_violations;

  bool accepted() const {
    return duplicate_books.empty() && dangling_references.empty() && rating_violations.empty() &&
           order_violations.empty();
  }
  std::size_t size() const {
    return duplicate_books.size() + dangling_references.size() + rating_violations.size() +
           order_violations.size();
  }
  std::string summary() const;
};

ValidationReport validate_corpus(const std::vector<Book>& books,
                                 const std::vector<ReadingHistory>& histories);

void to_json(nlohmann::json& j, const Book& b);
void from_json(const nlohmann::json& j, Book& b);
void to_json(nlohmann::json& j, const Interaction& x);
void from_json(const nlohmann::json& j, Interaction& x);
void to_json(nlohmann::json& j, const ReadingHistory& h);
void from_json(const nlohmann::json& j, ReadingHistory& h);
void to_json(nlohmann::json& j, const ACDescription& a);
void from_json(const nlohmann::json& j, ACDescription& a);
void to_json(nlohmann::json& j, const EmbeddingVector& v);
void from_json(const nlohmann::json& j, EmbeddingVector& v);

}  // namespace acrec
