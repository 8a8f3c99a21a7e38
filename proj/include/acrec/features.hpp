#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acrec/embed.hpp"
#include "acrec/ingest.hpp"

namespace acrec {

/// Dense row-major float matrix of raw embeddings.
struct RawMatrix {
  int rows = 0;
  int dim = 0;
  std::vector<float> data;

  std::span<const float> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  void append(std::span<const float> v);
};

/// Texts that get embedded for a book.
std::string original_text(const Book& book);
std::string extended_text(const Book& book);
std::string combined_text(const Book& book);

/// Raw embeddings of every book description and every review written by the
/// dataset users, addressed by dense row ids. Book rows follow ascending book id.
class FeatureStore {
 public:
  int dim() const { return dim_; }
  int n_books() const { return static_cast<int>(book_ids_.size()); }
  const std::vector<BookId>& book_ids() const { return book_ids_; }

  /// Row of a book; throws NotFoundError.
  int book_row(const BookId& id) const;
  bool has_book(const BookId& id) const { return book_index_.count(id) > 0; }
  /// Row of the review at (user, step); throws NotFoundError.
  int review_row(const UserId& user, int step_index) const;

  const RawMatrix& original() const { return original_; }
  const RawMatrix& extended() const { return extended_; }
  const RawMatrix& combined() const { return combined_; }
  const RawMatrix& reviews() const { return reviews_; }

  /// Embeds descriptions of every book and the reviews of `users`.
  static FeatureStore build(const ingest::Corpus& corpus, const std::vector<UserId>& users,
                            embed::EmbeddingProvider& provider);

  /// Every text build() would embed for this corpus.
  static std::vector<std::string> texts_to_embed(const ingest::Corpus& corpus,
                                                 const std::vector<UserId>& users);

 private:
  int dim_ = 0;
  std::vector<BookId> book_ids_;
  std::map<BookId, int> book_index_;
  std::map<std::pair<UserId, int>, int> review_index_;
  RawMatrix original_, extended_, combined_, reviews_;
};

/// Everything a scorer needs for one (user, step): the history strictly
/// before the step and the AC embedding.
struct Query {
  UserId user;
  int step_index = 0;
  int positive = -1;  // book row of the ground truth; -1 when unknown
  std::vector<int> books;    // history book rows, chronological
  std::vector<int> reviews;  // history review rows
  std::vector<int> ratings;  // 1..5
  std::vector<float> ac_raw;
  std::vector<int> consumed_before;  // sorted book rows read before the step
  std::vector<int> consumed_all;     // sorted book rows read at any step
};

/// Builds a query for history position `step_index` (history = [0, step_index)).
Query make_query(const FeatureStore& store, const ReadingHistory& history, int step_index,
                 std::vector<float> ac_raw);

/// Queries for `steps`, embedding the AC text that `ac_text` returns for each.
std::vector<Query> make_queries(const FeatureStore& store, const ingest::Corpus& corpus,
                                const std::vector<ingest::UsefulStep>& steps,
                                const std::function<std::string(const ingest::UsefulStep&)>& ac_text,
                                embed::EmbeddingProvider& provider);

}  // namespace acrec
