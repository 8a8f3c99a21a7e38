#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "acrec/domain.hpp"

namespace acrec::ingest {

struct Corpus {
  std::vector<Book> books;
  std::vector<ReadingHistory> histories;  // sorted by user id

  const Book* find_book(const BookId& id) const;
  const ReadingHistory* find_history(const UserId& user) const;
};

/// Reads the line-delimited books file ({id, title, description}).
std::vector<Book> read_books(const std::filesystem::path& path);

/// Reads the line-delimited interactions file
/// ({user_id, book_id, rating, review, timestamp}).
std::vector<Interaction> read_interactions(const std::filesystem::path& path);

/// Groups interactions per user, sorts each history by timestamp (ties keep
/// input order) and assigns 0-based indices.
std::vector<ReadingHistory> group_histories(std::vector<Interaction> interactions);

/// Loads and validates a corpus. Throws DataError on parse or validation
/// failure; the message names the offending line or book id.
Corpus load_corpus(const std::filesystem::path& books_path,
                   const std::filesystem::path& interactions_path);

struct BandConfig {
  int band_width = 50;
  int min_books = 20;
  int max_books = 500;
  int per_band = 100;
};

struct BandSelection {
  std::vector<UserId> users;  // band order, sampled order within a band
  std::vector<std::string> warnings;
};

/// Samples up to `per_band` users from each history-length band
/// [min_books, w], [w+1, 2w], ..., up to max_books.
BandSelection sample_users_by_band(const std::vector<ReadingHistory>& histories,
                                   const BandConfig& config, std::uint64_t seed);

/// Extended description per book: the reviews written by users outside
/// `excluded_users`, ordered by (timestamp, user id), joined by single spaces
/// and truncated to `max_tokens` whitespace tokens.
std::map<BookId, std::string> build_extended_descriptions(
    const std::vector<Book>& books, const std::vector<ReadingHistory>& histories,
    const std::set<UserId>& excluded_users, std::size_t max_tokens = 8192);

struct UsefulStepThresholds {
  int min_rating = 4;
  std::size_t min_review_tokens = 20;
  std::size_t min_description_tokens = 250;
};

bool is_useful_step(const Interaction& interaction, const Book& book,
                    const UsefulStepThresholds& thresholds = {});

/// Positions into a candidate list of length `n` kept by the even-spread rule
/// round(i * (n - 1) / (max_steps - 1)), de-duplicated. All positions when
/// n <= max_steps.
std::vector<std::size_t> even_spread_positions(std::size_t n, std::size_t max_steps);

struct UsefulStep {
  UserId user;
  int step_index = 0;
  BookId positive_book;
  std::string review;
  int rating = 0;
  Split split = Split::skipped;

  bool operator==(const UsefulStep&) const = default;
};

/// Every useful step of `history`, labelled burn_in (index < burn_in),
/// skipped (not chosen by the even spread) or train (chosen; refined later by
/// make_splits).
std::vector<UsefulStep> label_useful_steps(const ReadingHistory& history,
                                           const std::map<BookId, const Book*>& books,
                                           const UsefulStepThresholds& thresholds,
                                           int burn_in = 15, std::size_t max_steps = 20);

/// The chosen subset of label_useful_steps (split left as train).
std::vector<UsefulStep> select_useful_steps(const ReadingHistory& history,
                                            const std::map<BookId, const Book*>& books,
                                            const UsefulStepThresholds& thresholds,
                                            int burn_in = 15, std::size_t max_steps = 20);

/// Index-level form: filters indices below burn_in, then spreads evenly.
std::vector<int> select_step_indices(std::span<const int> useful_indices, int burn_in = 15,
                                     std::size_t max_steps = 20);

/// Labels one user's chronological selected steps: last -> test,
/// second-to-last -> validation, rest -> train.
void make_splits(std::vector<UsefulStep>& user_steps);

struct CorpusStats {
  std::size_t n_users = 0;
  std::size_t n_steps = 0;
  std::size_t n_books = 0;
  std::size_t n_useful = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::size_t n_burn_in = 0;
  std::size_t n_skipped = 0;
  std::vector<UserId> users_without_train;
};

struct IngestConfig {
  BandConfig bands;
  UsefulStepThresholds thresholds;
  int burn_in = 15;
  std::size_t max_steps = 20;
  std::size_t max_extended_tokens = 8192;
  std::uint64_t seed = 0;
};

struct IngestResult {
  Corpus corpus;  // books carry extended descriptions
  std::vector<UserId> dataset_users;
  std::vector<UsefulStep> steps;  // every useful step of dataset users, labelled
  CorpusStats stats;
  std::vector<std::string> warnings;
};

IngestResult run_ingest(Corpus corpus, const IngestConfig& config);

nlohmann::json to_json(const IngestConfig& config);
nlohmann::json to_json(const CorpusStats& stats);

/// One record per line: {user_id, step_index, book_id, split}.
void write_splits(const std::filesystem::path& path, const std::vector<UsefulStep>& steps);
std::vector<UsefulStep> read_splits(const std::filesystem::path& path, const Corpus& corpus);

/// Corpus directory layout: books.jsonl, interactions.jsonl, splits.jsonl,
/// stats.json.
void write_corpus_dir(const std::filesystem::path& dir, const IngestResult& result,
                      const std::string& config_digest);

struct CorpusDir {
  Corpus corpus;
  std::vector<UsefulStep> steps;
};

CorpusDir read_corpus_dir(const std::filesystem::path& dir);

}  // namespace acrec::ingest
