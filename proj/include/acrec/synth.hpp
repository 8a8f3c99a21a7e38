#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "acrec/domain.hpp"

namespace acrec::synth {

/// Shape of the synthetic benchmark corpus.
struct SynthConfig {
  int n_books = 400;
  int n_users = 60;
  int n_topics = 8;
  int favourite_topics = 2;
  int min_history = 36;
  int max_history = 45;
  double p_favourite = 0.8;
  double p_low_rating = 0.12;
  double p_short_review = 0.05;
  int phrase_words = 10;
  int topic_vocabulary = 150;
  int general_vocabulary = 2000;
  double topic_share = 0.4;
  int description_tokens = 130;
  int review_tokens = 30;
  int outside_reviews_per_book = 2;
  int outside_books_per_user = 10;
  int outside_review_tokens = 70;
  std::uint64_t seed = 0;
};

struct SynthCorpus {
  std::vector<Book> books;  // extended descriptions empty; ingest builds them
  std::vector<Interaction> interactions;
  std::vector<UserId> dataset_users;
  std::map<BookId, std::string> phrases;  // signature phrase per book
  /// AC text per (user, book) of every dataset-user interaction.
  std::map<std::pair<UserId, BookId>, std::string> ac_texts;
};

/// Books carry a unique signature phrase inside their description; dataset
/// users read mostly from favourite topics and mention the phrase in their
/// reviews; outside reviewers (fewer than 20 books each) supply the text for
/// extended descriptions.
SynthCorpus generate(const SynthConfig& config);

}  // namespace acrec::synth
