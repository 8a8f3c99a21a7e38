#include "acrec/synth.hpp"

#include <algorithm>
#include <set>

#include "acrec/error.hpp"
#include "acrec/rng.hpp"

namespace acrec::synth {

namespace {

class WordSource {
 public:
  explicit WordSource(Rng& rng) : rng_(rng) {}

  /// Fresh pseudo-word never returned before.
  std::string fresh(int min_syllables, int max_syllables) {
    static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                              "s", "t", "v", "z", "br", "dr", "kl", "st", "tr", "sh"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
    for (;;) {
      const int n = min_syllables + static_cast<int>(rng_.uniform_index(max_syllables - min_syllables + 1));
      std::string w;
      for (int i = 0; i < n; ++i) {
        w += kOnsets[rng_.uniform_index(std::size(kOnsets))];
        w += kVowels[rng_.uniform_index(std::size(kVowels))];
      }
      if (rng_.uniform01() < 0.5) w += kOnsets[rng_.uniform_index(10)];
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string pick(const std::vector<std::string>& words, Rng& rng) {
  return words[rng.uniform_index(words.size())];
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

/// `n` tokens, a fraction from the topic list and the rest from the general one.
std::vector<std::string> filler(int n, const std::vector<std::string>& topic,
                                const std::vector<std::string>& general, double topic_share, Rng& rng) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(rng.uniform01() < topic_share ? pick(topic, rng) : pick(general, rng));
  return out;
}

std::string pad_id(const char* prefix, int i) {
  std::string digits = std::to_string(i);
  return prefix + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

}  // namespace

SynthCorpus generate(const SynthConfig& c) {
  if (c.n_books < 1 || c.n_users < 1 || c.n_topics < 1 || c.favourite_topics < 1 ||
      c.favourite_topics > c.n_topics || c.min_history < 1 || c.max_history < c.min_history ||
      c.max_history > c.n_books || c.outside_books_per_user >= 20 || c.outside_books_per_user < 1) {
    throw ConfigError("inconsistent synthetic corpus configuration");
  }
  Rng rng(mix_seed(c.seed, 0x73796e7468ULL));
  WordSource words(rng);

  std::vector<std::string> general;
  for (int i = 0; i < c.general_vocabulary; ++i) general.push_back(words.fresh(1, 2));
  std::vector<std::vector<std::string>> topics(static_cast<std::size_t>(c.n_topics));
  for (auto& t : topics) {
    for (int i = 0; i < c.topic_vocabulary; ++i) t.push_back(words.fresh(2, 3));
  }

  SynthCorpus out;
  std::vector<int> topic_of(static_cast<std::size_t>(c.n_books));
  std::vector<std::vector<int>> books_in_topic(static_cast<std::size_t>(c.n_topics));
  for (int b = 0; b < c.n_books; ++b) {
    const int topic = b % c.n_topics;
    topic_of[static_cast<std::size_t>(b)] = topic;
    books_in_topic[static_cast<std::size_t>(topic)].push_back(b);
    std::vector<std::string> phrase;
    for (int i = 0; i < c.phrase_words; ++i) phrase.push_back(words.fresh(3, 4));
    const std::string phrase_text = join(phrase);
    auto body = filler(c.description_tokens, topics[static_cast<std::size_t>(topic)], general, c.topic_share, rng);
    const auto at = static_cast<long>(rng.uniform_index(body.size() + 1));
    body.insert(body.begin() + at, phrase_text);
    Book book;
    book.id = pad_id("b", b);
    book.title = "The " + pick(topics[static_cast<std::size_t>(topic)], rng) + " of " + pick(general, rng);
    book.original_description = join(body);
    out.phrases[book.id] = phrase_text;
    out.books.push_back(std::move(book));
  }

  std::int64_t clock = 1'600'000'000;
  // Outside reviewers: each covers a block of books, fewer than 20 in total.
  const int outside_total = c.n_books * c.outside_reviews_per_book;
  const int n_outside = (outside_total + c.outside_books_per_user - 1) / c.outside_books_per_user;
  std::vector<int> order;
  for (int r = 0; r < c.outside_reviews_per_book; ++r) {
    std::vector<int> perm(static_cast<std::size_t>(c.n_books));
    for (int b = 0; b < c.n_books; ++b) perm[static_cast<std::size_t>(b)] = b;
    rng.shuffle(std::span<int>(perm));
    order.insert(order.end(), perm.begin(), perm.end());
  }
  for (int u = 0; u < n_outside; ++u) {
    std::set<int> seen;
    for (int k = 0; k < c.outside_books_per_user; ++k) {
      const std::size_t slot = static_cast<std::size_t>(u * c.outside_books_per_user + k);
      if (slot >= order.size()) break;
      const int b = order[slot];
      if (!seen.insert(b).second) continue;
      Interaction x;
      x.user = pad_id("o", u);
      x.book = out.books[static_cast<std::size_t>(b)].id;
      x.rating = 3 + static_cast<int>(rng.uniform_index(3));
      x.review = join(filler(c.outside_review_tokens, topics[static_cast<std::size_t>(topic_of[static_cast<std::size_t>(b)])],
                             general, c.topic_share, rng));
      x.timestamp = clock++;
      out.interactions.push_back(std::move(x));
    }
  }

  for (int u = 0; u < c.n_users; ++u) {
    const UserId user = pad_id("u", u);
    out.dataset_users.push_back(user);
    std::vector<int> all_topics(static_cast<std::size_t>(c.n_topics));
    for (int t = 0; t < c.n_topics; ++t) all_topics[static_cast<std::size_t>(t)] = t;
    rng.shuffle(std::span<int>(all_topics));
    const std::vector<int> favourites(all_topics.begin(), all_topics.begin() + c.favourite_topics);
    const int length = c.min_history + static_cast<int>(rng.uniform_index(c.max_history - c.min_history + 1));
    std::set<int> read;
    for (int step = 0; step < length; ++step) {
      int b = -1;
      for (int attempt = 0; attempt < 64 && b < 0; ++attempt) {
        int candidate;
        if (rng.uniform01() < c.p_favourite) {
          const auto& pool = books_in_topic[static_cast<std::size_t>(favourites[rng.uniform_index(favourites.size())])];
          candidate = pool[rng.uniform_index(pool.size())];
        } else {
          candidate = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(c.n_books)));
        }
        if (!read.count(candidate)) b = candidate;
      }
      if (b < 0) {
        for (int k = 0; k < c.n_books && b < 0; ++k) {
          if (!read.count(k)) b = k;
        }
      }
      read.insert(b);
      const auto& book = out.books[static_cast<std::size_t>(b)];
      const auto& phrase = out.phrases[book.id];
      const auto& topic_words = topics[static_cast<std::size_t>(topic_of[static_cast<std::size_t>(b)])];
      Interaction x;
      x.user = user;
      x.book = book.id;
      x.rating = rng.uniform01() < c.p_low_rating ? 1 + static_cast<int>(rng.uniform_index(3))
                                                   : 4 + static_cast<int>(rng.uniform_index(2));
      const bool short_review = rng.uniform01() < c.p_short_review;
      auto words_in_review = filler(short_review ? 4 : c.review_tokens - c.phrase_words, topic_words, general, c.topic_share, rng);
      words_in_review.insert(words_in_review.begin() + static_cast<long>(rng.uniform_index(words_in_review.size() + 1)), phrase);
      x.review = join(words_in_review);
      x.timestamp = clock++;
      out.ac_texts[{user, book.id}] = phrase;
      out.interactions.push_back(std::move(x));
    }
  }
  return out;
}

}  // namespace acrec::synth
