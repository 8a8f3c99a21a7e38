#include "acrec/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "acrec/error.hpp"
#include "acrec/io.hpp"
#include "acrec/rng.hpp"
#include "acrec/text.hpp"

namespace acrec::ingest {

const Book* Corpus::find_book(const BookId& id) const {
  for (const auto& b : books) {
    if (b.id == id) return &b;
  }
  return nullptr;
}

const ReadingHistory* Corpus::find_history(const UserId& user) const {
  auto it = std::lower_bound(histories.begin(), histories.end(), user,
                             [](const ReadingHistory& h, const UserId& u) { return h.user < u; });
  return it != histories.end() && it->user == user ? &*it : nullptr;
}

std::vector<Book> read_books(const std::filesystem::path& path) {
  std::vector<Book> books;
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    books.push_back(j.get<Book>());
    if (books.back().id.empty()) throw DataError("book id is empty");
  });
  return books;
}

std::vector<Interaction> read_interactions(const std::filesystem::path& path) {
  std::vector<Interaction> out;
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    Interaction x = j.get<Interaction>();
    if (x.rating < 1 || x.rating > 5) {
      throw DataError("rating " + std::to_string(x.rating) + " outside [1,5]");
    }
    out.push_back(std::move(x));
  });
  return out;
}

std::vector<ReadingHistory> group_histories(std::vector<Interaction> interactions) {
  std::stable_sort(interactions.begin(), interactions.end(),
                   [](const Interaction& a, const Interaction& b) {
                     return std::tie(a.user, a.timestamp) < std::tie(b.user, b.timestamp);
                   });
  std::vector<ReadingHistory> histories;
  for (auto& x : interactions) {
    if (histories.empty() || histories.back().user != x.user) {
      histories.push_back(ReadingHistory{x.user, {}});
    }
    x.index = static_cast<int>(histories.back().interactions.size());
    histories.back().interactions.push_back(std::move(x));
  }
  return histories;
}

Corpus load_corpus(const std::filesystem::path& books_path,
                   const std::filesystem::path& interactions_path) {
  Corpus corpus;
  corpus.books = read_books(books_path);
  corpus.histories = group_histories(read_interactions(interactions_path));
  const auto report = validate_corpus(corpus.books, corpus.histories);
  if (!report.accepted()) throw DataError("corpus validation failed:\n" + report.summary());
  return corpus;
}

BandSelection sample_users_by_band(const std::vector<ReadingHistory>& histories,
                                   const BandConfig& config, std::uint64_t seed) {
  if (config.band_width <= 0 || config.per_band < 0 || config.min_books > config.max_books) {
    throw ConfigError("invalid band configuration");
  }
  BandSelection out;
  Rng rng(seed);
  for (int band = 0;; ++band) {
    const int upper = (band + 1) * config.band_width;
    const int lower = band == 0 ? config.min_books : band * config.band_width + 1;
    if (lower > config.max_books) break;
    const int hi = std::min(upper, config.max_books);
    if (hi < lower) continue;
    std::vector<UserId> eligible;
    for (const auto& h : histories) {
      const int n = static_cast<int>(h.interactions.size());
      if (n >= lower && n <= hi) eligible.push_back(h.user);
    }
    std::sort(eligible.begin(), eligible.end());
    rng.shuffle(std::span<UserId>(eligible));
    const auto take = std::min<std::size_t>(eligible.size(), static_cast<std::size_t>(config.per_band));
    if (take < static_cast<std::size_t>(config.per_band)) {
      out.warnings.push_back("band [" + std::to_string(lower) + "-" + std::to_string(hi) +
                             "] has only " + std::to_string(eligible.size()) + " eligible users");
    }
    out.users.insert(out.users.end(), eligible.begin(), eligible.begin() + static_cast<long>(take));
    if (hi >= config.max_books) break;
  }
  return out;
}

std::map<BookId, std::string> build_extended_descriptions(
    const std::vector<Book>& books, const std::vector<ReadingHistory>& histories,
    const std::set<UserId>& excluded_users, std::size_t max_tokens) {
  struct Review {
    std::int64_t timestamp;
    const UserId* user;
    const std::string* text;
  };
  std::map<BookId, std::vector<Review>> by_book;
  for (const auto& b : books) by_book[b.id];
  for (const auto& h : histories) {
    if (excluded_users.contains(h.user)) continue;
    for (const auto& x : h.interactions) {
      if (text::count_tokens(x.review) == 0) continue;
      auto it = by_book.find(x.book);
      if (it != by_book.end()) it->second.push_back({x.timestamp, &h.user, &x.review});
    }
  }
  std::map<BookId, std::string> out;
  for (auto& [id, reviews] : by_book) {
    std::stable_sort(reviews.begin(), reviews.end(), [](const Review& a, const Review& b) {
      return std::tie(a.timestamp, *a.user) < std::tie(b.timestamp, *b.user);
    });
    std::string joined;
    for (const auto& r : reviews) {
      if (!joined.empty()) joined.push_back(' ');
      joined += text::trim(*r.text);
    }
    out[id] = text::truncate_tokens(joined, max_tokens);
  }
  return out;
}

bool is_useful_step(const Interaction& interaction, const Book& book,
                    const UsefulStepThresholds& thresholds) {
  if (interaction.rating < thresholds.min_rating) return false;
  if (text::count_tokens(interaction.review) < thresholds.min_review_tokens) return false;
  const std::size_t desc = text::count_tokens(book.original_description) +
                           text::count_tokens(book.extended_description);
  return desc >= thresholds.min_description_tokens;
}

std::vector<std::size_t> even_spread_positions(std::size_t n, std::size_t max_steps) {
  std::vector<std::size_t> out;
  if (n == 0 || max_steps == 0) return out;
  if (n <= max_steps) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  if (max_steps == 1) return {n - 1};
  for (std::size_t i = 0; i < max_steps; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(n - 1) /
                       static_cast<double>(max_steps - 1);
    const auto p = static_cast<std::size_t>(std::lround(pos));
    if (out.empty() || out.back() != p) out.push_back(p);
  }
  return out;
}

std::vector<int> select_step_indices(std::span<const int> useful_indices, int burn_in,
                                     std::size_t max_steps) {
  std::vector<int> candidates;
  for (int idx : useful_indices) {
    if (idx >= burn_in) candidates.push_back(idx);
  }
  std::vector<int> out;
  for (std::size_t p : even_spread_positions(candidates.size(), max_steps)) {
    out.push_back(candidates[p]);
  }
  return out;
}

std::vector<UsefulStep> label_useful_steps(const ReadingHistory& history,
                                           const std::map<BookId, const Book*>& books,
                                           const UsefulStepThresholds& thresholds, int burn_in,
                                           std::size_t max_steps) {
  std::vector<UsefulStep> steps;
  std::vector<std::size_t> candidate_pos;
  for (const auto& x : history.interactions) {
    auto it = books.find(x.book);
    if (it == books.end()) throw DataError("unknown book " + x.book);
    if (!is_useful_step(x, *it->second, thresholds)) continue;
    const Split label = x.index < burn_in ? Split::burn_in : Split::skipped;
    if (label == Split::skipped) candidate_pos.push_back(steps.size());
    steps.push_back(UsefulStep{history.user, x.index, x.book, x.review, x.rating, label});
  }
  for (std::size_t p : even_spread_positions(candidate_pos.size(), max_steps)) {
    steps[candidate_pos[p]].split = Split::train;
  }
  return steps;
}

std::vector<UsefulStep> select_useful_steps(const ReadingHistory& history,
                                            const std::map<BookId, const Book*>& books,
                                            const UsefulStepThresholds& thresholds, int burn_in,
                                            std::size_t max_steps) {
  auto all = label_useful_steps(history, books, thresholds, burn_in, max_steps);
  std::vector<UsefulStep> out;
  for (auto& s : all) {
    if (s.split == Split::train) out.push_back(std::move(s));
  }
  return out;
}

void make_splits(std::vector<UsefulStep>& user_steps) {
  const std::size_t n = user_steps.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 == n) {
      user_steps[i].split = Split::test;
    } else if (i + 2 == n) {
      user_steps[i].split = Split::validation;
    } else {
      user_steps[i].split = Split::train;
    }
  }
}

IngestResult run_ingest(Corpus corpus, const IngestConfig& config) {
  IngestResult result;
  auto selection = sample_users_by_band(corpus.histories, config.bands, config.seed);
  result.warnings = std::move(selection.warnings);
  result.dataset_users = selection.users;
  std::sort(result.dataset_users.begin(), result.dataset_users.end());

  const std::set<UserId> excluded(result.dataset_users.begin(), result.dataset_users.end());
  auto extended = build_extended_descriptions(corpus.books, corpus.histories, excluded,
                                              config.max_extended_tokens);
  for (auto& b : corpus.books) b.extended_description = std::move(extended[b.id]);

  std::map<BookId, const Book*> by_id;
  for (const auto& b : corpus.books) by_id[b.id] = &b;

  auto& stats = result.stats;
  stats.n_books = corpus.books.size();
  for (const auto& user : result.dataset_users) {
    const auto* history = corpus.find_history(user);
    ++stats.n_users;
    stats.n_steps += history->interactions.size();
    auto labelled = label_useful_steps(*history, by_id, config.thresholds, config.burn_in,
                                       config.max_steps);
    std::vector<UsefulStep*> chosen;
    for (auto& s : labelled) {
      if (s.split == Split::train) chosen.push_back(&s);
    }
    std::vector<UsefulStep> chosen_copy;
    for (auto* s : chosen) chosen_copy.push_back(*s);
    make_splits(chosen_copy);
    for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i]->split = chosen_copy[i].split;
    if (!chosen.empty() && chosen.size() < 3) stats.users_without_train.push_back(user);

    for (auto& s : labelled) {
      switch (s.split) {
        case Split::train: ++stats.n_train; break;
        case Split::validation: ++stats.n_validation; break;
        case Split::test: ++stats.n_test; break;
        case Split::burn_in: ++stats.n_burn_in; break;
        case Split::skipped: ++stats.n_skipped; break;
      }
      result.steps.push_back(std::move(s));
    }
  }
  stats.n_useful = stats.n_train + stats.n_validation + stats.n_test;
  result.corpus = std::move(corpus);
  return result;
}

nlohmann::json to_json(const IngestConfig& c) {
  return {{"band_width", c.bands.band_width},
          {"min_books", c.bands.min_books},
          {"max_books", c.bands.max_books},
          {"per_band", c.bands.per_band},
          {"min_rating", c.thresholds.min_rating},
          {"min_review_tokens", c.thresholds.min_review_tokens},
          {"min_description_tokens", c.thresholds.min_description_tokens},
          {"burn_in", c.burn_in},
          {"max_steps", c.max_steps},
          {"max_extended_tokens", c.max_extended_tokens},
          {"seed", c.seed}};
}

nlohmann::json to_json(const CorpusStats& s) {
  return {{"n_users", s.n_users},         {"n_steps", s.n_steps},
          {"n_books", s.n_books},         {"n_useful", s.n_useful},
          {"n_train", s.n_train},         {"n_validation", s.n_validation},
          {"n_test", s.n_test},           {"n_burn_in", s.n_burn_in},
          {"n_skipped", s.n_skipped},     {"users_without_train", s.users_without_train}};
}

void write_splits(const std::filesystem::path& path, const std::vector<UsefulStep>& steps) {
  std::vector<nlohmann::json> records;
  records.reserve(steps.size());
  for (const auto& s : steps) {
    records.push_back({{"user_id", s.user},
                       {"step_index", s.step_index},
                       {"book_id", s.positive_book},
                       {"split", std::string(to_string(s.split))}});
  }
  io::write_jsonl(path, records);
}

std::vector<UsefulStep> read_splits(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<UsefulStep> steps;
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    UsefulStep s;
    s.user = j.at("user_id").get<std::string>();
    s.step_index = j.at("step_index").get<int>();
    s.positive_book = j.at("book_id").get<std::string>();
    s.split = split_from_string(j.at("split").get<std::string>());
    const auto* h = corpus.find_history(s.user);
    if (!h || s.step_index < 0 || s.step_index >= static_cast<int>(h->interactions.size())) {
      throw DataError("split references unknown step " + s.user + "@" + std::to_string(s.step_index));
    }
    const auto& x = h->interactions[static_cast<std::size_t>(s.step_index)];
    if (x.book != s.positive_book) {
      throw DataError("split book " + s.positive_book + " does not match history");
    }
    s.review = x.review;
    s.rating = x.rating;
    steps.push_back(std::move(s));
  });
  return steps;
}

void write_corpus_dir(const std::filesystem::path& dir, const IngestResult& result,
                      const std::string& config_digest) {
  std::filesystem::create_directories(dir);
  std::vector<nlohmann::json> books;
  for (const auto& b : result.corpus.books) books.push_back(b);
  io::write_jsonl(dir / "books.jsonl", books);
  std::vector<nlohmann::json> interactions;
  for (const auto& h : result.corpus.histories) {
    for (const auto& x : h.interactions) interactions.push_back(x);
  }
  io::write_jsonl(dir / "interactions.jsonl", interactions);
  write_splits(dir / "splits.jsonl", result.steps);
  nlohmann::json stats = to_json(result.stats);
  stats["config_digest"] = config_digest;
  stats["dataset_users"] = result.dataset_users;
  stats["warnings"] = result.warnings;
  io::write_json(dir / "stats.json", stats);
}

CorpusDir read_corpus_dir(const std::filesystem::path& dir) {
  CorpusDir out;
  out.corpus = load_corpus(dir / "books.jsonl", dir / "interactions.jsonl");
  out.steps = read_splits(dir / "splits.jsonl", out.corpus);
  return out;
}

}  // namespace acrec::ingest
