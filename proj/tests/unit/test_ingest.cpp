#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "acrec/error.hpp"
#include "acrec/ingest.hpp"
#include "acrec/rng.hpp"
#include "acrec/text.hpp"
#include "hand_corpus.hpp"

namespace fs = std::filesystem;
using namespace acrec;
using namespace acrec::ingest;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("acrec_ingest_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

Interaction inter(const std::string& user, const std::string& book, int rating, std::int64_t ts,
                  const std::string& review = "") {
  Interaction x;
  x.user = user;
  x.book = book;
  x.rating = rating;
  x.timestamp = ts;
  x.review = review;
  return x;
}

}  // namespace

TEST(Domain, DanglingReference) {
  std::vector<Book> books = {{"b1", "T", "", ""}};
  auto hist = group_histories({inter("u", "b1", 5, 1), inter("u", "zz", 5, 2)});
  auto report = validate_corpus(books, hist);
  EXPECT_EQ(report.dangling_references.size(), 1u);
  EXPECT_EQ(report.size(), 1u);
  EXPECT_FALSE(report.accepted());
}

TEST(Domain, EmptyCorpus) { EXPECT_TRUE(validate_corpus({}, {}).accepted()); }

TEST(Domain, RatingOutOfRange) {
  std::vector<Book> books = {{"b1", "T", "", ""}};
  auto report = validate_corpus(books, group_histories({inter("u", "b1", 6, 1)}));
  EXPECT_EQ(report.rating_violations.size(), 1u);
  EXPECT_EQ(report.size(), 1u);
}

TEST(Domain, JsonRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Interaction x = inter("u" + std::to_string(rng.uniform_index(100)),
                          "b" + std::to_string(rng.uniform_index(100)),
                          1 + static_cast<int>(rng.uniform_index(5)),
                          static_cast<std::int64_t>(rng.uniform_index(1u << 30)),
                          "review \"quoted\" \xc3\xa9 " + std::to_string(i));
    x.index = static_cast<int>(rng.uniform_index(40));
    nlohmann::json j = x;
    EXPECT_EQ(j.get<Interaction>(), x);

    Book b{"id" + std::to_string(i), "t", "orig\ttext", "ext"};
    nlohmann::json jb = b;
    EXPECT_EQ(jb.get<Book>(), b);

    ReadingHistory h{x.user, {x, x}};
    nlohmann::json jh = h;
    EXPECT_EQ(jh.get<ReadingHistory>(), h);

    EmbeddingVector v;
    for (int k = 0; k < 8; ++k) v.values.push_back(static_cast<float>(rng.normal()));
    nlohmann::json jv = v;
    EXPECT_EQ(jv.get<EmbeddingVector>(), v);
  }
}

TEST(Domain, AcDescriptionOrderAndIdempotence) {
  auto a = render_ac_description("calm", {{"st-b", "second"}, {"st-a", "first"}, {"st-b", "second"}});
  EXPECT_EQ(a.rendered, "calm first second");
  EXPECT_EQ(a.statement_ids, (std::vector<std::string>{"st-a", "st-b"}));
  auto again = render_ac_description("calm", {{"st-a", "first"}, {"st-b", "second"}});
  EXPECT_EQ(a, again);
  nlohmann::json j = a;
  EXPECT_EQ(j.get<ACDescription>(), a);
  EXPECT_THROW(render_ac_description(std::nullopt, {}), DataError);
}

TEST(Ingest, LoadSortsHistory) {
  auto dir = scratch("sort");
  write_lines(dir / "books.jsonl", {R"({"id":"b1","title":"A","description":"x"})",
                                    R"({"id":"b2","title":"B","description":"y"})"});
  write_lines(dir / "inter.jsonl",
              {R"({"user_id":"u","book_id":"b1","rating":5,"review":"late","timestamp":20})",
               R"({"user_id":"u","book_id":"b2","rating":4,"review":"early","timestamp":10})"});
  auto corpus = load_corpus(dir / "books.jsonl", dir / "inter.jsonl");
  ASSERT_EQ(corpus.histories.size(), 1u);
  const auto& h = corpus.histories[0].interactions;
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].book, "b2");
  EXPECT_EQ(h[0].index, 0);
  EXPECT_EQ(h[1].book, "b1");
  EXPECT_EQ(h[1].index, 1);
}

TEST(Ingest, MissingBookNamed) {
  auto dir = scratch("missing");
  write_lines(dir / "books.jsonl", {R"({"id":"b1","title":"A","description":"x"})"});
  write_lines(dir / "inter.jsonl",
              {R"({"user_id":"u","book_id":"ghost-book","rating":5,"review":"r","timestamp":1})"});
  try {
    load_corpus(dir / "books.jsonl", dir / "inter.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost-book"), std::string::npos);
  }
}

TEST(Ingest, ParseErrorHasLineNumber) {
  auto dir = scratch("parse");
  write_lines(dir / "books.jsonl", {R"({"id":"b1","title":"A","description":"x"})", "{not json"});
  write_lines(dir / "inter.jsonl", {});
  try {
    load_corpus(dir / "books.jsonl", dir / "inter.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, EmptyFiles) {
  auto dir = scratch("empty");
  write_lines(dir / "books.jsonl", {});
  write_lines(dir / "inter.jsonl", {});
  auto corpus = load_corpus(dir / "books.jsonl", dir / "inter.jsonl");
  EXPECT_TRUE(corpus.books.empty());
  EXPECT_TRUE(corpus.histories.empty());
}

namespace {

std::vector<ReadingHistory> histories_with_lengths(const std::vector<int>& lengths) {
  std::vector<Interaction> all;
  for (std::size_t u = 0; u < lengths.size(); ++u) {
    for (int t = 0; t < lengths[u]; ++t) {
      all.push_back(inter("user" + std::to_string(u), "b", 5, t));
    }
  }
  return group_histories(all);
}

}  // namespace

TEST(Bands, FullBandsGiveThousand) {
  std::vector<int> lengths;
  for (int band = 0; band < 10; ++band) {
    const int lo = band == 0 ? 20 : 50 * band + 1;
    for (int i = 0; i < 120; ++i) lengths.push_back(lo + i % 30);
  }
  auto hist = histories_with_lengths(lengths);
  auto sel = sample_users_by_band(hist, {}, 9);
  EXPECT_EQ(sel.users.size(), 1000u);
  EXPECT_TRUE(sel.warnings.empty());
}

TEST(Bands, UnderfullBandWarns) {
  auto hist = histories_with_lengths({25, 30, 45, 10, 600});
  auto sel = sample_users_by_band(hist, {}, 1);
  EXPECT_EQ(sel.users.size(), 3u);
  EXPECT_FALSE(sel.warnings.empty());
}

TEST(Bands, Deterministic) {
  std::vector<int> lengths;
  for (int i = 0; i < 400; ++i) lengths.push_back(20 + i % 480);
  auto hist = histories_with_lengths(lengths);
  EXPECT_EQ(sample_users_by_band(hist, {}, 3).users, sample_users_by_band(hist, {}, 3).users);
  EXPECT_NE(sample_users_by_band(hist, {}, 3).users, sample_users_by_band(hist, {}, 4).users);
}

TEST(Extended, ExcludedOnly) {
  std::vector<Book> books = {{"b", "T", "", ""}};
  auto hist = group_histories({inter("x", "b", 5, 1, "secret words")});
  auto ext = build_extended_descriptions(books, hist, {"x"});
  EXPECT_EQ(ext.at("b"), "");
}

TEST(Extended, OrderByTimestampThenUser) {
  std::vector<Book> books = {{"b", "T", "", ""}};
  auto hist = group_histories({inter("v", "b", 5, 2, "B"), inter("w", "b", 5, 1, "A"),
                               inter("a", "b", 5, 2, "Z")});
  auto ext = build_extended_descriptions(books, hist, {});
  EXPECT_EQ(ext.at("b"), "A Z B");
}

TEST(Extended, TruncatesAndExcludesDatasetReviews) {
  std::vector<Book> books = {{"b", "T", "", ""}};
  auto hist = group_histories({inter("out", "b", 5, 1, fixture::words("o", 30)),
                               inter("ds", "b", 5, 2, "dataset-only-phrase here")});
  auto ext = build_extended_descriptions(books, hist, {"ds"}, 10);
  EXPECT_EQ(text::count_tokens(ext.at("b")), 10u);
  EXPECT_EQ(ext.at("b").find("dataset-only-phrase"), std::string::npos);
}

TEST(Useful, Thresholds) {
  Book book{"b", "T", fixture::words("d", 200), fixture::words("e", 100)};
  auto x = inter("u", "b", 5, 0, fixture::words("r", 25));
  EXPECT_TRUE(is_useful_step(x, book));
  x.rating = 3;
  EXPECT_FALSE(is_useful_step(x, book));
  x.rating = 4;
  x.review = fixture::words("r", 19);
  EXPECT_FALSE(is_useful_step(x, book));
  x.review = fixture::words("r", 20);
  EXPECT_TRUE(is_useful_step(x, book));
  book.extended_description = fixture::words("e", 49);
  EXPECT_FALSE(is_useful_step(x, book));
}

TEST(EvenSpread, FortyToTwenty) {
  auto pos = even_spread_positions(40, 20);
  ASSERT_EQ(pos.size(), 20u);
  EXPECT_EQ(pos.front(), 0u);
  EXPECT_EQ(pos.back(), 39u);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    EXPECT_EQ(pos[i], static_cast<std::size_t>(std::floor(i * 39.0 / 19.0 + 0.5)));
  }
  // 39/19 is just above 2, so consecutive kept positions differ by 2 or 3.
  for (std::size_t i = 1; i < pos.size(); ++i) {
    EXPECT_GE(pos[i] - pos[i - 1], 2u);
    EXPECT_LE(pos[i] - pos[i - 1], 3u);
  }
}

TEST(EvenSpread, UnderLimit) {
  EXPECT_EQ(even_spread_positions(7, 20), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_TRUE(even_spread_positions(0, 20).empty());
}

TEST(EvenSpread, PropertySubsequence) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> useful;
    int t = 0;
    const int n = static_cast<int>(rng.uniform_index(80));
    for (int i = 0; i < n; ++i) {
      t += 1 + static_cast<int>(rng.uniform_index(3));
      useful.push_back(t);
    }
    auto kept = select_step_indices(useful, 15, 20);
    EXPECT_LE(kept.size(), 20u);
    std::size_t j = 0;
    for (int k : kept) {
      EXPECT_GE(k, 15);
      while (j < useful.size() && useful[j] != k) ++j;
      ASSERT_LT(j, useful.size()) << "not a subsequence";
      ++j;
    }
  }
}

TEST(EvenSpread, BurnIn) {
  const std::vector<int> useful = {14, 15, 30};
  EXPECT_EQ(select_step_indices(useful), (std::vector<int>{15, 30}));
}

TEST(Splits, Rule) {
  std::vector<UsefulStep> steps;
  for (int t : {18, 25, 40, 52}) steps.push_back({"u", t, "b", "", 5, Split::train});
  make_splits(steps);
  EXPECT_EQ(steps[0].split, Split::train);
  EXPECT_EQ(steps[1].split, Split::train);
  EXPECT_EQ(steps[2].split, Split::validation);
  EXPECT_EQ(steps[3].split, Split::test);

  std::vector<UsefulStep> one = {{"u", 20, "b", "", 5, Split::train}};
  make_splits(one);
  EXPECT_EQ(one[0].split, Split::test);
}

namespace {

std::map<UserId, fixture::HandExpectation> observed(const std::vector<UsefulStep>& steps) {
  std::map<UserId, fixture::HandExpectation> out;
  for (const auto& s : steps) {
    auto& e = out[s.user];
    switch (s.split) {
      case Split::burn_in: e.burn_in.push_back(s.step_index); break;
      case Split::skipped: e.skipped.push_back(s.step_index); break;
      case Split::train: e.train.push_back(s.step_index); break;
      case Split::validation: e.validation = s.step_index; break;
      case Split::test: e.test = s.step_index; break;
    }
  }
  return out;
}

}  // namespace

TEST(HandCorpus, TracedLabels) {
  auto dir = scratch("hand");
  fixture::write_hand_corpus(fixture::hand_corpus(), dir);
  auto corpus = load_corpus(dir / "books.jsonl", dir / "interactions.jsonl");
  auto result = run_ingest(std::move(corpus), {});
  EXPECT_EQ(result.dataset_users, (std::vector<UserId>{"u1", "u2", "u3"}));

  const auto got = observed(result.steps);
  const auto want = fixture::hand_expectation();
  for (int u = 0; u < 3; ++u) {
    const auto& g = got.at(fixture::hand_user(u));
    EXPECT_EQ(g.burn_in, want[u].burn_in) << "user " << u;
    EXPECT_EQ(g.skipped, want[u].skipped) << "user " << u;
    EXPECT_EQ(g.train, want[u].train) << "user " << u;
    EXPECT_EQ(g.validation, want[u].validation) << "user " << u;
    EXPECT_EQ(g.test, want[u].test) << "user " << u;
  }
  EXPECT_EQ(result.stats.n_test, 3u);
  EXPECT_EQ(result.stats.n_validation, 3u);
  EXPECT_EQ(result.stats.users_without_train, (std::vector<UserId>{"u3"}));
}

TEST(HandCorpus, SplitsFileRoundTrip) {
  auto dir = scratch("hand_dir");
  fixture::write_hand_corpus(fixture::hand_corpus(), dir / "in");
  auto result = run_ingest(load_corpus(dir / "in" / "books.jsonl", dir / "in" / "interactions.jsonl"), {});
  write_corpus_dir(dir / "out", result, "sha256:test");
  auto back = read_corpus_dir(dir / "out");
  EXPECT_EQ(back.steps, result.steps);
  EXPECT_EQ(back.corpus.books, result.corpus.books);
}

TEST(IngestProperty, RandomCorporaRespectThresholds) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Book> books;
    for (int b = 0; b < 80; ++b) {
      books.push_back({"b" + std::to_string(b), "T",
                       fixture::words("d", 150 + static_cast<int>(rng.uniform_index(200))), ""});
    }
    std::vector<Interaction> all;
    for (int u = 0; u < 12; ++u) {
      const int n = 20 + static_cast<int>(rng.uniform_index(40));
      for (int t = 0; t < n; ++t) {
        all.push_back(inter("u" + std::to_string(u), "b" + std::to_string(rng.uniform_index(80)),
                            1 + static_cast<int>(rng.uniform_index(5)), t,
                            fixture::words("w", 10 + static_cast<int>(rng.uniform_index(20)))));
      }
    }
    Corpus corpus{books, group_histories(all)};
    auto result = run_ingest(corpus, {});
    std::map<UserId, std::vector<const UsefulStep*>> per_user;
    for (const auto& s : result.steps) {
      EXPECT_GE(s.rating, 4);
      EXPECT_GE(text::count_tokens(s.review), 20u);
      const Book* b = result.corpus.find_book(s.positive_book);
      ASSERT_NE(b, nullptr);
      EXPECT_GE(text::count_tokens(b->original_description) +
                    text::count_tokens(b->extended_description),
                250u);
      if (s.split == Split::train || s.split == Split::validation || s.split == Split::test) {
        EXPECT_GE(s.step_index, 15);
        per_user[s.user].push_back(&s);
      }
    }
    for (const auto& [user, steps] : per_user) {
      int test = -1, val = -1, max_train = -1;
      for (const auto* s : steps) {
        if (s->split == Split::test) test = s->step_index;
        if (s->split == Split::validation) val = s->step_index;
        if (s->split == Split::train) max_train = std::max(max_train, s->step_index);
      }
      EXPECT_LE(steps.size(), 20u);
      EXPECT_GE(test, 0);
      if (val >= 0) {
        EXPECT_GT(test, val);
      }
      if (max_train >= 0) {
        EXPECT_GT(val, max_train);
      }
    }
  }
}
