#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "acrec/error.hpp"
#include "acrec/taxonomy.hpp"

namespace fs = std::filesystem;
using namespace acrec;
using namespace acrec::taxonomy;

namespace {

ACStatement statement(const std::string& text, StatementKind kind = StatementKind::A,
                      std::set<std::string> cats = {"Joy"}) {
  ACStatement s;
  s.text = text;
  s.kind = kind;
  s.id = statement_id(text);
  if (kind != StatementKind::C) s.categories = std::move(cats);
  return s;
}

const fs::path kDistribution = fs::path(ACREC_DATA_DIR) / "emotion_distribution.tsv";

}  // namespace

TEST(Wheel, TwentySevenCategories) {
  const auto& w = wheel();
  ASSERT_EQ(w.size(), 27u);
  EXPECT_EQ(w.back().name, "Other");
  EXPECT_TRUE(w.back().is_other);
  std::set<std::string> added;
  for (const auto& c : w) {
    if (c.added) added.insert(c.name);
    if (!c.is_other) {
      EXPECT_EQ(c.intensity_levels.size(), 3u) << c.name;
    }
  }
  EXPECT_EQ(added, (std::set<std::string>{"Hope", "Gratitude", "Contentment", "Relaxation",
                                          "Tension", "Hatred"}));
  ASSERT_NE(find_category("Tension"), nullptr);
  EXPECT_EQ(find_category("Nope"), nullptr);
  EXPECT_EQ(wheel_to_json().at("categories").size(), 27u);
}

TEST(Lexicon, Examples) {
  const auto& lex = Lexicon::builtin();
  EXPECT_EQ(lex.classify("I was terrified by the ending"), (std::set<std::string>{"Fear"}));
  EXPECT_EQ(lex.classify("joyful and surprised"), (std::set<std::string>{"Joy", "Surprise"}));
  EXPECT_EQ(lex.classify("the plot has a map"), (std::set<std::string>{"Other"}));
  EXPECT_EQ(lex.classify("TERRIFIED"), lex.classify("terrified"));
  EXPECT_TRUE(lex.matches("the plot has a map").empty());
  auto e = lex.lookup("terrified");
  ASSERT_TRUE(e);
  EXPECT_EQ(e->category, "Fear");
  EXPECT_EQ(e->level, 2);
}

TEST(Lexicon, EveryIntensityWordMapsBack) {
  const auto& lex = Lexicon::builtin();
  for (const auto& c : wheel()) {
    for (std::size_t level = 0; level < c.intensity_levels.size(); ++level) {
      auto e = lex.lookup(c.intensity_levels[level]);
      ASSERT_TRUE(e) << c.intensity_levels[level];
      EXPECT_EQ(e->category, c.name);
      EXPECT_EQ(e->level, static_cast<int>(level));
    }
  }
}

TEST(Lexicon, Tokens) {
  EXPECT_EQ(lexicon_tokens("Don't STOP, me-now!"), (std::vector<std::string>{"dont", "stop", "me", "now"}));
}

TEST(Classify, CStatementRejected) {
  auto c = statement("The book has 300 pages", StatementKind::C);
  EXPECT_THROW(classify_emotions(c, Lexicon::builtin()), ConfigError);
  auto a = statement("I felt hopeful", StatementKind::A);
  EXPECT_EQ(classify_emotions(a, Lexicon::builtin()), (std::set<std::string>{"Hope"}));
}

TEST(Statements, Validation) {
  EXPECT_NO_THROW(validate(statement("fine")));
  auto bad = statement("x", StatementKind::A, {});
  EXPECT_THROW(validate(bad), DataError);
  auto unknown = statement("x", StatementKind::A, {"Bliss"});
  EXPECT_THROW(validate(unknown), DataError);
  auto c = statement("x", StatementKind::C);
  c.categories = {"Joy"};
  EXPECT_THROW(validate(c), DataError);
}

TEST(Statements, JsonRoundTrip) {
  auto s = statement("warm and hopeful", StatementKind::AC, {"Hope", "Joy"});
  s.facet = "characters";
  s.user = "u1";
  s.book = "b1";
  s.source = StatementSource::llm;
  nlohmann::json j = s;
  EXPECT_EQ(j.get<ACStatement>(), s);
  EXPECT_NE(statement_id("t", "u1", "b1"), statement_id("t", "u2", "b1"));
  EXPECT_EQ(statement_id("t").size(), 3u + 16u);
}

TEST(Repository, ComposeOrderAndIdempotence) {
  StatementRepository repo;
  auto s1 = statement("I felt hopeful");
  auto s2 = statement("It made me laugh");
  repo.add(s1);
  repo.add(s2);
  repo.add(s1);
  EXPECT_EQ(repo.size(), 2u);
  auto a = repo.compose({s1.id, s2.id});
  auto b = repo.compose({s2.id, s1.id, s2.id});
  EXPECT_EQ(a.rendered, b.rendered);
  EXPECT_EQ(a, repo.compose({s1.id, s2.id}));
  const auto& first = s1.id < s2.id ? s1 : s2;
  EXPECT_EQ(a.rendered.substr(0, first.text.size()), first.text);
  EXPECT_THROW(repo.compose({}), DataError);
  EXPECT_THROW(repo.compose({"st-missing"}), NotFoundError);
  EXPECT_EQ(repo.compose({}, "just calm").rendered, "just calm");
}

TEST(Repository, ConflictingReAdd) {
  StatementRepository repo;
  auto s = statement("I felt hopeful");
  repo.add(s);
  auto changed = s;
  changed.text = "different";
  EXPECT_THROW(repo.add(changed), DataError);
}

TEST(Repository, ByCategoryAndIntensity) {
  StatementRepository repo;
  repo.add(statement("I was terrified", StatementKind::A, {"Fear"}));
  repo.add(statement("I felt a little uneasy", StatementKind::A, {"Fear"}));
  repo.add(statement("so happy", StatementKind::A, {"Joy"}));
  EXPECT_EQ(repo.by_category("Fear").size(), 2u);
  auto rim = repo.by_category("Fear", "terrified");
  ASSERT_EQ(rim.size(), 1u);
  EXPECT_EQ(rim[0].text, "I was terrified");
  EXPECT_TRUE(repo.by_category("Tension").empty());
  EXPECT_THROW(repo.by_category("Bliss"), NotFoundError);
  EXPECT_THROW(repo.by_category("Fear", "joyful"), NotFoundError);
}

TEST(Repository, SaveLoad) {
  StatementRepository repo;
  auto s = statement("I felt hopeful");
  s.user = "u";
  s.book = "b";
  repo.add(s);
  repo.add(statement("facts only", StatementKind::C));
  auto path = fs::temp_directory_path() / "acrec_statements.jsonl";
  repo.save(path);
  auto back = StatementRepository::load(path);
  EXPECT_EQ(back.all(), repo.all());
  EXPECT_EQ(back.for_review("u", "b").size(), 1u);
}

TEST(Repository, InvariantCategoriesByKind) {
  auto repo = fixture_repository(load_distribution(kDistribution));
  for (const auto& s : repo.all()) {
    if (s.kind == StatementKind::C) {
      EXPECT_TRUE(s.categories.empty());
    } else {
      EXPECT_FALSE(s.categories.empty());
    }
  }
}

TEST(Distribution, InterestCount) {
  auto dist = load_distribution(kDistribution);
  EXPECT_EQ(dist.size(), 27u);
  auto repo = fixture_repository(dist);
  EXPECT_EQ(repo.by_category("Interest").size(), 3310u);
  EXPECT_EQ(repo.category_counts().at("Interest"), 3310u);
}

TEST(Distribution, RejectsUnknownCategory) {
  auto path = fs::temp_directory_path() / "acrec_bad_dist.tsv";
  {
    std::ofstream out(path);
    out << "category\tcount\nBliss\t3\n";
  }
  EXPECT_THROW(load_distribution(path), DataError);
}

TEST(Audit, HundredRowsSixQuestions) {
  auto repo = fixture_repository(load_distribution(kDistribution));
  Rng rng(1);
  auto sheet = audit_sample(repo.all(), 100, rng);
  ASSERT_EQ(sheet.rows.size(), 100u);
  EXPECT_EQ(AuditWorksheet::questions().size(), 6u);
  std::set<std::string> ids;
  for (const auto& r : sheet.rows) ids.insert(r.statement_id);
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_FALSE(sheet.precision());

  for (std::size_t i = 0; i < sheet.rows.size(); ++i) {
    for (auto& a : sheet.rows[i].answers) a = i % 4 != 0;
  }
  auto back = AuditWorksheet::from_tsv(sheet.to_tsv());
  ASSERT_EQ(back.rows.size(), 100u);
  EXPECT_DOUBLE_EQ(*back.precision(), 0.75);

  Rng small(1);
  EXPECT_THROW(audit_sample({statement("one")}, 2, small), ConfigError);
}
