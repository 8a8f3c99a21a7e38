#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/ingest.hpp"

namespace acrec::fixture {

inline std::string words(const std::string& stem, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += stem + std::to_string(i);
  }
  return out;
}

struct HandStep {
  int rating = 5;
  int review_tokens = 25;
  bool short_book = false;
};

// Three users traced by hand:
//   u1: 30 steps, all useful except 20 (rating 3), 22 (19-token review) and
//       24 (book description under 250 tokens).
//   u2: 60 steps, all useful.
//   u3: 22 steps, useful only at 3, 18 and 21.
inline std::vector<std::vector<HandStep>> hand_plan() {
  std::vector<std::vector<HandStep>> plan(3);
  plan[0].resize(30);
  plan[0][20].rating = 3;
  plan[0][22].review_tokens = 19;
  plan[0][24].short_book = true;
  plan[1].resize(60);
  plan[2].resize(22);
  for (int t = 0; t < 22; ++t) {
    if (t != 3 && t != 18 && t != 21) plan[2][t].rating = 2;
  }
  return plan;
}

inline std::string hand_user(int u) { return "u" + std::to_string(u + 1); }

inline std::string hand_book(int u, int t, bool short_book) {
  return (short_book ? "s-" : "b-") + std::to_string(u + 1) + "-" + (t < 10 ? "0" : "") +
         std::to_string(t);
}

struct HandCorpus {
  std::vector<Book> books;
  std::vector<Interaction> interactions;  // shuffled input order
};

inline HandCorpus hand_corpus() {
  HandCorpus hc;
  const auto plan = hand_plan();
  for (int u = 0; u < 3; ++u) {
    for (int t = 0; t < static_cast<int>(plan[u].size()); ++t) {
      const auto& s = plan[u][t];
      Book b;
      b.id = hand_book(u, t, s.short_book);
      b.title = "Title " + b.id;
      b.original_description = words("d", s.short_book ? 40 : 260);
      hc.books.push_back(b);
      Interaction x;
      x.user = hand_user(u);
      x.book = b.id;
      x.rating = s.rating;
      x.review = words("r" + std::to_string(t) + "w", s.review_tokens);
      x.timestamp = 1000 + 100 * t;
      hc.interactions.push_back(x);
    }
  }
  std::reverse(hc.interactions.begin(), hc.interactions.end());
  return hc;
}

inline void write_hand_corpus(const HandCorpus& hc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream books(dir / "books.jsonl");
  for (const auto& b : hc.books) {
    books << nlohmann::json{{"id", b.id}, {"title", b.title}, {"description", b.original_description}}
                 .dump()
          << "\n";
  }
  std::ofstream inter(dir / "interactions.jsonl");
  for (const auto& x : hc.interactions) {
    inter << nlohmann::json{{"user_id", x.user},
                            {"book_id", x.book},
                            {"rating", x.rating},
                            {"review", x.review},
                            {"timestamp", x.timestamp}}
                 .dump()
          << "\n";
  }
}

// Expected labels, traced by hand from the plan above.
struct HandExpectation {
  std::vector<int> burn_in, skipped, train;
  int validation = -1;
  int test = -1;
};

inline std::vector<HandExpectation> hand_expectation() {
  std::vector<HandExpectation> e(3);
  for (int t = 0; t < 15; ++t) e[0].burn_in.push_back(t);
  e[0].train = {15, 16, 17, 18, 19, 21, 23, 25, 26, 27};
  e[0].validation = 28;
  e[0].test = 29;

  for (int t = 0; t < 15; ++t) e[1].burn_in.push_back(t);
  const std::vector<int> kept = {15, 17, 20, 22, 24, 27, 29, 31, 34, 36,
                                 38, 40, 43, 45, 47, 50, 52, 54, 57, 59};
  e[1].train.assign(kept.begin(), kept.end() - 2);
  e[1].validation = 57;
  e[1].test = 59;
  for (int t = 15; t < 60; ++t) {
    if (std::find(kept.begin(), kept.end(), t) == kept.end()) e[1].skipped.push_back(t);
  }

  e[2].burn_in = {3};
  e[2].validation = 18;
  e[2].test = 21;
  return e;
}

}  // namespace acrec::fixture
