#include "acrec/domain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "acrec/error.hpp"
#include "acrec/text.hpp"

namespace acrec {

std::set<BookId> ReadingHistory::consumed() const {
  std::set<BookId> out;
  for (const auto& x : interactions) out.insert(x.book);
  return out;
}

std::set<BookId> ReadingHistory::consumed_before(int step_index) const {
  std::set<BookId> out;
  for (const auto& x : interactions) {
    if (x.index < step_index) out.insert(x.book);
  }
  return out;
}

ACDescription render_ac_description(const std::optional<std::string>& free_text,
                                    std::vector<std::pair<std::string, std::string>> statements) {
  std::sort(statements.begin(), statements.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  statements.erase(std::unique(statements.begin(), statements.end(),
                               [](const auto& a, const auto& b) { return a.first == b.first; }),
                   statements.end());

  ACDescription ac;
  std::string rendered;
  if (free_text) {
    ac.free_text = free_text;
    rendered = text::trim(*free_text);
  }
  for (const auto& [id, body] : statements) {
    ac.statement_ids.push_back(id);
    const std::string t = text::trim(body);
    if (t.empty()) continue;
    if (!rendered.empty()) rendered.push_back(' ');
    rendered += t;
  }
  if (rendered.empty()) throw DataError("AC description is empty");
  ac.rendered = std::move(rendered);
  return ac;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::burn_in: return "burn_in";
    case Split::skipped: return "skipped";
  }
  return "skipped";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  if (s == "burn_in") return Split::burn_in;
  if (s == "skipped") return Split::skipped;
  throw DataError("unknown split label '" + std::string(s) + "'");
}

bool EmbeddingVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  auto section = [&](const char* name, const std::vector<std::string>& items) {
    for (const auto& s : items) os << name << ": " << s << '\n';
  };
  section("duplicate book", duplicate_books);
  section("dangling reference", dangling_references);
  section("rating out of range", rating_violations);
  section("timestamp order", order_violations);
  return os.str();
}

ValidationReport validate_corpus(const std::vector<Book>& books,
                                 const std::vector<ReadingHistory>& histories) {
  ValidationReport report;
  std::unordered_set<std::string> ids;
  for (const auto& b : books) {
    if (!ids.insert(b.id).second) report.duplicate_books.push_back(b.id);
  }
  for (const auto& h : histories) {
    for (std::size_t i = 0; i < h.interactions.size(); ++i) {
      const auto& x = h.interactions[i];
      const std::string where = "user " + h.user + " step " + std::to_string(i);
      if (!ids.contains(x.book)) {
        report.dangling_references.push_back(where + " references unknown book " + x.book);
      }
      if (x.rating < 1 || x.rating > 5) {
        report.rating_violations.push_back(where + " has rating " + std::to_string(x.rating));
      }
      if (i > 0 && x.timestamp < h.interactions[i - 1].timestamp) {
        report.order_violations.push_back(where + " precedes its predecessor");
      }
    }
  }
  return report;
}

void to_json(nlohmann::json& j, const Book& b) {
  j = {{"id", b.id}, {"title", b.title}, {"description", b.original_description}};
  if (!b.extended_description.empty()) j["extended_description"] = b.extended_description;
}

void from_json(const nlohmann::json& j, Book& b) {
  b.id = j.at("id").get<std::string>();
  b.title = j.value("title", "");
  b.original_description = j.value("description", "");
  b.extended_description = j.value("extended_description", "");
}

void to_json(nlohmann::json& j, const Interaction& x) {
  j = {{"user_id", x.user}, {"book_id", x.book},     {"rating", x.rating},
       {"review", x.review}, {"timestamp", x.timestamp}, {"index", x.index}};
}

void from_json(const nlohmann::json& j, Interaction& x) {
  x.user = j.at("user_id").get<std::string>();
  x.book = j.at("book_id").get<std::string>();
  x.rating = j.at("rating").get<int>();
  x.review = j.value("review", "");
  x.timestamp = j.at("timestamp").get<std::int64_t>();
  x.index = j.value("index", 0);
}

void to_json(nlohmann::json& j, const ReadingHistory& h) {
  j = {{"user_id", h.user}, {"interactions", h.interactions}};
}

void from_json(const nlohmann::json& j, ReadingHistory& h) {
  h.user = j.at("user_id").get<std::string>();
  h.interactions = j.at("interactions").get<std::vector<Interaction>>();
}

void to_json(nlohmann::json& j, const ACDescription& a) {
  j = {{"statement_ids", a.statement_ids}, {"rendered", a.rendered}};
  j["free_text"] = a.free_text ? nlohmann::json(*a.free_text) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ACDescription& a) {
  a.free_text.reset();
  if (j.contains("free_text") && !j.at("free_text").is_null()) {
    a.free_text = j.at("free_text").get<std::string>();
  }
  a.statement_ids = j.value("statement_ids", std::vector<std::string>{});
  a.rendered = j.at("rendered").get<std::string>();
}

void to_json(nlohmann::json& j, const EmbeddingVector& v) { j = v.values; }
void from_json(const nlohmann::json& j, EmbeddingVector& v) { v.values = j.get<std::vector<float>>(); }

}  // namespace acrec
