#include "acrec/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <sstream>

#include "acrec/digest.hpp"
#include "acrec/error.hpp"
#include "acrec/io.hpp"
#include "acrec/text.hpp"

namespace acrec::taxonomy {

namespace {

struct CategorySpec {
  const char* name;
  Valence valence;
  Control control;
  bool added;
  // Per intensity level (center -> rim): the wheel word first, then synonyms.
  std::vector<std::vector<const char*>> levels;
};

using V = Valence;
using C = Control;

const std::vector<CategorySpec>& specs() {
  static const std::vector<CategorySpec> s = {
      {"Interest", V::positive, C::high, false,
       {{"curious", "intrigued", "interesting", "intriguing"},
        {"interested", "engaging", "engaged", "compelling", "gripping", "hooked"},
        {"fascinated", "fascinating", "captivated", "captivating", "engrossed", "riveted"}}},
      {"Amusement", V::positive, C::high, false,
       {{"amused", "funny", "witty", "humorous", "smile", "smiled"},
        {"entertained", "entertaining", "laugh", "laughed", "laughing"},
        {"hilarious", "hysterical"}}},
      {"Pride", V::positive, C::high, false,
       {{"proud", "pride"}, {"accomplished"}, {"triumphant", "triumph"}}},
      {"Joy", V::positive, C::high, false,
       {{"glad", "cheerful", "uplifted", "uplifting"},
        {"happy", "happiness"},
        {"joyful", "joy", "elated", "ecstatic", "euphoric"}}},
      {"Pleasure", V::positive, C::high, false,
       {{"pleased", "pleasant", "pleasure"},
        {"enjoyed", "enjoy", "enjoyable", "enjoying"},
        {"delighted", "delightful", "thrilled", "thrilling"}}},
      {"Hope", V::positive, C::high, true,
       {{"hopeful", "hope", "hoping"}, {"optimistic"}, {"inspired", "inspiring", "inspirational"}}},
      {"Gratitude", V::positive, C::high, true,
       {{"appreciative", "appreciated"}, {"thankful"}, {"grateful", "gratitude"}}},
      {"Contentment", V::positive, C::low, true,
       {{"satisfied", "satisfying"}, {"contented", "contentment", "cozy", "comforting"},
        {"fulfilled", "fulfilling"}}},
      {"Feeling love", V::positive, C::low, false,
       {{"tender", "fond", "charming", "sweet"},
        {"affectionate", "heartwarming", "warm"},
        {"loving", "love", "loved", "adore", "adored"}}},
      {"Wonderment", V::positive, C::low, false,
       {{"impressed", "impressive"},
        {"amazed", "amazing", "wonder", "wonderful", "magical"},
        {"awestruck", "awe", "breathtaking", "mesmerized", "spellbound"}}},
      {"Relief", V::positive, C::low, false,
       {{"reassured", "reassuring"}, {"relieved", "relief"}, {"liberated", "freed"}}},
      {"Relaxation", V::positive, C::low, true,
       {{"calm", "calming", "soothing", "soothed"},
        {"relaxed", "relaxing", "relaxation"},
        {"serene", "serenity", "peaceful", "tranquil"}}},
      {"Surprise", V::positive, C::low, false,
       {{"surprised", "surprising", "unexpected"},
        {"astonished", "astonishing", "twist", "twists"},
        {"stunned", "shocked", "shocking", "floored"}}},
      {"Longing", V::negative, C::low, false,
       {{"nostalgic", "nostalgia"}, {"wistful", "longing"}, {"yearning", "yearn", "ache"}}},
      {"Compassion", V::negative, C::low, false,
       {{"sympathetic", "sympathy", "touching", "touched"},
        {"empathetic", "empathy", "moved", "moving"},
        {"compassionate", "compassion"}}},
      {"Sadness", V::negative, C::low, false,
       {{"sad", "melancholy", "sadness", "tears"},
        {"sorrowful", "sorrow", "cried", "crying", "grief"},
        {"devastated", "heartbroken", "heartbreaking", "devastating"}}},
      {"Fear", V::negative, C::low, false,
       {{"uneasy", "creepy", "eerie"},
        {"scared", "afraid", "frightened", "scary", "chilling"},
        {"terrified", "terrifying", "horrified", "petrified"}}},
      {"Shame", V::negative, C::low, false,
       {{"embarrassed", "embarrassing"}, {"ashamed", "shame"}, {"humiliated", "humiliating"}}},
      {"Guilt", V::negative, C::low, false,
       {{"regretful", "regret"}, {"guilty", "guilt"}, {"remorseful", "remorse"}}},
      {"Tension", V::negative, C::low, true,
       {{"tense", "suspense", "suspenseful", "tension"},
        {"anxious", "nervous", "anxiety"},
        {"stressed", "stressful", "stress"}}},
      {"Disappointment", V::negative, C::high, false,
       {{"underwhelmed"}, {"disappointed", "disappointing", "disappointment"},
        {"disillusioned"}}},
      {"Envy", V::negative, C::high, false,
       {{"envious", "envy"}, {"jealous", "jealousy"}, {"covetous"}}},
      {"Disgust", V::negative, C::high, false,
       {{"disgusted", "gross"}, {"repulsed", "disgusting"}, {"revolted", "revolting"}}},
      {"Contempt", V::negative, C::high, false,
       {{"scornful", "scorn"}, {"contemptuous", "contempt"}, {"disdainful", "disdain"}}},
      {"Anger", V::negative, C::high, false,
       {{"annoyed", "frustrated", "frustrating"},
        {"angry", "anger", "outraged"},
        {"furious", "infuriating", "enraged"}}},
      {"Hatred", V::negative, C::high, true,
       {{"resentful", "resentment"}, {"hateful", "hate", "hated", "hatred"},
        {"loathing", "loathe"}}},
  };
  return s;
}

std::string lower_ascii(std::string_view s) { return text::to_lower_ascii(s); }

}  // namespace

std::string_view to_string(Valence v) { return v == Valence::positive ? "positive" : "negative"; }
std::string_view to_string(Control c) { return c == Control::high ? "high" : "low"; }

const std::vector<EmotionCategory>& wheel() {
  static const std::vector<EmotionCategory> w = [] {
    std::vector<EmotionCategory> out;
    for (const auto& s : specs()) {
      EmotionCategory c;
      c.name = s.name;
      c.valence = s.valence;
      c.control = s.control;
      c.added = s.added;
      for (const auto& level : s.levels) c.intensity_levels.emplace_back(level.front());
      out.push_back(std::move(c));
    }
    EmotionCategory other;
    other.name = std::string(kOther);
    other.is_other = true;
    out.push_back(std::move(other));
    return out;
  }();
  return w;
}

const EmotionCategory* find_category(std::string_view name) {
  for (const auto& c : wheel()) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

nlohmann::json wheel_to_json() {
  nlohmann::json categories = nlohmann::json::array();
  for (const auto& c : wheel()) {
    nlohmann::json j = {{"name", c.name},
                        {"intensity_levels", c.intensity_levels},
                        {"is_other", c.is_other},
                        {"added", c.added}};
    if (c.is_other) {
      j["valence"] = nullptr;
      j["control"] = nullptr;
    } else {
      j["valence"] = to_string(c.valence);
      j["control"] = to_string(c.control);
    }
    categories.push_back(std::move(j));
  }
  return {{"axes", {{"horizontal", "valence"}, {"vertical", "control"}}},
          {"categories", std::move(categories)}};
}

std::string_view to_string(StatementKind k) {
  switch (k) {
    case StatementKind::A: return "A";
    case StatementKind::C: return "C";
    case StatementKind::AC: return "AC";
  }
  return "A";
}

StatementKind statement_kind_from_string(std::string_view s) {
  if (s == "A") return StatementKind::A;
  if (s == "C") return StatementKind::C;
  if (s == "AC") return StatementKind::AC;
  throw DataError("unknown statement kind '" + std::string(s) + "'");
}

std::string_view to_string(StatementSource s) {
  switch (s) {
    case StatementSource::llm: return "llm";
    case StatementSource::lexicon: return "lexicon";
    case StatementSource::fixture: return "fixture";
  }
  return "fixture";
}

StatementSource statement_source_from_string(std::string_view s) {
  if (s == "llm") return StatementSource::llm;
  if (s == "lexicon") return StatementSource::lexicon;
  if (s == "fixture") return StatementSource::fixture;
  throw DataError("unknown statement source '" + std::string(s) + "'");
}

std::string statement_id(std::string_view text, std::string_view user, std::string_view book) {
  std::string key;
  key.append(user).push_back('\x1f');
  key.append(book).push_back('\x1f');
  key.append(text);
  const auto d = sha256(key);
  return "st-" + to_hex(std::span<const std::uint8_t>(d.data(), 8));
}

void validate(const ACStatement& s) {
  if (s.id.empty()) throw DataError("statement without id");
  if (text::trim(s.text).empty()) throw DataError("statement " + s.id + " has empty text");
  if (s.kind == StatementKind::C && !s.categories.empty()) {
    throw DataError("C statement " + s.id + " carries emotion categories");
  }
  if (s.kind != StatementKind::C && s.categories.empty()) {
    throw DataError(std::string(to_string(s.kind)) + " statement " + s.id + " has no category");
  }
  for (const auto& c : s.categories) {
    if (!find_category(c)) throw DataError("statement " + s.id + ": unknown category '" + c + "'");
  }
}

void to_json(nlohmann::json& j, const ACStatement& s) {
  j = {{"id", s.id},
       {"text", s.text},
       {"kind", to_string(s.kind)},
       {"categories", s.categories},
       {"source", to_string(s.source)}};
  if (s.facet) j["facet"] = *s.facet;
  if (s.user) j["user_id"] = *s.user;
  if (s.book) j["book_id"] = *s.book;
}

void from_json(const nlohmann::json& j, ACStatement& s) {
  s = {};
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.kind = statement_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& c : j.value("categories", nlohmann::json::array())) {
    s.categories.insert(c.get<std::string>());
  }
  s.source = statement_source_from_string(j.value("source", std::string("fixture")));
  if (j.contains("facet") && !j["facet"].is_null()) s.facet = j["facet"].get<std::string>();
  if (j.contains("user_id") && !j["user_id"].is_null()) s.user = j["user_id"].get<std::string>();
  if (j.contains("book_id") && !j["book_id"].is_null()) s.book = j["book_id"].get<std::string>();
}

std::vector<std::string> lexicon_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex = [] {
    Lexicon l;
    for (const auto& s : specs()) {
      for (std::size_t level = 0; level < s.levels.size(); ++level) {
        for (const char* w : s.levels[level]) {
          const auto [it, fresh] = l.entries_.emplace(lower_ascii(w),
                                                      LexiconEntry{s.name, static_cast<int>(level)});
          if (!fresh) throw ConfigError(std::string("lexicon word listed twice: ") + w);
        }
      }
    }
    return l;
  }();
  return lex;
}

std::optional<LexiconEntry> Lexicon::lookup(std::string_view word) const {
  auto it = entries_.find(lower_ascii(word));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::set<std::pair<std::string, int>> Lexicon::matches(std::string_view text) const {
  std::set<std::pair<std::string, int>> out;
  for (const auto& tok : lexicon_tokens(text)) {
    auto it = entries_.find(tok);
    if (it != entries_.end()) out.emplace(it->second.category, it->second.level);
  }
  return out;
}

std::set<std::string> Lexicon::classify(std::string_view text) const {
  std::set<std::string> out;
  for (const auto& [cat, level] : matches(text)) out.insert(cat);
  if (out.empty()) out.insert(std::string(kOther));
  return out;
}

std::set<std::string> classify_emotions(const ACStatement& statement, const Lexicon& lexicon) {
  if (statement.kind == StatementKind::C) {
    throw ConfigError("cannot assign emotions to cognitive statement " + statement.id);
  }
  return lexicon.classify(statement.text);
}

StatementRepository::StatementRepository(const StatementRepository& other) {
  std::shared_lock lock(other.mutex_);
  statements_ = other.statements_;
  by_review_ = other.by_review_;
}

StatementRepository& StatementRepository::operator=(const StatementRepository& other) {
  if (this == &other) return *this;
  std::shared_lock theirs(other.mutex_, std::defer_lock);
  std::unique_lock mine(mutex_, std::defer_lock);
  std::lock(theirs, mine);
  statements_ = other.statements_;
  by_review_ = other.by_review_;
  return *this;
}

void StatementRepository::add(ACStatement statement) {
  validate(statement);
  std::unique_lock lock(mutex_);
  auto it = statements_.find(statement.id);
  if (it != statements_.end()) {
    if (it->second == statement) return;
    throw DataError("statement id " + statement.id + " already holds a different statement");
  }
  if (statement.user && statement.book) {
    auto& ids = by_review_[{*statement.user, *statement.book}];
    ids.insert(std::lower_bound(ids.begin(), ids.end(), statement.id), statement.id);
  }
  const std::string id = statement.id;
  statements_.emplace(id, std::move(statement));
}

std::size_t StatementRepository::size() const {
  std::shared_lock lock(mutex_);
  return statements_.size();
}

std::optional<ACStatement> StatementRepository::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = statements_.find(id);
  if (it == statements_.end()) return std::nullopt;
  return it->second;
}

std::vector<ACStatement> StatementRepository::all() const {
  std::shared_lock lock(mutex_);
  std::vector<ACStatement> out;
  out.reserve(statements_.size());
  for (const auto& [id, s] : statements_) out.push_back(s);
  return out;
}

std::vector<ACStatement> StatementRepository::by_category(
    const std::string& category, const std::optional<std::string>& intensity) const {
  const auto* cat = find_category(category);
  if (!cat) throw NotFoundError("unknown emotion category '" + category + "'");
  std::optional<int> level;
  if (intensity) {
    const auto& lv = cat->intensity_levels;
    auto it = std::find(lv.begin(), lv.end(), lower_ascii(*intensity));
    if (it == lv.end()) {
      throw NotFoundError("'" + *intensity + "' is not an intensity word of " + category);
    }
    level = static_cast<int>(it - lv.begin());
  }
  const auto& lex = Lexicon::builtin();
  std::shared_lock lock(mutex_);
  std::vector<ACStatement> out;
  for (const auto& [id, s] : statements_) {
    if (!s.categories.count(category)) continue;
    if (level && !lex.matches(s.text).count({category, *level})) continue;
    out.push_back(s);
  }
  return out;
}

std::vector<ACStatement> StatementRepository::for_review(const UserId& user,
                                                         const BookId& book) const {
  std::shared_lock lock(mutex_);
  std::vector<ACStatement> out;
  auto it = by_review_.find({user, book});
  if (it == by_review_.end()) return out;
  for (const auto& id : it->second) out.push_back(statements_.at(id));
  return out;
}

ACDescription StatementRepository::compose(const std::vector<std::string>& ids,
                                           const std::optional<std::string>& free_text) const {
  std::vector<std::pair<std::string, std::string>> parts;
  {
    std::shared_lock lock(mutex_);
    for (const auto& id : ids) {
      auto it = statements_.find(id);
      if (it == statements_.end()) throw NotFoundError("unknown statement id '" + id + "'");
      parts.emplace_back(id, it->second.text);
    }
  }
  return render_ac_description(free_text, std::move(parts));
}

std::map<std::string, std::size_t> StatementRepository::category_counts() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, std::size_t> out;
  for (const auto& [id, s] : statements_) {
    for (const auto& c : s.categories) ++out[c];
  }
  return out;
}

StatementRepository StatementRepository::load(const std::filesystem::path& path) {
  StatementRepository repo;
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    repo.add(j.get<ACStatement>());
  });
  return repo;
}

void StatementRepository::save(const std::filesystem::path& path) const {
  std::vector<nlohmann::json> records;
  for (const auto& s : all()) records.emplace_back(s);
  io::write_jsonl(path, records);
}

std::vector<std::pair<std::string, std::size_t>> load_distribution(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::size_t>> out;
  std::istringstream in(io::read_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto tab = line.find('\t');
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw DataError(where + ": expected category<TAB>count");
    const std::string name = text::trim(line.substr(0, tab));
    const std::string count = text::trim(line.substr(tab + 1));
    if (line_no == 1 && !find_category(name)) continue;  // header
    if (!find_category(name)) throw DataError(where + ": unknown category '" + name + "'");
    if (!seen.insert(name).second) throw DataError(where + ": duplicate category '" + name + "'");
    if (count.empty() || !std::all_of(count.begin(), count.end(), ::isdigit)) {
      throw DataError(where + ": bad count '" + count + "'");
    }
    out.emplace_back(name, std::stoull(count));
  }
  return out;
}

StatementRepository fixture_repository(
    const std::vector<std::pair<std::string, std::size_t>>& distribution) {
  StatementRepository repo;
  for (const auto& [name, count] : distribution) {
    for (std::size_t i = 0; i < count; ++i) {
      ACStatement s;
      s.text = name + " statement " + std::to_string(i + 1);
      s.id = statement_id(s.text, "fixture", name);
      s.kind = StatementKind::A;
      s.categories = {name};
      s.source = StatementSource::fixture;
      repo.add(std::move(s));
    }
  }
  return repo;
}

const std::array<std::string, 6>& AuditWorksheet::questions() {
  static const std::array<std::string, 6> q = {
      "Does the generated AC text exclude identifiable book information, e.g. the title?",
      "Does the generated AC text exclude identifiable author information, e.g. the author's name?",
      "Does the generated AC text exclude identifiable character information, e.g. the "
      "character's name?",
      "Does the generated AC text omit sentences directly taken from the book?",
      "Does the generated AC text exclude sentences with negative or partially negative "
      "connotation towards the book?",
      "Does the generated AC text exclude chapter numbers, chapter names, and page number?",
  };
  return q;
}

std::optional<double> AuditWorksheet::precision() const {
  std::size_t annotated = 0, passed = 0;
  for (const auto& r : rows) {
    if (!std::all_of(r.answers.begin(), r.answers.end(), [](const auto& a) { return a.has_value(); })) {
      continue;
    }
    ++annotated;
    if (std::all_of(r.answers.begin(), r.answers.end(), [](const auto& a) { return *a; })) ++passed;
  }
  if (annotated == 0) return std::nullopt;
  return static_cast<double>(passed) / static_cast<double>(annotated);
}

namespace {

std::string tsv_cell(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::string AuditWorksheet::to_tsv() const {
  std::string out = "statement_id\tkind\ttext";
  for (std::size_t i = 0; i < 6; ++i) out += "\tq" + std::to_string(i + 1);
  out += '\n';
  for (const auto& r : rows) {
    out += tsv_cell(r.statement_id) + '\t' + tsv_cell(r.kind) + '\t' + tsv_cell(r.text);
    for (const auto& a : r.answers) {
      out += '\t';
      if (a) out += *a ? "yes" : "no";
    }
    out += '\n';
  }
  return out;
}

AuditWorksheet AuditWorksheet::from_tsv(std::string_view tsv) {
  AuditWorksheet w;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || line.empty()) continue;
    auto cells = split_tabs(line);
    if (cells.size() != 9) {
      throw DataError("audit worksheet line " + std::to_string(line_no) + ": expected 9 columns");
    }
    AuditRow r{cells[0], cells[1], cells[2], {}};
    for (std::size_t i = 0; i < 6; ++i) {
      const auto v = lower_ascii(text::trim(cells[3 + i]));
      if (v == "yes" || v == "y" || v == "1") {
        r.answers[i] = true;
      } else if (v == "no" || v == "n" || v == "0") {
        r.answers[i] = false;
      } else if (!v.empty()) {
        throw DataError("audit worksheet line " + std::to_string(line_no) + ": bad answer '" + v +
                        "'");
      }
    }
    w.rows.push_back(std::move(r));
  }
  return w;
}

AuditWorksheet audit_sample(const std::vector<ACStatement>& statements, std::size_t n, Rng& rng) {
  if (n > statements.size()) {
    throw ConfigError("audit sample of " + std::to_string(n) + " from " +
                      std::to_string(statements.size()) + " statements");
  }
  std::vector<std::size_t> idx(statements.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
  }
  AuditWorksheet w;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = statements[idx[i]];
    w.rows.push_back({s.id, std::string(to_string(s.kind)), s.text, {}});
  }
  return w;
}

}  // namespace acrec::taxonomy
