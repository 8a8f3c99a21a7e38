#include "acrec/features.hpp"

#include <algorithm>

#include "acrec/text.hpp"

namespace acrec {

void RawMatrix::append(std::span<const float> v) {
  if (rows == 0 && dim == 0) dim = static_cast<int>(v.size());
  if (static_cast<int>(v.size()) != dim) {
    throw ShapeError("embedding of dim " + std::to_string(v.size()) + " in a matrix of dim " +
                     std::to_string(dim));
  }
  data.insert(data.end(), v.begin(), v.end());
  ++rows;
}

std::string original_text(const Book& book) {
  std::string t = text::trim(book.original_description);
  if (t.empty()) t = text::trim(book.title);
  if (t.empty()) throw DataError("book " + book.id + " has neither description nor title");
  return t;
}

std::string extended_text(const Book& book) {
  std::string t = text::trim(book.extended_description);
  return t.empty() ? original_text(book) : t;
}

std::string combined_text(const Book& book) {
  std::string t = text::trim(book.extended_description);
  return t.empty() ? original_text(book) : original_text(book) + " " + t;
}

int FeatureStore::book_row(const BookId& id) const {
  auto it = book_index_.find(id);
  if (it == book_index_.end()) throw NotFoundError("no embeddings for book " + id);
  return it->second;
}

int FeatureStore::review_row(const UserId& user, int step_index) const {
  auto it = review_index_.find({user, step_index});
  if (it == review_index_.end()) {
    throw NotFoundError("no review embedding for user " + user + " step " +
                        std::to_string(step_index));
  }
  return it->second;
}

namespace {

std::vector<const ReadingHistory*> histories_of(const ingest::Corpus& corpus,
                                                const std::vector<UserId>& users) {
  std::vector<const ReadingHistory*> out;
  for (const auto& u : users) {
    const auto* h = corpus.find_history(u);
    if (!h) throw NotFoundError("unknown user " + u);
    out.push_back(h);
  }
  return out;
}

std::string review_text(const Interaction& x, const Book& book) {
  std::string t = text::trim(x.review);
  return t.empty() ? original_text(book) : t;
}

std::vector<const Book*> sorted_books(const ingest::Corpus& corpus) {
  std::vector<const Book*> out;
  for (const auto& b : corpus.books) out.push_back(&b);
  std::sort(out.begin(), out.end(), [](const Book* a, const Book* b) { return a->id < b->id; });
  return out;
}

}  // namespace

std::vector<std::string> FeatureStore::texts_to_embed(const ingest::Corpus& corpus,
                                                      const std::vector<UserId>& users) {
  std::vector<std::string> texts;
  for (const Book* b : sorted_books(corpus)) {
    texts.push_back(original_text(*b));
    texts.push_back(extended_text(*b));
    texts.push_back(combined_text(*b));
  }
  for (const auto* h : histories_of(corpus, users)) {
    for (const auto& x : h->interactions) texts.push_back(review_text(x, *corpus.find_book(x.book)));
  }
  return texts;
}

FeatureStore FeatureStore::build(const ingest::Corpus& corpus, const std::vector<UserId>& users,
                                 embed::EmbeddingProvider& provider) {
  FeatureStore s;
  s.dim_ = provider.identity().dim;
  const auto texts = texts_to_embed(corpus, users);
  const auto vectors = provider.embed_batch(texts);
  std::size_t k = 0;
  for (const Book* b : sorted_books(corpus)) {
    s.book_index_[b->id] = static_cast<int>(s.book_ids_.size());
    s.book_ids_.push_back(b->id);
    s.original_.append(vectors[k++].values);
    s.extended_.append(vectors[k++].values);
    s.combined_.append(vectors[k++].values);
  }
  for (const auto* h : histories_of(corpus, users)) {
    for (const auto& x : h->interactions) {
      s.review_index_[{x.user, x.index}] = s.reviews_.rows;
      s.reviews_.append(vectors[k++].values);
    }
  }
  return s;
}

Query make_query(const FeatureStore& store, const ReadingHistory& history, int step_index,
                 std::vector<float> ac_raw) {
  if (step_index < 0 || step_index > static_cast<int>(history.interactions.size())) {
    throw DataError("step " + std::to_string(step_index) + " outside the history of user " +
                    history.user);
  }
  if (static_cast<int>(ac_raw.size()) != store.dim()) {
    throw ShapeError("AC embedding has dim " + std::to_string(ac_raw.size()) + ", expected " +
                     std::to_string(store.dim()));
  }
  Query q;
  q.user = history.user;
  q.step_index = step_index;
  q.ac_raw = std::move(ac_raw);
  for (const auto& x : history.interactions) {
    const int row = store.book_row(x.book);
    q.consumed_all.push_back(row);
    if (x.index < step_index) {
      q.books.push_back(row);
      q.reviews.push_back(store.review_row(x.user, x.index));
      q.ratings.push_back(x.rating);
      q.consumed_before.push_back(row);
    } else if (x.index == step_index) {
      q.positive = row;
    }
  }
  for (auto* v : {&q.consumed_before, &q.consumed_all}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return q;
}

std::vector<Query> make_queries(const FeatureStore& store, const ingest::Corpus& corpus,
                                const std::vector<ingest::UsefulStep>& steps,
                                const std::function<std::string(const ingest::UsefulStep&)>& ac_text,
                                embed::EmbeddingProvider& provider) {
  std::vector<std::string> texts;
  texts.reserve(steps.size());
  for (const auto& s : steps) texts.push_back(ac_text(s));
  auto vectors = provider.embed_batch(texts);
  std::vector<Query> out;
  out.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto* h = corpus.find_history(steps[i].user);
    if (!h) throw NotFoundError("unknown user " + steps[i].user);
    out.push_back(make_query(store, *h, steps[i].step_index, std::move(vectors[i].values)));
  }
  return out;
}

}  // namespace acrec
