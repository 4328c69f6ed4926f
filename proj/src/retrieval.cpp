#include "kift/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"
#include "kift/corpus.hpp"

using nlohmann::json;

namespace kift {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ShapeError("cosine: dimension mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ShapeError("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

RetrievalResult topk(const EmbeddingStore& store, const std::vector<double>& query,
                     std::size_t k, const std::string& exclude) {
  if (query.size() != store.dim())
    throw ShapeError("topk: query dim " + std::to_string(query.size()) +
                     " vs store dim " + std::to_string(store.dim()));
  std::vector<ScoredId> scored;
  scored.reserve(store.size());
  std::vector<double> row(store.dim());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!exclude.empty() && store.ids[i] == exclude) continue;
    for (std::size_t j = 0; j < store.dim(); ++j) row[j] = store.matrix.at(i, j);
    scored.push_back({store.ids[i], cosine(query, row)});
  }
  if (k < 1 || k > scored.size())
    throw DataError("topk: k=" + std::to_string(k) + " with " +
                    std::to_string(scored.size()) + " candidates");
  std::sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  scored.resize(k);
  return {std::move(scored)};
}

std::vector<double> synth_tokens_encode(const std::vector<std::string>& tokens, std::size_t d) {
  if (d < 1) throw ShapeError("synth_text_encode: d must be >= 1");
  if (tokens.empty()) throw DataError("synth_text_encode: empty text");
  std::vector<double> acc(d, 0.0);
  for (const auto& tok : tokens) {
    std::mt19937_64 rng(fnv1a(tok));
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < d; ++i) acc[i] += dist(rng);
  }
  for (auto& x : acc) x /= static_cast<double>(tokens.size());
  double norm = 0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (auto& x : acc) x /= norm;
  return acc;
}

std::vector<double> synth_text_encode(const std::string& text, std::size_t d) {
  TokenizerConfig cfg;
  cfg.drop_deid = false;
  auto toks = tokenize(text, cfg);
  if (toks.empty()) throw DataError("synth_text_encode: empty text");
  return synth_tokens_encode(toks, d);
}

static void normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double norm = 0;
    for (std::size_t j = 0; j < m.cols; ++j) norm += m.at(i, j) * m.at(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) throw DataError("embedding row " + std::to_string(i) + " is zero");
    if (std::abs(norm - 1.0) > 1e-6)
      for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) /= norm;
  }
}

EmbeddingStore make_store(std::vector<std::string> ids, Matrix rows) {
  if (ids.size() != rows.rows)
    throw ShapeError("make_store: " + std::to_string(ids.size()) + " ids vs " +
                     std::to_string(rows.rows) + " rows");
  normalize_rows(rows);
  EmbeddingStore s;
  s.ids = std::move(ids);
  s.matrix = std::move(rows);
  return s;
}

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  save_matrix(store.matrix, path);
  std::ofstream out(path + ".ids.json");
  if (!out) throw DataError("cannot open for write: " + path + ".ids.json");
  out << json(store.ids).dump() << '\n';
}

EmbeddingStore load_embeddings(const std::string& path) {
  Matrix m = load_matrix(path);
  std::ifstream in(path + ".ids.json");
  if (!in) throw DataError("missing id sidecar: " + path + ".ids.json");
  json j;
  in >> j;
  auto ids = j.get<std::vector<std::string>>();
  if (ids.size() != m.rows)
    throw FormatError("id sidecar size " + std::to_string(ids.size()) +
                      " does not match " + std::to_string(m.rows) + " rows");
  return make_store(std::move(ids), std::move(m));
}

}  // namespace kift
