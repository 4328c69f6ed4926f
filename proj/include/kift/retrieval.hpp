#pragma once

#include <string>
#include <vector>

#include "kift/matrix_io.hpp"

namespace kift {

// Unit-normalized row embeddings keyed by report/image id.
struct EmbeddingStore {
  std::vector<std::string> ids;
  Matrix matrix;  // N x d, each row norm 1

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return matrix.cols; }
};

struct ScoredId {
  std::string id;
  double score;  // cosine in [-1, 1]
};

struct RetrievalResult {
  std::vector<ScoredId> entries;  // non-increasing score, ties by ascending id
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Exact brute-force top-k; `exclude` keeps a training query from retrieving
// itself.
RetrievalResult topk(const EmbeddingStore& store, const std::vector<double>& query,
                     std::size_t k, const std::string& exclude = "");

// Deterministic hash-based text encoder standing in for a pretrained tower:
// mean of per-token seeded-hash vectors, unit-normalized.
std::vector<double> synth_text_encode(const std::string& text, std::size_t d);
std::vector<double> synth_tokens_encode(const std::vector<std::string>& tokens, std::size_t d);

// Build a store from rows (rows are normalized; zero rows rejected).
EmbeddingStore make_store(std::vector<std::string> ids, Matrix rows);

// KIFT binary matrix + sidecar JSON id list at path + ".ids.json".
void save_embeddings(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_embeddings(const std::string& path);

}  // namespace kift
