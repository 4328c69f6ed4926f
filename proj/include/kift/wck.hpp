#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kift/corpus.hpp"
#include "kift/matrix_io.hpp"

namespace kift {

enum class ConceptCategory { noun, adjective };

struct Concept {
  std::vector<std::string> name;  // token sequence, lowercase
  ConceptCategory category = ConceptCategory::noun;
};

struct ConceptPackage {
  std::vector<Concept> concepts;
  std::size_t count() const { return concepts.size(); }
};

// The built-in package: 76 common lesion/observation terms.
ConceptPackage default_concept_package();
ConceptPackage load_concept_package(const std::string& path);
void save_concept_package(const ConceptPackage& pkg, const std::string& path);

// Per-report word scores: tf(word, report) * ln(|R| / (1 + df(word))).
struct TfIdfTable {
  std::unordered_map<std::string, std::unordered_map<std::string, double>> scores;
  std::unordered_map<std::string, std::size_t> df;
  std::size_t n_reports = 0;

  // 0.0 when the word does not occur in the report.
  double score(const std::string& report_id, const std::string& word) const;
};

TfIdfTable compute_tfidf(const Corpus& corpus);

// Per-concept weights aligned with ConceptPackage order.
struct WeightVector {
  std::vector<double> s;
};

// Mean TF-IDF of the concept's tokens when its token sequence occurs
// contiguously in the report, else 0. Negative means clamp to 0 by default.
WeightVector concept_weights(const std::string& report_id, const TfIdfTable& table,
                             const ConceptPackage& pkg, const Corpus& corpus,
                             bool clamp = true);

// Test-time retrieve-then-merge: element-wise mean over the retrieved reports.
WeightVector merge_test_weights(const std::vector<std::string>& topk_ids,
                                const TfIdfTable& table, const ConceptPackage& pkg,
                                const Corpus& corpus, bool clamp = true);

// K_c[k, :] = s_k * F_c[k, :]
Matrix weighted_concept_knowledge(const Matrix& concept_features, const WeightVector& weights);

// Concept name embeddings from the synthetic text encoder (N_c x d).
Matrix concept_embeddings(const ConceptPackage& pkg, std::size_t d);

void dump_tfidf_json(const TfIdfTable& table, const std::string& path);

}  // namespace kift
