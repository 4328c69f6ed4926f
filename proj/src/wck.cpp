#include "kift/wck.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"
#include "kift/retrieval.hpp"

using nlohmann::json;

namespace kift {

static std::vector<std::string> split_words(const std::string& name) {
  std::istringstream ss(name);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

ConceptPackage default_concept_package() {
  static const char* nouns[] = {
      "atelectasis", "consolidation", "pneumothorax", "effusion", "pleural effusion",
      "edema", "pulmonary edema", "cardiomegaly", "pneumonia", "opacity",
      "opacities", "infiltrate", "infiltrates", "nodule", "nodules",
      "mass", "lesion", "fracture", "fractures", "emphysema",
      "fibrosis", "scarring", "granuloma", "granulomas", "calcification",
      "calcifications", "hernia", "hiatal hernia", "thickening", "pleural thickening",
      "congestion", "vascular congestion", "aeration", "hyperinflation", "hypoinflation",
      "airspace disease", "interstitial markings", "bronchiectasis", "cyst", "bullae",
      "scoliosis", "spondylosis", "osteophytes", "deformity", "cavitation",
      "abscess", "adenopathy", "lymphadenopathy", "pneumoperitoneum", "atherosclerosis",
      "aneurysm", "hemorrhage", "contusion", "tuberculosis", "sarcoidosis",
      "pneumonitis", "ectasia", "kyphosis", "osteopenia", "osteoporosis"};
  static const char* adjectives[] = {
      "normal", "clear", "enlarged", "stable", "unremarkable",
      "blunted", "elevated", "prominent", "tortuous", "calcified",
      "hyperinflated", "widened", "degenerative", "patchy", "streaky", "diffuse"};
  ConceptPackage pkg;
  for (const char* n : nouns) pkg.concepts.push_back({split_words(n), ConceptCategory::noun});
  for (const char* a : adjectives)
    pkg.concepts.push_back({split_words(a), ConceptCategory::adjective});
  return pkg;
}

ConceptPackage load_concept_package(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open concept package: " + path);
  json j;
  in >> j;
  ConceptPackage pkg;
  std::set<std::string> seen;
  for (const auto& e : j) {
    Concept c;
    auto name = e.at("name").get<std::string>();
    if (!seen.insert(name).second) throw DataError("duplicate concept: " + name);
    c.name = split_words(name);
    if (c.name.empty()) throw DataError("empty concept name");
    auto cat = e.at("category").get<std::string>();
    if (cat == "noun") c.category = ConceptCategory::noun;
    else if (cat == "adjective") c.category = ConceptCategory::adjective;
    else throw DataError("unknown concept category: " + cat);
    pkg.concepts.push_back(std::move(c));
  }
  if (pkg.concepts.empty()) throw DataError("empty concept package: " + path);
  return pkg;
}

void save_concept_package(const ConceptPackage& pkg, const std::string& path) {
  json j = json::array();
  for (const auto& c : pkg.concepts) {
    std::string name;
    for (const auto& w : c.name) {
      if (!name.empty()) name += ' ';
      name += w;
    }
    j.push_back({{"name", name},
                 {"category", c.category == ConceptCategory::noun ? "noun" : "adjective"}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  out << j.dump(2) << '\n';
}

double TfIdfTable::score(const std::string& report_id, const std::string& word) const {
  auto it = scores.find(report_id);
  if (it == scores.end()) return 0.0;
  auto jt = it->second.find(word);
  return jt == it->second.end() ? 0.0 : jt->second;
}

TfIdfTable compute_tfidf(const Corpus& corpus) {
  if (corpus.reports.empty()) throw DataError("compute_tfidf: empty corpus");
  TfIdfTable t;
  t.n_reports = corpus.reports.size();
  // Pass 1: document frequencies.
  for (const auto& r : corpus.reports) {
    std::set<std::string> uniq(r.tokens.begin(), r.tokens.end());
    for (const auto& w : uniq) ++t.df[w];
  }
  // Pass 2: per-report scores.
  const double n_docs = static_cast<double>(t.n_reports);
  for (const auto& r : corpus.reports) {
    if (r.tokens.empty()) {
      t.scores[r.id];  // empty map
      continue;
    }
    std::unordered_map<std::string, std::size_t> tf;
    for (const auto& w : r.tokens) ++tf[w];
    const double total = static_cast<double>(r.tokens.size());
    auto& row = t.scores[r.id];
    for (const auto& [w, n] : tf) {
      const double idf = std::log(n_docs / (1.0 + static_cast<double>(t.df.at(w))));
      row[w] = (static_cast<double>(n) / total) * idf;
    }
  }
  return t;
}

// First contiguous occurrence of `seq` in `tokens`, or npos.
static std::size_t find_subsequence(const std::vector<std::string>& tokens,
                                    const std::vector<std::string>& seq) {
  if (seq.empty() || seq.size() > tokens.size()) return std::string::npos;
  for (std::size_t i = 0; i + seq.size() <= tokens.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < seq.size(); ++j)
      if (tokens[i + j] != seq[j]) { match = false; break; }
    if (match) return i;
  }
  return std::string::npos;
}

WeightVector concept_weights(const std::string& report_id, const TfIdfTable& table,
                             const ConceptPackage& pkg, const Corpus& corpus,
                             bool clamp) {
  const Report& r = corpus.report(report_id);
  WeightVector w;
  w.s.resize(pkg.count(), 0.0);
  for (std::size_t k = 0; k < pkg.count(); ++k) {
    const auto& c = pkg.concepts[k];
    if (find_subsequence(r.tokens, c.name) == std::string::npos) continue;
    double sum = 0;
    for (const auto& tok : c.name) sum += table.score(report_id, tok);
    double s = sum / static_cast<double>(c.name.size());
    if (clamp && s < 0.0) s = 0.0;
    w.s[k] = s;
  }
  return w;
}

WeightVector merge_test_weights(const std::vector<std::string>& topk_ids,
                                const TfIdfTable& table, const ConceptPackage& pkg,
                                const Corpus& corpus, bool clamp) {
  if (topk_ids.empty()) throw DataError("merge_test_weights: empty id list");
  WeightVector acc;
  acc.s.resize(pkg.count(), 0.0);
  for (const auto& id : topk_ids) {
    WeightVector w = concept_weights(id, table, pkg, corpus, clamp);
    for (std::size_t k = 0; k < acc.s.size(); ++k) acc.s[k] += w.s[k];
  }
  for (auto& x : acc.s) x /= static_cast<double>(topk_ids.size());
  return acc;
}

Matrix weighted_concept_knowledge(const Matrix& concept_features, const WeightVector& weights) {
  if (concept_features.rows != weights.s.size())
    throw ShapeError("weighted_concept_knowledge: " + std::to_string(concept_features.rows) +
                     " feature rows vs " + std::to_string(weights.s.size()) + " weights");
  Matrix out(concept_features.rows, concept_features.cols);
  for (std::size_t k = 0; k < out.rows; ++k)
    for (std::size_t j = 0; j < out.cols; ++j)
      out.at(k, j) = weights.s[k] * concept_features.at(k, j);
  return out;
}

Matrix concept_embeddings(const ConceptPackage& pkg, std::size_t d) {
  Matrix m(pkg.count(), d);
  for (std::size_t k = 0; k < pkg.count(); ++k) {
    auto v = synth_tokens_encode(pkg.concepts[k].name, d);
    for (std::size_t j = 0; j < d; ++j) m.at(k, j) = v[j];
  }
  return m;
}

void dump_tfidf_json(const TfIdfTable& table, const std::string& path) {
  json j;
  j["n_reports"] = table.n_reports;
  j["df"] = table.df;
  j["scores"] = table.scores;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace kift
