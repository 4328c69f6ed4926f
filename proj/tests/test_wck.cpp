#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "kift/common.hpp"
#include "kift/corpus.hpp"
#include "kift/wck.hpp"

using namespace kift;

namespace {

Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& texts) {
  std::vector<Report> reports;
  for (const auto& [id, text] : texts) {
    Report r;
    r.id = id;
    r.text = text;
    r.split = Split::train;
    reports.push_back(r);
  }
  TokenizerConfig cfg;
  cfg.min_freq = 1;
  return build_corpus(reports, cfg);
}

// Independent brute-force re-count of tf and df.
double oracle_score(const Corpus& c, const std::string& report_id, const std::string& word) {
  const Report& r = c.report(report_id);
  std::size_t tf = 0;
  for (const auto& t : r.tokens)
    if (t == word) ++tf;
  if (tf == 0) return 0.0;
  std::size_t df = 0;
  for (const auto& other : c.reports) {
    for (const auto& t : other.tokens)
      if (t == word) {
        ++df;
        break;
      }
  }
  return (static_cast<double>(tf) / static_cast<double>(r.tokens.size())) *
         std::log(static_cast<double>(c.reports.size()) / (1.0 + static_cast<double>(df)));
}

const Corpus& fixture3() {
  static Corpus c = make_corpus(
      {{"r1", "no effusion"}, {"r2", "effusion present"}, {"r3", "heart normal"}});
  return c;
}

}  // namespace

TEST_CASE("tfidf fixture values") {
  const Corpus& c = fixture3();
  TfIdfTable t = compute_tfidf(c);
  CHECK(t.score("r1", "effusion") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.score("r1", "no") == doctest::Approx(0.5 * std::log(3.0 / 2.0)).epsilon(1e-9));
  // Absent word has no entry; downstream weight is the zero branch.
  CHECK(t.scores.at("r1").count("heart") == 0);
  CHECK(t.score("r1", "heart") == 0.0);
}

TEST_CASE("tfidf empty corpus rejected") {
  Corpus c;
  CHECK_THROWS_AS(compute_tfidf(c), DataError);
}

TEST_CASE("tfidf matches brute force on random corpora") {
  const std::vector<std::string> vocab = {"no",    "acute", "heart", "lung",  "clear", "mass",
                                          "edema", "seen",  "focal", "bony",  "right", "left"};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::pair<std::string, std::string>> texts;
    const std::size_t n = rng() % 20 + 1;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      const std::size_t len = rng() % 10 + 1;
      for (std::size_t w = 0; w < len; ++w) {
        if (!text.empty()) text += ' ';
        text += vocab[rng() % vocab.size()];
      }
      texts.emplace_back("r" + std::to_string(i), text);
    }
    Corpus c = make_corpus(texts);
    TfIdfTable t = compute_tfidf(c);
    for (const auto& r : c.reports) {
      std::set<std::string> uniq(r.tokens.begin(), r.tokens.end());
      for (const auto& w : uniq)
        CHECK(t.score(r.id, w) == doctest::Approx(oracle_score(c, r.id, w)).epsilon(1e-12));
    }
  }
}

TEST_CASE("tfidf monotone in document frequency") {
  // Same tf for "mass" in r0; more documents containing it lowers the score.
  Corpus lo = make_corpus({{"r0", "mass seen"}, {"r1", "clear"}, {"r2", "clear"}, {"r3", "clear"}});
  Corpus hi = make_corpus({{"r0", "mass seen"}, {"r1", "mass"}, {"r2", "mass"}, {"r3", "clear"}});
  CHECK(compute_tfidf(lo).score("r0", "mass") > compute_tfidf(hi).score("r0", "mass"));
}

TEST_CASE("concept weights fixture") {
  const Corpus& c = fixture3();
  TfIdfTable t = compute_tfidf(c);
  ConceptPackage pkg;
  pkg.concepts.push_back({{"effusion"}, ConceptCategory::noun});
  pkg.concepts.push_back({{"pneumothorax"}, ConceptCategory::noun});
  WeightVector w = concept_weights("r1", t, pkg, c);
  CHECK(w.s.size() == 2);
  CHECK(w.s[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(w.s[1] == 0.0);  // absent concept
  CHECK_THROWS_AS(concept_weights("nope", t, pkg, c), DataError);
}

TEST_CASE("multi-word concept takes the mean of constituent scores") {
  Corpus c = make_corpus({{"r1", "small pleural effusion seen"},
                          {"r2", "lungs clear"},
                          {"r3", "no pleural abnormality"},
                          {"r4", "heart normal"}});
  TfIdfTable t = compute_tfidf(c);
  ConceptPackage pkg;
  pkg.concepts.push_back({{"pleural", "effusion"}, ConceptCategory::noun});
  WeightVector w = concept_weights("r1", t, pkg, c, /*clamp=*/false);
  const double expected = 0.5 * (t.score("r1", "pleural") + t.score("r1", "effusion"));
  CHECK(w.s[0] == doctest::Approx(expected).epsilon(1e-12));

  // Tokens present but not contiguous -> zero.
  Corpus c2 = make_corpus({{"r1", "pleural scarring and effusion"}, {"r2", "clear"}});
  WeightVector w2 = concept_weights("r1", compute_tfidf(c2), pkg, c2);
  CHECK(w2.s[0] == 0.0);
}

TEST_CASE("clamping negative means") {
  // "no" appears in every report: idf = ln(2/3) < 0.
  Corpus c = make_corpus({{"r1", "no mass"}, {"r2", "no edema"}});
  TfIdfTable t = compute_tfidf(c);
  ConceptPackage pkg;
  pkg.concepts.push_back({{"no"}, ConceptCategory::noun});
  CHECK(concept_weights("r1", t, pkg, c, true).s[0] == 0.0);
  CHECK(concept_weights("r1", t, pkg, c, false).s[0] < 0.0);
}

TEST_CASE("merge_test_weights") {
  const Corpus& c = fixture3();
  TfIdfTable t = compute_tfidf(c);
  ConceptPackage pkg;
  pkg.concepts.push_back({{"no"}, ConceptCategory::noun});
  pkg.concepts.push_back({{"effusion"}, ConceptCategory::noun});

  WeightVector single = merge_test_weights({"r1"}, t, pkg, c);
  WeightVector direct = concept_weights("r1", t, pkg, c);
  CHECK(single.s == direct.s);

  // Mean over several reports, element-wise.
  WeightVector merged = merge_test_weights({"r1", "r2", "r3"}, t, pkg, c);
  for (std::size_t k = 0; k < pkg.count(); ++k) {
    double mean = (concept_weights("r1", t, pkg, c).s[k] +
                   concept_weights("r2", t, pkg, c).s[k] +
                   concept_weights("r3", t, pkg, c).s[k]) /
                  3.0;
    CHECK(merged.s[k] == doctest::Approx(mean).epsilon(1e-12));
  }
  CHECK_THROWS_AS(merge_test_weights({}, t, pkg, c), DataError);
}

TEST_CASE("weighted_concept_knowledge") {
  Matrix f(2, 2, 1.0);
  WeightVector ones{{1.0, 1.0}};
  CHECK(weighted_concept_knowledge(f, ones).data == f.data);
  WeightVector zeros{{0.0, 0.0}};
  for (double x : weighted_concept_knowledge(f, zeros).data) CHECK(x == 0.0);
  WeightVector s{{2.0, 0.5}};
  Matrix k = weighted_concept_knowledge(f, s);
  CHECK(k.at(0, 0) == 2.0);
  CHECK(k.at(0, 1) == 2.0);
  CHECK(k.at(1, 0) == 0.5);
  CHECK(k.at(1, 1) == 0.5);
  WeightVector bad{{1.0}};
  CHECK_THROWS_AS(weighted_concept_knowledge(f, bad), ShapeError);
}

TEST_CASE("weighted_concept_knowledge linear in the weights") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1, 1);
  Matrix f(4, 3);
  for (auto& x : f.data) x = dist(rng);
  WeightVector s{{0.3, 0.0, 1.2, 0.7}};
  const double a = 2.5;
  WeightVector sa = s;
  for (auto& x : sa.s) x *= a;
  Matrix k1 = weighted_concept_knowledge(f, sa);
  Matrix k2 = weighted_concept_knowledge(f, s);
  for (std::size_t i = 0; i < k1.data.size(); ++i)
    CHECK(k1.data[i] == doctest::Approx(a * k2.data[i]).epsilon(1e-12));
}

TEST_CASE("default package has 76 unique concepts") {
  ConceptPackage pkg = default_concept_package();
  CHECK(pkg.count() == 76);
  std::set<std::vector<std::string>> names;
  for (const auto& c : pkg.concepts) names.insert(c.name);
  CHECK(names.size() == 76);
}

TEST_CASE("zero-padding property: positive weights only for occurring concepts") {
  const Corpus& c = fixture3();
  TfIdfTable t = compute_tfidf(c);
  ConceptPackage pkg = default_concept_package();
  for (const auto& r : c.reports) {
    WeightVector w = concept_weights(r.id, t, pkg, c);
    std::size_t positive = 0;
    for (double x : w.s)
      if (x > 0) ++positive;
    std::size_t occurring = 0;
    for (const auto& entry : pkg.concepts) {
      std::string joined;
      for (const auto& tok : entry.name) joined += tok + " ";
      std::string text;
      for (const auto& tok : r.tokens) text += tok + " ";
      if (text.find(joined) != std::string::npos) ++occurring;
    }
    CHECK(positive <= occurring);
  }
}
