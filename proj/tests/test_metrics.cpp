#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>

#include "kift/common.hpp"
#include "kift/metrics.hpp"

using namespace kift;

namespace {

TokenSeq toks(const std::string& s) {
  TokenSeq out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Joined-string n-gram counts, independent of the library's representation.
std::unordered_map<std::string, double> gram_counts(const TokenSeq& t, std::size_t n) {
  std::unordered_map<std::string, double> out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) key += t[i + j] + "\x1f";
    out[key] += 1.0;
  }
  return out;
}

// Naive re-derivation of corpus CIDEr: count*idf vectors, cosine per order,
// idf = log N - log(max(df, 1)) with df over the reference corpus.
double cider_oracle(const std::vector<TokenSeq>& cands, const std::vector<TokenSeq>& refs) {
  const double log_n = std::log(static_cast<double>(refs.size()));
  double total = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::unordered_map<std::string, double> df;
    for (const auto& r : refs)
      for (const auto& [g, c] : gram_counts(r, n)) {
        (void)c;
        df[g] += 1.0;
      }
    auto idf = [&](const std::string& g) {
      auto it = df.find(g);
      return log_n - std::log(std::max(1.0, it == df.end() ? 1.0 : it->second));
    };
    for (std::size_t s = 0; s < cands.size(); ++s) {
      auto cg = gram_counts(cands[s], n);
      auto rg = gram_counts(refs[s], n);
      double dot = 0, nc = 0, nr = 0;
      for (const auto& [g, c] : cg) {
        nc += c * idf(g) * c * idf(g);
        auto it = rg.find(g);
        if (it != rg.end()) dot += c * idf(g) * it->second * idf(g);
      }
      for (const auto& [g, c] : rg) nr += c * idf(g) * c * idf(g);
      if (nc > 0 && nr > 0) total += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
  }
  return 10.0 * total / (4.0 * static_cast<double>(cands.size()));
}

std::vector<TokenSeq> random_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words{"the", "lungs", "are", "clear", "no", "effusion",
                                             "heart", "is", "normal", "right", "left", "."};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(3, 12), pick(0, words.size() - 1);
  std::vector<TokenSeq> out;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSeq t;
    const std::size_t l = len(rng);
    for (std::size_t j = 0; j < l; ++j) t.push_back(words[pick(rng)]);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_CASE("identical corpora score perfectly on n-gram overlap") {
  std::vector<TokenSeq> c{toks("the lungs are clear ."), toks("no acute disease is seen .")};
  for (int n = 1; n <= 4; ++n) CHECK(bleu_n(c, c, n) == 1.0);
  CHECK(rouge_l(c, c) == doctest::Approx(1.0).epsilon(1e-12));
  // Exact-match alignment of a sequence onto itself is one chunk of m matches.
  double expected = 0;
  for (const auto& t : c) {
    const double m = static_cast<double>(t.size());
    expected += 1.0 - 0.5 / (m * m * m);
  }
  expected /= static_cast<double>(c.size());
  CHECK(meteor_exact(c, c) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("unigram precision is clipped by reference counts") {
  // Candidate repeats "the" 4 times; the reference licenses only 2 of them.
  std::vector<TokenSeq> cand{toks("the the the the")};
  std::vector<TokenSeq> ref{toks("a the b the")};
  CHECK(bleu_n(cand, ref, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("brevity penalty for short candidates") {
  std::vector<TokenSeq> cand{toks("a b")};
  std::vector<TokenSeq> ref{toks("a b c d")};
  CHECK(bleu_n(cand, ref, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  // Long candidates are not rewarded beyond precision.
  std::vector<TokenSeq> cand2{toks("a b c d e f")};
  CHECK(bleu_n(cand2, ref, 1) == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("zero precision at any order gives zero without smoothing") {
  std::vector<TokenSeq> cand{toks("a b c d")};
  std::vector<TokenSeq> ref{toks("a x b y c z d")};  // unigrams match, no bigram does
  CHECK(bleu_n(cand, ref, 1) > 0.0);
  CHECK(bleu_n(cand, ref, 2) == 0.0);
  CHECK(bleu_n(cand, ref, 4) == 0.0);
}

TEST_CASE("bleu improves when a token is corrected") {
  std::vector<TokenSeq> ref{toks("the lungs are clear")};
  std::vector<TokenSeq> worse{toks("the lungs are foggy")};
  std::vector<TokenSeq> better{toks("the lungs are clear")};
  CHECK(bleu_n(better, ref, 1) > bleu_n(worse, ref, 1));
}

TEST_CASE("lcs f-measure hand cases") {
  // Swapped pair: LCS 1, P = R = 0.5, and the beta-weighted F collapses to 0.5.
  std::vector<TokenSeq> cand{toks("b a")};
  std::vector<TokenSeq> ref{toks("a b")};
  CHECK(rouge_l(cand, ref) == doctest::Approx(0.5).epsilon(1e-12));

  // Subsequence case checked against the explicit formula.
  std::vector<TokenSeq> cand2{toks("a b c")};
  std::vector<TokenSeq> ref2{toks("a x b y c")};
  const double p = 3.0 / 3.0, r = 3.0 / 5.0, b2 = 1.2 * 1.2;
  const double want = (1 + b2) * p * r / (r + b2 * p);
  CHECK(rouge_l(cand2, ref2) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("fully scrambled bigrams halve the exact-match meteor score") {
  // All words match but form two chunks: penalty = 0.5 * (2/2)^3 = 0.5.
  std::vector<TokenSeq> cand{toks("b a")};
  std::vector<TokenSeq> ref{toks("a b")};
  CHECK(meteor_exact(cand, ref) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("meteor favors recall and counts chunks") {
  // cand "a b" vs ref "a b c": m=2, P=1, R=2/3, one chunk.
  std::vector<TokenSeq> cand{toks("a b")};
  std::vector<TokenSeq> ref{toks("a b c")};
  const double p = 1.0, r = 2.0 / 3.0;
  const double fmean = 10 * p * r / (r + 9 * p);
  const double penalty = 0.5 * std::pow(1.0 / 2.0, 3);
  CHECK(meteor_exact(cand, ref) == doctest::Approx(fmean * (1 - penalty)).epsilon(1e-12));
}

TEST_CASE("cider matches a naive reimplementation") {
  std::vector<TokenSeq> refs{toks("the lungs are clear . no effusion is seen ."),
                             toks("there is a small right effusion ."),
                             toks("heart size is normal . the lungs are clear .")};
  std::vector<TokenSeq> cands{toks("the lungs are clear ."),
                              toks("there is a right effusion ."),
                              toks("the heart is normal .")};
  CHECK(cider(cands, refs) == doctest::Approx(cider_oracle(cands, refs)).epsilon(1e-9));

  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto c = random_corpus(5, 1000 + trial);
    auto r = random_corpus(5, 2000 + trial);
    CHECK(cider(c, r) == doctest::Approx(cider_oracle(c, r)).epsilon(1e-9));
  }
}

TEST_CASE("disjoint vocabularies score zero everywhere") {
  std::vector<TokenSeq> cand{toks("p q r s"), toks("t u v w")};
  std::vector<TokenSeq> ref{toks("a b c d"), toks("e f g h")};
  for (int n = 1; n <= 4; ++n) CHECK(bleu_n(cand, ref, n) == 0.0);
  CHECK(rouge_l(cand, ref) == 0.0);
  CHECK(meteor_exact(cand, ref) == 0.0);
  CHECK(cider(cand, ref) == 0.0);
}

TEST_CASE("metric error handling") {
  std::vector<TokenSeq> empty;
  std::vector<TokenSeq> one{toks("a b")};
  CHECK_THROWS_AS(bleu_n(empty, empty, 1), DataError);
  CHECK_THROWS_AS(bleu_n(one, empty, 1), DataError);
  CHECK_THROWS_AS(bleu_n(one, one, 0), DataError);
  CHECK_THROWS_AS(bleu_n(one, one, 5), DataError);
  CHECK_THROWS_AS(rouge_l(empty, empty), DataError);
  CHECK_THROWS_AS(meteor_exact(empty, empty), DataError);
  CHECK_THROWS_AS(cider(one, one), DataError);  // idf needs >= 2 samples
}

TEST_CASE("scores are invariant to sample order") {
  auto cands = random_corpus(8, 7);
  auto refs = random_corpus(8, 8);
  auto report = evaluate_all(cands, refs);
  std::vector<std::size_t> perm{5, 2, 7, 0, 3, 6, 1, 4};
  std::vector<TokenSeq> pc, pr;
  for (auto i : perm) {
    pc.push_back(cands[i]);
    pr.push_back(refs[i]);
  }
  auto permuted = evaluate_all(pc, pr);
  for (int n = 0; n < 4; ++n)
    CHECK(report.bleu[n] == doctest::Approx(permuted.bleu[n]).epsilon(1e-12));
  CHECK(report.rouge_l == doctest::Approx(permuted.rouge_l).epsilon(1e-12));
  CHECK(report.meteor == doctest::Approx(permuted.meteor).epsilon(1e-12));
  CHECK(report.cider == doctest::Approx(permuted.cider).epsilon(1e-12));
}

TEST_CASE("all scores stay in range on random corpora") {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    auto c = random_corpus(6, 300 + trial);
    auto r = random_corpus(6, 400 + trial);
    auto rep = evaluate_all(c, r);
    for (int n = 0; n < 4; ++n) {
      CHECK(rep.bleu[n] >= 0.0);
      CHECK(rep.bleu[n] <= 1.0);
    }
    CHECK(rep.rouge_l >= 0.0);
    CHECK(rep.rouge_l <= 1.0);
    CHECK(rep.meteor >= 0.0);
    CHECK(rep.meteor <= 1.0);
    CHECK(rep.cider >= 0.0);
    CHECK(rep.cider <= 10.0 + 1e-9);
    CHECK(rep.n_samples == 6);
  }
}
