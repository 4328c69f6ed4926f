#include "kift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "kift/common.hpp"

namespace kift {

namespace {

void require_corpus(const std::vector<TokenSeq>& candidates,
                    const std::vector<TokenSeq>& references) {
  if (candidates.empty()) throw DataError("metrics: empty corpus");
  if (candidates.size() != references.size())
    throw DataError("metrics: " + std::to_string(candidates.size()) + " candidates vs " +
                    std::to_string(references.size()) + " references");
}

using NgramCounts = std::map<TokenSeq, std::size_t>;

NgramCounts ngrams(const TokenSeq& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++out[TokenSeq(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

}  // namespace

double bleu_n(const std::vector<TokenSeq>& candidates,
              const std::vector<TokenSeq>& references, int n) {
  require_corpus(candidates, references);
  if (n < 1 || n > 4) throw DataError("bleu_n: n must be in 1..4");
  double cand_len = 0, ref_len = 0;
  double log_sum = 0;
  for (int order = 1; order <= n; ++order) {
    std::size_t clipped = 0, total = 0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      auto cg = ngrams(candidates[s], static_cast<std::size_t>(order));
      auto rg = ngrams(references[s], static_cast<std::size_t>(order));
      for (const auto& [gram, count] : cg) {
        total += count;
        auto it = rg.find(gram);
        if (it != rg.end()) clipped += std::min(count, it->second);
      }
    }
    if (total == 0 || clipped == 0) return 0.0;  // zero precision, log-space convention
    log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total)) /
               static_cast<double>(n);
  }
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    cand_len += static_cast<double>(candidates[s].size());
    ref_len += static_cast<double>(references[s].size());
  }
  if (cand_len == 0) return 0.0;
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum);
}

static std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::vector<TokenSeq>& candidates,
               const std::vector<TokenSeq>& references) {
  require_corpus(candidates, references);
  constexpr double beta = 1.2;
  double total = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& c = candidates[s];
    const auto& r = references[s];
    if (c.empty() || r.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(c, r));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(c.size());
    const double rec = lcs / static_cast<double>(r.size());
    total += (1.0 + beta * beta) * p * rec / (rec + beta * beta * p);
  }
  return total / static_cast<double>(candidates.size());
}

namespace {

// Exact unigram alignment: maximal match count (per-word min counts), then a
// greedy chunk-minimizing assignment of candidate matches to reference slots.
struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

Alignment align_exact(const TokenSeq& cand, const TokenSeq& ref) {
  std::unordered_map<std::string, std::size_t> cand_count, budget;
  for (const auto& w : cand) ++cand_count[w];
  std::unordered_map<std::string, std::size_t> ref_count;
  for (const auto& w : ref) ++ref_count[w];
  for (const auto& [w, cc] : cand_count) {
    auto it = ref_count.find(w);
    if (it != ref_count.end()) budget[w] = std::min(cc, it->second);
  }
  Alignment a;
  std::vector<char> used(ref.size(), 0);
  std::ptrdiff_t prev = -2;  // last matched reference index
  for (const auto& w : cand) {
    auto it = budget.find(w);
    if (it == budget.end() || it->second == 0) continue;
    std::ptrdiff_t chosen = -1;
    const std::size_t follow = static_cast<std::size_t>(prev + 1);
    if (prev >= -1 && follow < ref.size() && !used[follow] && ref[follow] == w) {
      chosen = static_cast<std::ptrdiff_t>(follow);
    } else {
      for (std::size_t j = 0; j < ref.size(); ++j)
        if (!used[j] && ref[j] == w) { chosen = static_cast<std::ptrdiff_t>(j); break; }
    }
    if (chosen < 0) continue;
    used[static_cast<std::size_t>(chosen)] = 1;
    --it->second;
    ++a.matches;
    if (chosen != prev + 1) ++a.chunks;
    prev = chosen;
  }
  return a;
}

}  // namespace

double meteor_exact(const std::vector<TokenSeq>& candidates,
                    const std::vector<TokenSeq>& references) {
  require_corpus(candidates, references);
  double total = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& c = candidates[s];
    const auto& r = references[s];
    if (c.empty() || r.empty()) continue;
    Alignment a = align_exact(c, r);
    if (a.matches == 0) continue;
    const double m = static_cast<double>(a.matches);
    const double p = m / static_cast<double>(c.size());
    const double rec = m / static_cast<double>(r.size());
    const double fmean = 10.0 * p * rec / (rec + 9.0 * p);
    const double frag = static_cast<double>(a.chunks) / m;
    const double penalty = 0.5 * frag * frag * frag;
    total += fmean * (1.0 - penalty);
  }
  return total / static_cast<double>(candidates.size());
}

double cider(const std::vector<TokenSeq>& candidates,
             const std::vector<TokenSeq>& references) {
  require_corpus(candidates, references);
  if (candidates.size() < 2) throw DataError("cider: needs a corpus of at least 2 samples");
  const double log_n = std::log(static_cast<double>(references.size()));
  double total = 0;
  for (std::size_t order = 1; order <= 4; ++order) {
    // Document frequencies over the reference corpus.
    std::map<TokenSeq, std::size_t> df;
    for (const auto& r : references)
      for (const auto& [gram, count] : ngrams(r, order)) {
        (void)count;
        ++df[gram];
      }
    auto idf = [&](const TokenSeq& gram) {
      auto it = df.find(gram);
      const double d = it == df.end() ? 1.0 : std::max<double>(1.0, static_cast<double>(it->second));
      return log_n - std::log(d);
    };
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      auto cg = ngrams(candidates[s], order);
      auto rg = ngrams(references[s], order);
      double dot = 0, nc = 0, nr = 0;
      for (const auto& [gram, count] : cg) {
        const double w = static_cast<double>(count) * idf(gram);
        nc += w * w;
        auto it = rg.find(gram);
        if (it != rg.end()) dot += w * static_cast<double>(it->second) * idf(gram);
      }
      for (const auto& [gram, count] : rg) {
        const double w = static_cast<double>(count) * idf(gram);
        nr += w * w;
      }
      if (nc > 0 && nr > 0) total += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
  }
  return 10.0 * total / (4.0 * static_cast<double>(candidates.size()));
}

MetricReport evaluate_all(const std::vector<TokenSeq>& candidates,
                          const std::vector<TokenSeq>& references) {
  MetricReport r;
  r.n_samples = candidates.size();
  for (int n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu_n(candidates, references, n);
  r.rouge_l = rouge_l(candidates, references);
  r.meteor = meteor_exact(candidates, references);
  r.cider = cider(candidates, references);
  return r;
}

}  // namespace kift
