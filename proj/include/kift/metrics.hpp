#pragma once

#include <string>
#include <vector>

namespace kift {

using TokenSeq = std::vector<std::string>;

struct MetricReport {
  double bleu[4] = {0, 0, 0, 0};  // BLEU-1..4
  double rouge_l = 0;
  double meteor = 0;
  double cider = 0;
  std::size_t n_samples = 0;
};

// Corpus-level BLEU-n: clipped n-gram precisions, geometric mean over 1..n,
// brevity penalty exp(1 - r/c) for short candidates. No smoothing.
double bleu_n(const std::vector<TokenSeq>& candidates,
              const std::vector<TokenSeq>& references, int n);

// LCS F-measure with beta = 1.2, averaged over samples.
double rouge_l(const std::vector<TokenSeq>& candidates,
               const std::vector<TokenSeq>& references);

// Exact-match METEOR: Fmean = 10PR/(R+9P), penalty = 0.5*(chunks/matches)^3.
double meteor_exact(const std::vector<TokenSeq>& candidates,
                    const std::vector<TokenSeq>& references);

// Plain CIDEr: n-gram TF-IDF cosine (n = 1..4), mean over n, x10, averaged.
// Needs >= 2 samples for a meaningful IDF.
double cider(const std::vector<TokenSeq>& candidates,
             const std::vector<TokenSeq>& references);

MetricReport evaluate_all(const std::vector<TokenSeq>& candidates,
                          const std::vector<TokenSeq>& references);

}  // namespace kift
