#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kift/matrix_io.hpp"

namespace kift {

enum class Split { train, val, test };

std::string split_name(Split s);
Split parse_split(const std::string& s);  // throws DataError

struct TokenizerConfig {
  bool drop_deid = true;   // drop de-identification placeholders (runs of 3+ 'x')
  int min_freq = 3;        // vocab threshold, counted on the train split
};

// A report's image features come either from a KIFT file on disk or from the
// deterministic synthetic generator.
struct FeatureSource {
  enum class Kind { path, seed } kind = Kind::seed;
  std::string path;
  std::uint64_t seed = 0;
};

struct Report {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  Split split = Split::train;
  FeatureSource feature_source;
};

struct Vocab {
  static constexpr int pad = 0;
  static constexpr int start = 1;
  static constexpr int end = 2;
  static constexpr int unk = 3;

  std::unordered_map<std::string, int> index;  // token -> id, ids >= 4
  std::vector<std::string> tokens;             // id -> token, includes reserved

  int size() const { return static_cast<int>(tokens.size()); }
  int lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? unk : it->second;
  }
};

struct Corpus {
  std::vector<Report> reports;
  Vocab vocab;
  TokenizerConfig config;
  std::unordered_map<std::string, std::size_t> by_id;  // id -> index in reports

  const Report& report(const std::string& id) const;  // throws DataError
  std::vector<std::size_t> split_indices(Split s) const;
};

// Lowercase, strip punctuation, keep sentence-final periods as "." tokens,
// optionally drop de-identification placeholders.
std::vector<std::string> tokenize(const std::string& text, const TokenizerConfig& config);

// JSON-lines {id, text, split, feature_source: {"path": ...} | {"seed": ...}}.
Corpus load_corpus(const std::string& path, const TokenizerConfig& config);
void save_corpus(const Corpus& corpus, const std::string& path);

// Build a Corpus from in-memory reports (tokenizes and builds the vocab).
Corpus build_corpus(std::vector<Report> reports, const TokenizerConfig& config);

// Assign train/val/test splits 7:1:2 with a seeded shuffle.
void assign_splits(std::vector<Report>& reports, std::uint64_t seed,
                   double train_ratio = 0.7, double val_ratio = 0.1);

// Deterministic stand-in for a CNN visual extractor: entries uniform in [-1,1].
Matrix synth_image_features(std::uint64_t seed, std::size_t n_patches, std::size_t d);

// Resolve a report's feature matrix (load from disk or synthesize).
Matrix image_features(const Report& r, std::size_t n_patches, std::size_t d);

std::string detokenize(const std::vector<std::string>& tokens);

}  // namespace kift
