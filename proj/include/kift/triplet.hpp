#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kift/corpus.hpp"
#include "kift/matrix_io.hpp"
#include "kift/wck.hpp"

namespace kift {

enum class Existence { exist, absent };

struct Triplet {
  std::vector<std::string> entity;    // non-empty token sequence
  ConceptCategory category = ConceptCategory::noun;
  std::vector<std::string> position;  // empty when no anatomical span applies
  Existence exist = Existence::exist;

  bool operator==(const Triplet& o) const {
    return entity == o.entity && category == o.category && position == o.position &&
           exist == o.exist;
  }
};

struct Lexicons {
  // entity token-sequence -> grammatical category
  std::vector<std::pair<std::vector<std::string>, ConceptCategory>> entities;
  // anatomical token sequences
  std::vector<std::vector<std::string>> positions;
  // negation trigger token sequences
  std::vector<std::vector<std::string>> negation_cues;
  // tokens that end a negation scope
  std::vector<std::string> scope_breakers{"but", ";"};
  std::size_t negation_window = 6;  // tokens between cue end and entity start
};

Lexicons default_lexicons();
Lexicons load_lexicons(const std::string& path);
void save_lexicons(const Lexicons& lex, const std::string& path);

// True when a cue precedes [span_begin, span_end) within the scope window and
// no scope breaker intervenes.
Existence detect_negation(const std::vector<std::string>& sentence,
                          std::size_t span_begin, std::size_t span_end,
                          const Lexicons& lex);

// Longest-match lexicon tagging per sentence, nearest-position pairing,
// NegEx-style existence flags, text order, duplicates removed.
std::vector<Triplet> extract_triplets(const Report& report, const Lexicons& lex);
std::vector<Triplet> extract_triplets(const std::vector<std::string>& tokens,
                                      const Lexicons& lex);

// One of: "no [entity]", "[position] is [entity]",
// "[entity] is located at [position]", "[entity] is present" (fallback).
std::string render_prompt(const Triplet& t);

// One row per unique rendered prompt across the retrieved reports, in
// first-occurrence order, capped at max_triplets. Zero triplets yield a single
// constant null row so downstream attention stays well-defined.
using PromptEncoder = std::function<std::vector<double>(const std::string&)>;
Matrix encode_triplets(const std::vector<std::vector<Triplet>>& per_report_triplets,
                       const PromptEncoder& encoder, std::size_t d,
                       std::size_t max_triplets = 32);

// Unique prompts in first-occurrence order (pre-encoding view, same cap rules).
std::vector<std::string> collect_prompts(
    const std::vector<std::vector<Triplet>>& per_report_triplets,
    std::size_t max_triplets = 32);

}  // namespace kift
