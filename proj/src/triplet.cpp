#include "kift/triplet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"

using nlohmann::json;

namespace kift {

static std::vector<std::string> split_words(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

static std::string join_words(const std::vector<std::string>& w) {
  std::string out;
  for (const auto& t : w) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Lexicons default_lexicons() {
  Lexicons lex;
  for (const auto& c : default_concept_package().concepts)
    lex.entities.emplace_back(c.name, c.category);
  static const char* positions[] = {
      "lung", "lungs", "left lung", "right lung", "lung bases", "left base", "right base",
      "heart", "cardiac silhouette", "mediastinum", "mediastinal contour",
      "right lower lobe", "left lower lobe", "right upper lobe", "left upper lobe",
      "right middle lobe", "lingula", "costophrenic angle", "costophrenic angles",
      "diaphragm", "hemidiaphragm", "right hemidiaphragm", "left hemidiaphragm",
      "pleural space", "pleura", "chest wall", "trachea", "spine", "thoracic spine",
      "bony structures", "pulmonary vasculature", "aorta", "aortic knob", "hila",
      "hilum", "apex", "apices", "rib", "ribs", "clavicle", "sternum", "soft tissues"};
  for (const char* p : positions) lex.positions.push_back(split_words(p));
  static const char* cues[] = {"no", "without", "free of", "negative for", "absence of",
                               "not", "no evidence of", "rather than"};
  for (const char* c : cues) lex.negation_cues.push_back(split_words(c));
  return lex;
}

static void validate_lexicons(const Lexicons& lex) {
  if (lex.entities.empty() || lex.positions.empty() || lex.negation_cues.empty())
    throw DataError("lexicons must be non-empty");
  std::set<std::string> pos;
  for (const auto& p : lex.positions) pos.insert(join_words(p));
  for (const auto& [e, cat] : lex.entities) {
    (void)cat;
    if (pos.count(join_words(e)))
      throw DataError("lexicon entry is both entity and position: " + join_words(e));
  }
}

Lexicons load_lexicons(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicons: " + path);
  json j;
  in >> j;
  Lexicons lex;
  for (const auto& e : j.at("entities")) {
    auto cat = e.at("category").get<std::string>();
    ConceptCategory c = cat == "adjective" ? ConceptCategory::adjective : ConceptCategory::noun;
    lex.entities.emplace_back(split_words(e.at("name").get<std::string>()), c);
  }
  for (const auto& p : j.at("positions")) lex.positions.push_back(split_words(p.get<std::string>()));
  for (const auto& c : j.at("negation_cues"))
    lex.negation_cues.push_back(split_words(c.get<std::string>()));
  if (j.contains("scope_breakers")) {
    lex.scope_breakers.clear();
    for (const auto& b : j.at("scope_breakers")) lex.scope_breakers.push_back(b.get<std::string>());
  }
  if (j.contains("negation_window")) lex.negation_window = j.at("negation_window").get<std::size_t>();
  validate_lexicons(lex);
  return lex;
}

void save_lexicons(const Lexicons& lex, const std::string& path) {
  json j;
  j["entities"] = json::array();
  for (const auto& [name, cat] : lex.entities)
    j["entities"].push_back({{"name", join_words(name)},
                             {"category", cat == ConceptCategory::noun ? "noun" : "adjective"}});
  j["positions"] = json::array();
  for (const auto& p : lex.positions) j["positions"].push_back(join_words(p));
  j["negation_cues"] = json::array();
  for (const auto& c : lex.negation_cues) j["negation_cues"].push_back(join_words(c));
  j["scope_breakers"] = lex.scope_breakers;
  j["negation_window"] = lex.negation_window;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  out << j.dump(2) << '\n';
}

static bool match_at(const std::vector<std::string>& tokens, std::size_t i,
                     const std::vector<std::string>& seq) {
  if (i + seq.size() > tokens.size()) return false;
  for (std::size_t j = 0; j < seq.size(); ++j)
    if (tokens[i + j] != seq[j]) return false;
  return true;
}

Existence detect_negation(const std::vector<std::string>& sentence,
                          std::size_t span_begin, std::size_t span_end,
                          const Lexicons& lex) {
  if (span_end > sentence.size() || span_begin >= span_end)
    throw DataError("detect_negation: span out of range");
  for (std::size_t i = 0; i < span_begin; ++i) {
    for (const auto& cue : lex.negation_cues) {
      if (!match_at(sentence, i, cue)) continue;
      const std::size_t cue_end = i + cue.size();
      if (cue_end > span_begin) continue;
      if (span_begin - cue_end > lex.negation_window) continue;
      bool broken = false;
      for (std::size_t j = cue_end; j < span_begin && !broken; ++j)
        for (const auto& b : lex.scope_breakers)
          if (sentence[j] == b) { broken = true; break; }
      if (!broken) return Existence::absent;
    }
  }
  return Existence::exist;
}

namespace {

struct TaggedSpan {
  std::size_t begin, end;
  bool is_entity;
  ConceptCategory category;  // entities only
};

// Greedy leftmost-longest tagging over both lexicons.
std::vector<TaggedSpan> tag_sentence(const std::vector<std::string>& sent, const Lexicons& lex) {
  std::vector<TaggedSpan> spans;
  std::size_t i = 0;
  while (i < sent.size()) {
    std::size_t best_len = 0;
    bool best_entity = false;
    ConceptCategory best_cat = ConceptCategory::noun;
    for (const auto& [name, cat] : lex.entities)
      if (name.size() > best_len && match_at(sent, i, name)) {
        best_len = name.size();
        best_entity = true;
        best_cat = cat;
      }
    for (const auto& p : lex.positions)
      if (p.size() > best_len && match_at(sent, i, p)) {
        best_len = p.size();
        best_entity = false;
      }
    if (best_len == 0) {
      ++i;
      continue;
    }
    spans.push_back({i, i + best_len, best_entity, best_cat});
    i += best_len;
  }
  return spans;
}

}  // namespace

std::vector<Triplet> extract_triplets(const std::vector<std::string>& tokens,
                                      const Lexicons& lex) {
  std::vector<Triplet> out;
  std::size_t sent_begin = 0;
  auto process = [&](std::size_t begin, std::size_t end) {
    if (begin >= end) return;
    std::vector<std::string> sent(tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(end));
    auto spans = tag_sentence(sent, lex);
    for (const auto& sp : spans) {
      if (!sp.is_entity) continue;
      // Nearest position span in the same sentence, by span-start distance.
      const TaggedSpan* nearest = nullptr;
      std::size_t best_dist = 0;
      for (const auto& other : spans) {
        if (other.is_entity) continue;
        std::size_t dist = other.begin > sp.begin ? other.begin - sp.begin
                                                  : sp.begin - other.begin;
        if (!nearest || dist < best_dist) {
          nearest = &other;
          best_dist = dist;
        }
      }
      Triplet t;
      t.entity.assign(sent.begin() + static_cast<std::ptrdiff_t>(sp.begin),
                      sent.begin() + static_cast<std::ptrdiff_t>(sp.end));
      t.category = sp.category;
      if (nearest)
        t.position.assign(sent.begin() + static_cast<std::ptrdiff_t>(nearest->begin),
                          sent.begin() + static_cast<std::ptrdiff_t>(nearest->end));
      t.exist = detect_negation(sent, sp.begin, sp.end, lex);
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    }
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == ".") {
      process(sent_begin, i);
      sent_begin = i + 1;
    }
  }
  process(sent_begin, tokens.size());
  return out;
}

std::vector<Triplet> extract_triplets(const Report& report, const Lexicons& lex) {
  return extract_triplets(report.tokens, lex);
}

std::string render_prompt(const Triplet& t) {
  if (t.entity.empty()) throw DataError("render_prompt: empty entity");
  const std::string entity = join_words(t.entity);
  if (t.exist == Existence::absent) return "no " + entity;
  if (!t.position.empty()) {
    const std::string position = join_words(t.position);
    if (t.category == ConceptCategory::adjective) return position + " is " + entity;
    return entity + " is located at " + position;
  }
  return entity + " is present";
}

std::vector<std::string> collect_prompts(
    const std::vector<std::vector<Triplet>>& per_report_triplets, std::size_t max_triplets) {
  std::vector<std::string> prompts;
  std::set<std::string> seen;
  for (const auto& triplets : per_report_triplets) {
    for (const auto& t : triplets) {
      std::string p = render_prompt(t);
      if (!seen.insert(p).second) continue;
      prompts.push_back(std::move(p));
      if (prompts.size() >= max_triplets) return prompts;
    }
  }
  return prompts;
}

Matrix encode_triplets(const std::vector<std::vector<Triplet>>& per_report_triplets,
                       const PromptEncoder& encoder, std::size_t d,
                       std::size_t max_triplets) {
  auto prompts = collect_prompts(per_report_triplets, max_triplets);
  if (prompts.empty()) {
    // Constant unit null row.
    Matrix m(1, d, 1.0 / std::sqrt(static_cast<double>(d)));
    return m;
  }
  Matrix m(prompts.size(), d);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto v = encoder(prompts[i]);
    if (v.size() != d)
      throw ShapeError("encode_triplets: encoder returned dim " + std::to_string(v.size()) +
                       ", expected " + std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) m.at(i, j) = v[j];
  }
  return m;
}

}  // namespace kift
