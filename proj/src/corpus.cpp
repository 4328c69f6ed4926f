#include "kift/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"

using nlohmann::json;

namespace kift {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split: " + s);
}

static bool is_deid_placeholder(const std::string& tok) {
  if (tok.size() < 3) return false;
  return std::all_of(tok.begin(), tok.end(), [](char c) { return c == 'x'; });
}

std::vector<std::string> tokenize(const std::string& text, const TokenizerConfig& config) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (!(config.drop_deid && is_deid_placeholder(cur))) out.push_back(cur);
    cur.clear();
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '.') {
      // Sentence-final period (followed by whitespace or end) becomes its own
      // token; any other period is treated as plain punctuation.
      bool final_pos = (i + 1 == n) || std::isspace(static_cast<unsigned char>(text[i + 1]));
      flush();
      if (final_pos) out.push_back(".");
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

static Vocab build_vocab(const std::vector<Report>& reports, int min_freq) {
  std::map<std::string, int> freq;  // ordered map keeps index assignment stable
  for (const auto& r : reports) {
    if (r.split != Split::train) continue;
    for (const auto& t : r.tokens) ++freq[t];
  }
  Vocab v;
  v.tokens = {"<pad>", "<s>", "</s>", "<unk>"};
  for (const auto& [tok, n] : freq) {
    if (n < min_freq) continue;
    v.index[tok] = static_cast<int>(v.tokens.size());
    v.tokens.push_back(tok);
  }
  return v;
}

const Report& Corpus::report(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw DataError("unknown report id: " + id);
  return reports[it->second];
}

std::vector<std::size_t> Corpus::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < reports.size(); ++i)
    if (reports[i].split == s) out.push_back(i);
  return out;
}

Corpus build_corpus(std::vector<Report> reports, const TokenizerConfig& config) {
  Corpus c;
  c.config = config;
  c.reports = std::move(reports);
  for (std::size_t i = 0; i < c.reports.size(); ++i) {
    auto& r = c.reports[i];
    r.tokens = tokenize(r.text, config);
    if (!c.by_id.emplace(r.id, i).second)
      throw DataError("duplicate report id: " + r.id);
  }
  c.vocab = build_vocab(c.reports, config.min_freq);
  return c;
}

static FeatureSource parse_feature_source(const json& j) {
  FeatureSource fs;
  if (j.contains("path")) {
    fs.kind = FeatureSource::Kind::path;
    fs.path = j.at("path").get<std::string>();
  } else if (j.contains("seed")) {
    fs.kind = FeatureSource::Kind::seed;
    fs.seed = j.at("seed").get<std::uint64_t>();
  } else {
    throw DataError("feature_source needs \"path\" or \"seed\"");
  }
  return fs;
}

Corpus load_corpus(const std::string& path, const TokenizerConfig& config) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<Report> reports;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      Report r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.feature_source = parse_feature_source(j.at("feature_source"));
      reports.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed line: " + e.what());
    }
  }
  return build_corpus(std::move(reports), config);
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  for (const auto& r : corpus.reports) {
    json fs;
    if (r.feature_source.kind == FeatureSource::Kind::path)
      fs = {{"path", r.feature_source.path}};
    else
      fs = {{"seed", r.feature_source.seed}};
    json j = {{"id", r.id}, {"text", r.text}, {"split", split_name(r.split)},
              {"feature_source", fs}};
    out << j.dump() << '\n';
  }
}

void assign_splits(std::vector<Report>& reports, std::uint64_t seed,
                   double train_ratio, double val_ratio) {
  std::vector<std::size_t> order(reports.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = reports.size();
  const auto n_train = static_cast<std::size_t>(train_ratio * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(val_ratio * static_cast<double>(n));
  for (std::size_t pos = 0; pos < n; ++pos) {
    Split s = pos < n_train              ? Split::train
              : pos < n_train + n_val    ? Split::val
                                         : Split::test;
    reports[order[pos]].split = s;
  }
}

Matrix synth_image_features(std::uint64_t seed, std::size_t n_patches, std::size_t d) {
  if (n_patches < 1 || d < 1) throw ShapeError("synth_image_features: n_patches and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(n_patches, d);
  for (auto& x : m.data) x = dist(rng);
  return m;
}

Matrix image_features(const Report& r, std::size_t n_patches, std::size_t d) {
  if (r.feature_source.kind == FeatureSource::Kind::path) {
    Matrix m = load_matrix(r.feature_source.path);
    if (m.cols != d)
      throw ShapeError("feature file " + r.feature_source.path + " has dim " +
                       std::to_string(m.cols) + ", expected " + std::to_string(d));
    return m;
  }
  return synth_image_features(r.feature_source.seed, n_patches, d);
}

}  // namespace kift
