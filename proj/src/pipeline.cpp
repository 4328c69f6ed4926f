#include "kift/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"

using nlohmann::json;

namespace kift {

void AblationFlags::validate() const {
  if (use_weights && !use_concepts)
    throw ConfigError("use_weights requires use_concepts");
}

void PipelineConfig::validate() const {
  if (k < 1) throw ConfigError("k must be >= 1");
  flags.validate();
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = 5;  // filled in from the corpus vocabulary later
  m.validate();
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": bad config: " + e.what());
  }
  PipelineConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
  };
  get("corpus", c.corpus_path);
  get("concepts", c.concepts_path);
  get("lexicons", c.lexicons_path);
  get("embeddings", c.embeddings_path);
  get("checkpoint_dir", c.checkpoint_dir);
  get("out_dir", c.out_dir);
  get("k", c.k);
  get("seed", c.seed);
  get("max_triplets", c.max_triplets);
  get("epochs", c.epochs);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("decoupled_weight_decay", c.decoupled_weight_decay);
  get("clamp_weights", c.clamp_weights);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    auto getm = [&](const char* key, auto& field) {
      if (m.contains(key)) field = m.at(key).template get<std::decay_t<decltype(field)>>();
    };
    getm("d_model", c.model.d_model);
    getm("n_heads", c.model.n_heads);
    getm("n_layers", c.model.n_layers);
    getm("ffn_dim", c.model.ffn_dim);
    getm("max_len", c.model.max_len);
    getm("n_patches", c.model.n_patches);
    getm("mok_projections", c.model.mok_projections);
    getm("beam_width", c.model.beam_width);
  }
  if (j.contains("tokenizer")) {
    const auto& t = j.at("tokenizer");
    if (t.contains("drop_deid")) c.tokenizer.drop_deid = t.at("drop_deid").get<bool>();
    if (t.contains("min_freq")) c.tokenizer.min_freq = t.at("min_freq").get<int>();
  }
  if (j.contains("flags")) {
    const auto& f = j.at("flags");
    if (f.contains("use_concepts")) c.flags.use_concepts = f.at("use_concepts").get<bool>();
    if (f.contains("use_weights")) c.flags.use_weights = f.at("use_weights").get<bool>();
    if (f.contains("use_triplets")) c.flags.use_triplets = f.at("use_triplets").get<bool>();
  }
  return c;
}

std::string PipelineConfig::canonical_json() const {
  json j = {
      {"corpus", corpus_path},
      {"concepts", concepts_path},
      {"lexicons", lexicons_path},
      {"embeddings", embeddings_path},
      {"checkpoint_dir", checkpoint_dir},
      {"out_dir", out_dir},
      {"k", k},
      {"seed", seed},
      {"max_triplets", max_triplets},
      {"epochs", epochs},
      {"lr", lr},
      {"weight_decay", weight_decay},
      {"decoupled_weight_decay", decoupled_weight_decay},
      {"clamp_weights", clamp_weights},
      {"model",
       {{"d_model", model.d_model},
        {"n_heads", model.n_heads},
        {"n_layers", model.n_layers},
        {"ffn_dim", model.ffn_dim},
        {"max_len", model.max_len},
        {"n_patches", model.n_patches},
        {"mok_projections", model.mok_projections},
        {"beam_width", model.beam_width}}},
      {"tokenizer", {{"drop_deid", tokenizer.drop_deid}, {"min_freq", tokenizer.min_freq}}},
      {"flags",
       {{"use_concepts", flags.use_concepts},
        {"use_weights", flags.use_weights},
        {"use_triplets", flags.use_triplets}}}};
  return j.dump();
}

std::uint64_t PipelineConfig::hash() const { return fnv1a(canonical_json()); }

PipelineContext build_context(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx;
  ctx.corpus = load_corpus(config.corpus_path, config.tokenizer);
  ctx.concepts = config.concepts_path.empty() ? default_concept_package()
                                              : load_concept_package(config.concepts_path);
  ctx.lexicons = config.lexicons_path.empty() ? default_lexicons()
                                              : load_lexicons(config.lexicons_path);
  ctx.tfidf = compute_tfidf(ctx.corpus);
  const std::size_t d = config.model.d_model;
  ctx.concept_features = concept_embeddings(ctx.concepts, d);
  if (!config.embeddings_path.empty()) {
    EmbeddingStore all = load_embeddings(config.embeddings_path);
    if (all.dim() != d)
      throw DataError("embeddings dim " + std::to_string(all.dim()) + " does not match d_model " +
                      std::to_string(d));
    for (std::size_t i = 0; i < all.size(); ++i) {
      std::vector<double> row(all.dim());
      for (std::size_t j = 0; j < all.dim(); ++j) row[j] = all.matrix.at(i, j);
      ctx.embeddings[all.ids[i]] = std::move(row);
    }
    for (const auto& r : ctx.corpus.reports)
      if (!ctx.embeddings.count(r.id))
        throw DataError("embeddings file lacks id: " + r.id);
  } else {
    // Synthetic stand-in for the frozen retrieval tower.
    for (const auto& r : ctx.corpus.reports)
      ctx.embeddings[r.id] = synth_tokens_encode(r.tokens.empty()
                                                     ? std::vector<std::string>{"<empty>"}
                                                     : r.tokens,
                                                 d);
  }
  std::vector<std::string> train_ids;
  for (auto idx : ctx.corpus.split_indices(Split::train))
    train_ids.push_back(ctx.corpus.reports[idx].id);
  Matrix rows(train_ids.size(), d);
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    const auto& e = ctx.embeddings.at(train_ids[i]);
    for (std::size_t j = 0; j < d; ++j) rows.at(i, j) = e[j];
  }
  ctx.store = make_store(std::move(train_ids), std::move(rows));
  return ctx;
}

std::vector<std::string> retrieve_ids(const PipelineContext& ctx, const std::string& id,
                                      std::size_t k) {
  const Report& r = ctx.corpus.report(id);
  const auto& query = ctx.embeddings.at(id);
  const std::string exclude = r.split == Split::train ? id : "";
  auto result = topk(ctx.store, query, k, exclude);
  std::vector<std::string> ids;
  for (const auto& e : result.entries) ids.push_back(e.id);
  return ids;
}

Knowledge knowledge_for(const PipelineContext& ctx, const std::string& id,
                        const AblationFlags& flags, const PipelineConfig& config) {
  flags.validate();
  const Report& r = ctx.corpus.report(id);
  const std::size_t d = config.model.d_model;
  Knowledge kn;
  std::vector<std::string> retrieved;
  auto retrieved_ids = [&]() -> const std::vector<std::string>& {
    if (retrieved.empty()) retrieved = retrieve_ids(ctx, id, config.k);
    return retrieved;
  };
  if (flags.use_concepts) {
    WeightVector s;
    if (!flags.use_weights) {
      s.s.assign(ctx.concepts.count(), 1.0);  // unweighted concepts
    } else if (r.split == Split::train) {
      s = concept_weights(id, ctx.tfidf, ctx.concepts, ctx.corpus, config.clamp_weights);
    } else {
      s = merge_test_weights(retrieved_ids(), ctx.tfidf, ctx.concepts, ctx.corpus,
                             config.clamp_weights);
    }
    kn.k_c = weighted_concept_knowledge(ctx.concept_features, s);
  } else {
    kn.k_c = Matrix(1, d);  // zero knowledge: attention contributes nothing
  }
  if (flags.use_triplets) {
    std::vector<std::vector<Triplet>> per_report;
    for (const auto& rid : retrieved_ids())
      per_report.push_back(extract_triplets(ctx.corpus.report(rid), ctx.lexicons));
    kn.k_t = encode_triplets(
        per_report, [d](const std::string& p) { return synth_text_encode(p, d); }, d,
        config.max_triplets);
  } else {
    kn.k_t = Matrix(1, d);
  }
  return kn;
}

TrainSample make_sample(const PipelineContext& ctx, const std::string& id,
                        const AblationFlags& flags, const PipelineConfig& config) {
  const Report& r = ctx.corpus.report(id);
  TrainSample s;
  s.id = id;
  s.image = image_features(r, config.model.n_patches, config.model.d_model);
  Knowledge kn = knowledge_for(ctx, id, flags, config);
  s.k_c = std::move(kn.k_c);
  s.k_t = std::move(kn.k_t);
  s.target_ids = encode_report(r, ctx.corpus.vocab, config.model.max_len);
  return s;
}

GenerationOutput run_pipeline(const PipelineContext& ctx, const TransformerModel& model,
                              const std::string& id, const PipelineConfig& config) {
  TrainSample s = make_sample(ctx, id, config.flags, config);
  return model.generate(tensor_from(s.image), tensor_from(s.k_c), tensor_from(s.k_t),
                        ctx.corpus.vocab);
}

static std::vector<TrainSample> make_samples(const PipelineContext& ctx, Split split,
                                             const PipelineConfig& config) {
  std::vector<TrainSample> out;
  for (auto idx : ctx.corpus.split_indices(split))
    out.push_back(make_sample(ctx, ctx.corpus.reports[idx].id, config.flags, config));
  return out;
}

TrainResult train_pipeline(const PipelineContext& ctx, TransformerModel& model,
                           const PipelineConfig& config) {
  TrainConfig tc;
  tc.epochs = config.epochs;
  tc.adam.lr = config.lr;
  tc.adam.weight_decay = config.weight_decay;
  tc.adam.decoupled = config.decoupled_weight_decay;
  tc.seed = config.seed;
  tc.checkpoint_dir = config.checkpoint_dir;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    tc.log_path = config.out_dir + "/train_log.csv";
  }
  auto train = make_samples(ctx, Split::train, config);
  auto val = make_samples(ctx, Split::val, config);
  return train_model(model, train, val, tc);
}

EvalOutput evaluate_split(const PipelineContext& ctx, const TransformerModel& model,
                          Split split, const PipelineConfig& config) {
  EvalOutput out;
  for (auto idx : ctx.corpus.split_indices(split)) {
    const Report& r = ctx.corpus.reports[idx];
    auto gen = run_pipeline(ctx, model, r.id, config);
    out.ids.push_back(r.id);
    out.generated.push_back(tokenize(gen.text, config.tokenizer));
    out.references.push_back(r.tokens);
  }
  if (out.ids.empty()) throw DataError("evaluate_split: no reports in split");
  out.metrics = evaluate_all(out.generated, out.references);
  return out;
}

std::vector<std::pair<std::string, AblationFlags>> ablation_ladder() {
  return {{"Base", {false, false, false}},
          {"+Concepts", {true, false, false}},
          {"+We_Conp", {true, true, false}},
          {"+Triplet", {false, false, true}},
          {"Ours", {true, true, true}}};
}

std::vector<AblationRow> ablate(const PipelineConfig& base_config,
                                const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationRow> rows;
  PipelineContext ctx = build_context(base_config);
  ModelConfig mc = base_config.model;
  mc.vocab_size = static_cast<std::size_t>(ctx.corpus.vocab.size());
  for (std::uint64_t seed : seeds) {
    for (const auto& [name, flags] : ablation_ladder()) {
      PipelineConfig cfg = base_config;
      cfg.flags = flags;
      cfg.seed = seed;
      cfg.checkpoint_dir.clear();  // ablation legs keep no checkpoints
      cfg.out_dir.clear();
      TransformerModel model(mc, seed);
      cfg.model = mc;
      train_pipeline(ctx, model, cfg);
      auto eval = evaluate_split(ctx, model, Split::test, cfg);
      rows.push_back({name, seed, eval.metrics});
    }
  }
  return rows;
}

static std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << std::fixed << v;
  return ss.str();
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::vector<std::uint64_t>& seeds,
                        std::uint64_t config_hash, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  out << "# config_hash=" << config_hash << '\n';
  out << "variant,seed,bleu1,bleu2,bleu3,bleu4,meteor,rouge_l,cider\n";
  auto emit = [&](const std::string& variant, const std::string& seed_label,
                  const MetricReport& m) {
    out << variant << ',' << seed_label << ',' << fmt(m.bleu[0]) << ',' << fmt(m.bleu[1]) << ','
        << fmt(m.bleu[2]) << ',' << fmt(m.bleu[3]) << ',' << fmt(m.meteor) << ','
        << fmt(m.rouge_l) << ',' << fmt(m.cider) << '\n';
  };
  for (const auto& r : rows) emit(r.variant, std::to_string(r.seed), r.metrics);
  for (const auto& [name, flags] : ablation_ladder()) {
    (void)flags;
    MetricReport mean;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.variant != name) continue;
      for (int i = 0; i < 4; ++i) mean.bleu[i] += r.metrics.bleu[i];
      mean.rouge_l += r.metrics.rouge_l;
      mean.meteor += r.metrics.meteor;
      mean.cider += r.metrics.cider;
      ++n;
    }
    if (n == 0) continue;
    for (int i = 0; i < 4; ++i) mean.bleu[i] /= static_cast<double>(n);
    mean.rouge_l /= static_cast<double>(n);
    mean.meteor /= static_cast<double>(n);
    mean.cider /= static_cast<double>(n);
    mean.n_samples = seeds.size();
    emit(name, "mean", mean);
  }
}

void make_synthetic_benchmark(const std::string& dir, std::uint64_t seed,
                              std::size_t n_samples, std::size_t d) {
  std::filesystem::create_directories(dir);
  static const std::vector<std::vector<std::string>> abnormalities = {
      {"pneumothorax"}, {"pleural", "effusion"}, {"consolidation"}, {"edema"}};
  std::vector<Report> reports;
  std::vector<std::string> ids;
  Matrix emb(n_samples, d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto& abn = abnormalities[i % abnormalities.size()];
    std::string abn_text;
    for (const auto& w : abn) abn_text += (abn_text.empty() ? "" : " ") + w;
    Report r;
    r.id = "s" + std::to_string(i);
    r.text = "the lungs are well expanded . there is " + abn_text +
             " . the cardiac silhouette is normal .";
    // Image features carry no signal at all: one shared seed, so every report
    // sees the same constant matrix and only the knowledge channels can
    // recover the planted finding.
    r.feature_source.kind = FeatureSource::Kind::seed;
    r.feature_source.seed = fnv1a("shared-view");
    // Every 4th block of four tests; blocks cover all abnormalities, so each
    // abnormality lands on both sides of the split.
    r.split = ((i / abnormalities.size()) % 4 == 3) ? Split::test : Split::train;
    reports.push_back(r);
    ids.push_back(r.id);
    // The stand-in image-retrieval embedding clusters by abnormality.
    auto base = synth_tokens_encode(abn, d);
    for (std::size_t j = 0; j < d; ++j) emb.at(i, j) = base[j] + jitter(rng);
  }
  Corpus corpus;
  corpus.reports = std::move(reports);
  save_corpus(corpus, dir + "/corpus.jsonl");
  save_embeddings(make_store(std::move(ids), std::move(emb)), dir + "/embeddings.kift");
}

void write_generated_jsonl(const EvalOutput& eval, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  for (std::size_t i = 0; i < eval.ids.size(); ++i) {
    json j = {{"id", eval.ids[i]}, {"text", detokenize(eval.generated[i])}};
    out << j.dump() << '\n';
  }
}

void write_metrics_json(const MetricReport& m, std::uint64_t config_hash,
                        const std::string& path) {
  json j = {{"bleu", {m.bleu[0], m.bleu[1], m.bleu[2], m.bleu[3]}},
            {"rouge_l", m.rouge_l},
            {"meteor", m.meteor},
            {"cider", m.cider},
            {"n_samples", m.n_samples},
            {"config_hash", config_hash}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  out << j.dump(2) << '\n';
}

void write_metrics_csv_row(const MetricReport& m, const std::string& label,
                           std::uint64_t config_hash, const std::string& path) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open for write: " + path);
  if (fresh) {
    out << "# config_hash=" << config_hash << '\n';
    out << "label,bleu1,bleu2,bleu3,bleu4,meteor,rouge_l,cider,n_samples\n";
  }
  out << label << ',' << fmt(m.bleu[0]) << ',' << fmt(m.bleu[1]) << ',' << fmt(m.bleu[2]) << ','
      << fmt(m.bleu[3]) << ',' << fmt(m.meteor) << ',' << fmt(m.rouge_l) << ',' << fmt(m.cider)
      << ',' << m.n_samples << '\n';
}

MetricReport run_end_to_end(const PipelineConfig& config) {
  PipelineContext ctx = build_context(config);
  ModelConfig mc = config.model;
  mc.vocab_size = static_cast<std::size_t>(ctx.corpus.vocab.size());
  PipelineConfig cfg = config;
  cfg.model = mc;
  TransformerModel model(mc, cfg.seed);
  train_pipeline(ctx, model, cfg);
  auto eval = evaluate_split(ctx, model, Split::test, cfg);
  std::filesystem::create_directories(cfg.out_dir);
  write_generated_jsonl(eval, cfg.out_dir + "/generated.jsonl");
  write_metrics_json(eval.metrics, cfg.hash(), cfg.out_dir + "/metrics.json");
  return eval.metrics;
}

}  // namespace kift
