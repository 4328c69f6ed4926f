#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kift/corpus.hpp"
#include "kift/metrics.hpp"
#include "kift/model.hpp"
#include "kift/retrieval.hpp"
#include "kift/triplet.hpp"
#include "kift/wck.hpp"

namespace kift {

struct AblationFlags {
  bool use_concepts = true;
  bool use_weights = true;
  bool use_triplets = true;

  void validate() const;  // use_weights implies use_concepts
};

struct PipelineConfig {
  std::string corpus_path;
  std::string concepts_path;    // empty = built-in package
  std::string lexicons_path;    // empty = built-in lexicons
  std::string embeddings_path;  // empty = synthetic text encoder over report text
  std::string checkpoint_dir;
  std::string out_dir = ".";
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::size_t max_triplets = 32;
  std::size_t epochs = 100;
  double lr = 1e-4;
  double weight_decay = 5e-5;
  bool decoupled_weight_decay = true;
  bool clamp_weights = true;
  ModelConfig model;
  TokenizerConfig tokenizer;
  AblationFlags flags;

  void validate() const;
  static PipelineConfig from_file(const std::string& path);
  std::string canonical_json() const;
  std::uint64_t hash() const;  // provenance hash recorded in outputs
};

// Immutable assets shared across samples.
struct PipelineContext {
  Corpus corpus;
  ConceptPackage concepts;
  Lexicons lexicons;
  TfIdfTable tfidf;
  Matrix concept_features;  // N_c x d
  EmbeddingStore store;     // train-split rows
  std::unordered_map<std::string, std::vector<double>> embeddings;  // all splits
};

PipelineContext build_context(const PipelineConfig& config);

// Retrieval query for a report; training reports never retrieve themselves.
std::vector<std::string> retrieve_ids(const PipelineContext& ctx, const std::string& id,
                                      std::size_t k);

struct Knowledge {
  Matrix k_c;
  Matrix k_t;
};

// Assemble K_c / K_t for one sample. Disabled branches become zero matrices.
Knowledge knowledge_for(const PipelineContext& ctx, const std::string& id,
                        const AblationFlags& flags, const PipelineConfig& config);

TrainSample make_sample(const PipelineContext& ctx, const std::string& id,
                        const AblationFlags& flags, const PipelineConfig& config);

GenerationOutput run_pipeline(const PipelineContext& ctx, const TransformerModel& model,
                              const std::string& id, const PipelineConfig& config);

// Train on the corpus splits; writes log CSV and best checkpoint per config.
TrainResult train_pipeline(const PipelineContext& ctx, TransformerModel& model,
                           const PipelineConfig& config);

// Decode the given split and score against references.
struct EvalOutput {
  std::vector<std::string> ids;
  std::vector<TokenSeq> generated;
  std::vector<TokenSeq> references;
  MetricReport metrics;
};
EvalOutput evaluate_split(const PipelineContext& ctx, const TransformerModel& model,
                          Split split, const PipelineConfig& config);

// Table II ladder: Base, +Concepts, +We_Conp, +Triplet, Ours.
struct AblationRow {
  std::string variant;
  std::uint64_t seed;
  MetricReport metrics;
};
std::vector<std::pair<std::string, AblationFlags>> ablation_ladder();
std::vector<AblationRow> ablate(const PipelineConfig& config,
                                const std::vector<std::uint64_t>& seeds);
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::vector<std::uint64_t>& seeds,
                        std::uint64_t config_hash, const std::string& path);

// Synthetic knowledge-planted benchmark: the abnormality token in each report
// is recoverable only through the retrieval/concept channels (image features
// are pure noise; the embedding file clusters by abnormality).
// Writes corpus.jsonl and embeddings.kift (+ id sidecar) into dir.
void make_synthetic_benchmark(const std::string& dir, std::uint64_t seed,
                              std::size_t n_samples, std::size_t d);

// End-to-end train + decode + score; writes generated.jsonl and metrics files.
MetricReport run_end_to_end(const PipelineConfig& config);

void write_generated_jsonl(const EvalOutput& eval, const std::string& path);
void write_metrics_json(const MetricReport& m, std::uint64_t config_hash,
                        const std::string& path);
void write_metrics_csv_row(const MetricReport& m, const std::string& label,
                           std::uint64_t config_hash, const std::string& path);

}  // namespace kift
