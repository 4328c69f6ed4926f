#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kift/corpus.hpp"
#include "kift/tensor.hpp"

namespace kift {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 3;
  std::size_t ffn_dim = 128;
  std::size_t vocab_size = 0;
  std::size_t max_len = 60;       // decoder cap N_R
  std::size_t n_patches = 4;      // synthetic image patches per view
  bool mok_projections = false;   // learned Q/K/V projections in MoK
  std::size_t beam_width = 1;     // 1 = greedy

  void validate() const;  // throws ConfigError
};

// Projection-free scaled dot-product attention: Softmax(Q K^T / sqrt(d)) V.
TensorPtr attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v);

// Plain-matrix convenience wrapper (no autodiff).
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

struct GenerationOutput {
  std::vector<int> token_ids;       // without start/end markers
  std::string text;
  std::vector<double> log_probs;    // one per emitted token (incl. end)
};

// MoK fusion + 3-layer encoder-decoder over the tensor engine.
class TransformerModel {
 public:
  TransformerModel(ModelConfig cfg, std::uint64_t seed);
  explicit TransformerModel(ModelConfig cfg, std::map<std::string, TensorPtr> params);

  const ModelConfig& config() const { return cfg_; }
  std::map<std::string, TensorPtr>& params() { return params_; }
  std::vector<TensorPtr> param_list() const;

  // F_I' = F_I + Att(F_I, K_c, K_c) + Att(F_I, K_t, K_t)
  TensorPtr mok_fuse(const TensorPtr& image, const TensorPtr& concept_knowledge,
                     const TensorPtr& triplet_knowledge) const;

  TensorPtr encode(const TensorPtr& fused) const;
  // Teacher-forced logits [T x V] for the token prefix (start-shifted).
  TensorPtr decode_logits(const TensorPtr& memory, const std::vector<int>& prefix) const;

  // Teacher-forced loss for one sample.
  TensorPtr sample_loss(const TensorPtr& image, const TensorPtr& k_c, const TensorPtr& k_t,
                        const std::vector<int>& target_ids) const;

  GenerationOutput generate(const TensorPtr& image, const TensorPtr& k_c,
                            const TensorPtr& k_t, const Vocab& vocab) const;

  void save(const std::string& dir) const;
  static TransformerModel load(const std::string& dir);

 private:
  ModelConfig cfg_;
  std::map<std::string, TensorPtr> params_;

  TensorPtr param(const std::string& name) const;
  TensorPtr multi_head(const std::string& prefix, const TensorPtr& q_in,
                       const TensorPtr& kv_in, const std::vector<char>* mask) const;
  TensorPtr ffn(const std::string& prefix, const TensorPtr& x) const;
  TensorPtr encoder_layer(std::size_t layer, const TensorPtr& x) const;
  TensorPtr decoder_layer(std::size_t layer, const TensorPtr& x, const TensorPtr& memory) const;
  GenerationOutput beam_search(const TensorPtr& memory, const Vocab& vocab) const;
};

// Per-sample precomputed knowledge inputs.
struct TrainSample {
  std::string id;
  Matrix image;      // N_v x d
  Matrix k_c;        // N_c x d (zeros when the branch is ablated)
  Matrix k_t;        // N_t x d
  std::vector<int> target_ids;  // report tokens as vocab ids, no markers
};

struct TrainConfig {
  std::size_t epochs = 100;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::string log_path;         // CSV {epoch, train_loss, val_loss, seconds}
  std::string checkpoint_dir;   // best-val checkpoint, empty = don't save
};

struct TrainResult {
  std::vector<double> train_losses;  // per epoch
  std::vector<double> val_losses;
  double best_val = 0;
  std::size_t best_epoch = 0;
};

TrainResult train_model(TransformerModel& model, const std::vector<TrainSample>& train,
                        const std::vector<TrainSample>& val, const TrainConfig& tc);

std::vector<int> encode_report(const Report& r, const Vocab& vocab, std::size_t max_len);

}  // namespace kift
