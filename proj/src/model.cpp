#include "kift/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"

using nlohmann::json;

namespace kift {

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || ffn_dim < 1 || max_len < 1)
    throw ConfigError("model dims must be >= 1");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  if (vocab_size < 5) throw ConfigError("vocab_size must cover the reserved tokens");
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
}

TensorPtr attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v) {
  if (q->cols != k->cols)
    throw ShapeError("attention: query dim " + std::to_string(q->cols) + " vs key dim " +
                     std::to_string(k->cols));
  if (k->rows != v->rows)
    throw ShapeError("attention: " + std::to_string(k->rows) + " keys vs " +
                     std::to_string(v->rows) + " values");
  auto scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q->cols)));
  return matmul(softmax_rows(scores), v);
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  return to_matrix(*attention(tensor_from(q), tensor_from(k), tensor_from(v)));
}

static Matrix sinusoidal_pe(std::size_t length, std::size_t d) {
  Matrix pe(length, d);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      const double angle =
          static_cast<double>(t) /
          std::pow(10000.0, 2.0 * std::floor(static_cast<double>(i) / 2.0) / static_cast<double>(d));
      pe.at(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

TransformerModel::TransformerModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  auto weight = [&](const std::string& name, std::size_t r, std::size_t c, double scl) {
    auto t = tensor(r, c, true);
    fill_uniform(*t, fnv1a(name, seed ^ 0x9e3779b97f4a7c15ull), scl);
    params_[name] = t;
  };
  auto ln = [&](const std::string& name) {
    auto g = tensor(1, cfg_.d_model, true);
    std::fill(g->data.begin(), g->data.end(), 1.0);
    params_[name + ".g"] = g;
    params_[name + ".b"] = tensor(1, cfg_.d_model, true);
  };
  const double ws = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  auto attn_block = [&](const std::string& prefix) {
    for (const char* w : {"wq", "wk", "wv", "wo"})
      weight(prefix + "." + w, cfg_.d_model, cfg_.d_model, ws);
  };
  auto ffn_block = [&](const std::string& prefix) {
    weight(prefix + ".w1", cfg_.d_model, cfg_.ffn_dim, ws);
    params_[prefix + ".b1"] = tensor(1, cfg_.ffn_dim, true);
    weight(prefix + ".w2", cfg_.ffn_dim, cfg_.d_model,
           1.0 / std::sqrt(static_cast<double>(cfg_.ffn_dim)));
    params_[prefix + ".b2"] = tensor(1, cfg_.d_model, true);
  };
  weight("tok_emb", cfg_.vocab_size, cfg_.d_model, 0.1);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string e = "enc" + std::to_string(l);
    attn_block(e + ".attn");
    ffn_block(e + ".ffn");
    ln(e + ".ln1");
    ln(e + ".ln2");
    const std::string d = "dec" + std::to_string(l);
    attn_block(d + ".self");
    attn_block(d + ".cross");
    ffn_block(d + ".ffn");
    ln(d + ".ln1");
    ln(d + ".ln2");
    ln(d + ".ln3");
  }
  weight("out.w", cfg_.d_model, cfg_.vocab_size, ws);
  params_["out.b"] = tensor(1, cfg_.vocab_size, true);
  if (cfg_.mok_projections) {
    for (const char* branch : {"mok.c", "mok.t"})
      for (const char* w : {"wq", "wk", "wv"})
        weight(std::string(branch) + "." + w, cfg_.d_model, cfg_.d_model, ws);
  }
}

TransformerModel::TransformerModel(ModelConfig cfg, std::map<std::string, TensorPtr> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

TensorPtr TransformerModel::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("missing model parameter: " + name);
  return it->second;
}

std::vector<TensorPtr> TransformerModel::param_list() const {
  std::vector<TensorPtr> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

TensorPtr TransformerModel::mok_fuse(const TensorPtr& image, const TensorPtr& concept_knowledge,
                                     const TensorPtr& triplet_knowledge) const {
  if (image->cols != concept_knowledge->cols || image->cols != triplet_knowledge->cols)
    throw ShapeError("mok_fuse: dimension mismatch (image " + std::to_string(image->cols) +
                     ", K_c " + std::to_string(concept_knowledge->cols) + ", K_t " +
                     std::to_string(triplet_knowledge->cols) + ")");
  TensorPtr att_c, att_t;
  if (cfg_.mok_projections) {
    att_c = attention(matmul(image, param("mok.c.wq")),
                      matmul(concept_knowledge, param("mok.c.wk")),
                      matmul(concept_knowledge, param("mok.c.wv")));
    att_t = attention(matmul(image, param("mok.t.wq")),
                      matmul(triplet_knowledge, param("mok.t.wk")),
                      matmul(triplet_knowledge, param("mok.t.wv")));
  } else {
    att_c = attention(image, concept_knowledge, concept_knowledge);
    att_t = attention(image, triplet_knowledge, triplet_knowledge);
  }
  return add(add(image, att_c), att_t);
}

TensorPtr TransformerModel::multi_head(const std::string& prefix, const TensorPtr& q_in,
                                       const TensorPtr& kv_in,
                                       const std::vector<char>* mask) const {
  auto q = matmul(q_in, param(prefix + ".wq"));
  auto k = matmul(kv_in, param(prefix + ".wk"));
  auto v = matmul(kv_in, param(prefix + ".wv"));
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  std::vector<TensorPtr> heads;
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    auto qh = slice_cols(q, h * dh, dh);
    auto kh = slice_cols(k, h * dh, dh);
    auto vh = slice_cols(v, h * dh, dh);
    auto scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask) scores = mask_fill(scores, *mask, -1e9);
    heads.push_back(matmul(softmax_rows(scores), vh));
  }
  return matmul(concat_cols(heads), param(prefix + ".wo"));
}

TensorPtr TransformerModel::ffn(const std::string& prefix, const TensorPtr& x) const {
  auto h = gelu(add_rowvec(matmul(x, param(prefix + ".w1")), param(prefix + ".b1")));
  return add_rowvec(matmul(h, param(prefix + ".w2")), param(prefix + ".b2"));
}

static TensorPtr apply_ln(const TensorPtr& x, const TensorPtr& g, const TensorPtr& b) {
  return add_rowvec(mul_rowvec(layer_norm_rows(x), g), b);
}

TensorPtr TransformerModel::encoder_layer(std::size_t layer, const TensorPtr& x) const {
  const std::string p = "enc" + std::to_string(layer);
  auto h = add(x, multi_head(p + ".attn", x, x, nullptr));
  auto x1 = apply_ln(h, param(p + ".ln1.g"), param(p + ".ln1.b"));
  auto h2 = add(x1, ffn(p + ".ffn", x1));
  return apply_ln(h2, param(p + ".ln2.g"), param(p + ".ln2.b"));
}

TensorPtr TransformerModel::decoder_layer(std::size_t layer, const TensorPtr& x,
                                          const TensorPtr& memory) const {
  const std::string p = "dec" + std::to_string(layer);
  const std::size_t t = x->rows;
  std::vector<char> causal(t * t, 0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) causal[i * t + j] = 1;
  auto h = add(x, multi_head(p + ".self", x, x, &causal));
  auto x1 = apply_ln(h, param(p + ".ln1.g"), param(p + ".ln1.b"));
  auto h2 = add(x1, multi_head(p + ".cross", x1, memory, nullptr));
  auto x2 = apply_ln(h2, param(p + ".ln2.g"), param(p + ".ln2.b"));
  auto h3 = add(x2, ffn(p + ".ffn", x2));
  return apply_ln(h3, param(p + ".ln3.g"), param(p + ".ln3.b"));
}

TensorPtr TransformerModel::encode(const TensorPtr& fused) const {
  if (fused->cols != cfg_.d_model)
    throw ShapeError("encode: feature dim " + std::to_string(fused->cols) + " vs d_model " +
                     std::to_string(cfg_.d_model));
  auto x = fused;
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) x = encoder_layer(l, x);
  return x;
}

TensorPtr TransformerModel::decode_logits(const TensorPtr& memory,
                                          const std::vector<int>& prefix) const {
  if (prefix.empty()) throw ShapeError("decode_logits: empty prefix");
  if (prefix.size() > cfg_.max_len + 1)
    throw ShapeError("decode_logits: prefix length " + std::to_string(prefix.size()) +
                     " exceeds max " + std::to_string(cfg_.max_len + 1));
  auto x = embedding_lookup(param("tok_emb"), prefix);
  x = add(x, tensor_from(sinusoidal_pe(prefix.size(), cfg_.d_model)));
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) x = decoder_layer(l, x, memory);
  return add_rowvec(matmul(x, param("out.w")), param("out.b"));
}

TensorPtr TransformerModel::sample_loss(const TensorPtr& image, const TensorPtr& k_c,
                                        const TensorPtr& k_t,
                                        const std::vector<int>& target_ids) const {
  auto memory = encode(mok_fuse(image, k_c, k_t));
  std::vector<int> input{Vocab::start};
  input.insert(input.end(), target_ids.begin(), target_ids.end());
  std::vector<int> targets(target_ids);
  targets.push_back(Vocab::end);
  return cross_entropy(decode_logits(memory, input), targets, Vocab::pad);
}

namespace {

struct Hypothesis {
  std::vector<int> ids;  // includes leading start token
  std::vector<double> log_probs;
  double total = 0;
  bool done = false;

  double normalized() const {
    return log_probs.empty() ? -1e30 : total / static_cast<double>(log_probs.size());
  }
};

std::vector<double> log_softmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t v = logits.cols;
  double mx = logits.at(row, 0);
  for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, logits.at(row, j));
  double denom = 0;
  for (std::size_t j = 0; j < v; ++j) denom += std::exp(logits.at(row, j) - mx);
  const double logz = mx + std::log(denom);
  std::vector<double> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = logits.at(row, j) - logz;
  return out;
}

}  // namespace

GenerationOutput TransformerModel::beam_search(const TensorPtr& memory, const Vocab& vocab) const {
  const std::size_t width = cfg_.beam_width;
  std::vector<Hypothesis> beams{Hypothesis{{Vocab::start}, {}, 0, false}};
  for (std::size_t step = 0; step < cfg_.max_len; ++step) {
    std::vector<Hypothesis> next;
    bool all_done = true;
    for (const auto& h : beams) {
      if (h.done) {
        next.push_back(h);
        continue;
      }
      all_done = false;
      auto logits = decode_logits(memory, h.ids);
      auto lp = log_softmax_row(*logits, logits->rows - 1);
      // Top `width` continuations, deterministic tie-break by lower id.
      std::vector<int> cand(lp.size());
      for (std::size_t j = 0; j < lp.size(); ++j) cand[j] = static_cast<int>(j);
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(std::min(width, cand.size())),
                        cand.end(), [&](int a, int b) {
                          if (lp[static_cast<std::size_t>(a)] != lp[static_cast<std::size_t>(b)])
                            return lp[static_cast<std::size_t>(a)] > lp[static_cast<std::size_t>(b)];
                          return a < b;
                        });
      for (std::size_t c = 0; c < std::min(width, cand.size()); ++c) {
        Hypothesis h2 = h;
        const int id = cand[c];
        h2.ids.push_back(id);
        h2.log_probs.push_back(lp[static_cast<std::size_t>(id)]);
        h2.total += lp[static_cast<std::size_t>(id)];
        if (id == Vocab::end) h2.done = true;
        next.push_back(std::move(h2));
      }
    }
    std::sort(next.begin(), next.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.normalized() != b.normalized()) return a.normalized() > b.normalized();
      return a.ids < b.ids;
    });
    if (next.size() > width) next.resize(width);
    beams = std::move(next);
    if (all_done) break;
  }
  const Hypothesis* best = &beams.front();
  GenerationOutput out;
  out.log_probs = best->log_probs;
  std::vector<std::string> words;
  for (std::size_t i = 1; i < best->ids.size(); ++i) {  // skip start
    const int id = best->ids[i];
    if (id == Vocab::end) break;
    out.token_ids.push_back(id);
    words.push_back(id < vocab.size() ? vocab.tokens[static_cast<std::size_t>(id)] : "<unk>");
  }
  out.text = detokenize(words);
  return out;
}

GenerationOutput TransformerModel::generate(const TensorPtr& image, const TensorPtr& k_c,
                                            const TensorPtr& k_t, const Vocab& vocab) const {
  auto memory = encode(mok_fuse(image, k_c, k_t));
  return beam_search(memory, vocab);
}

void TransformerModel::save(const std::string& dir) const {
  save_checkpoint(params_, dir);
  json j = {{"d_model", cfg_.d_model},       {"n_heads", cfg_.n_heads},
            {"n_layers", cfg_.n_layers},     {"ffn_dim", cfg_.ffn_dim},
            {"vocab_size", cfg_.vocab_size}, {"max_len", cfg_.max_len},
            {"n_patches", cfg_.n_patches},   {"mok_projections", cfg_.mok_projections},
            {"beam_width", cfg_.beam_width}};
  std::ofstream out(dir + "/model_config.json");
  if (!out) throw DataError("cannot write model config in " + dir);
  out << j.dump(2) << '\n';
}

TransformerModel TransformerModel::load(const std::string& dir) {
  std::ifstream in(dir + "/model_config.json");
  if (!in) throw DataError("missing model config in " + dir);
  json j;
  in >> j;
  ModelConfig cfg;
  cfg.d_model = j.at("d_model");
  cfg.n_heads = j.at("n_heads");
  cfg.n_layers = j.at("n_layers");
  cfg.ffn_dim = j.at("ffn_dim");
  cfg.vocab_size = j.at("vocab_size");
  cfg.max_len = j.at("max_len");
  cfg.n_patches = j.at("n_patches");
  cfg.mok_projections = j.at("mok_projections");
  cfg.beam_width = j.at("beam_width");
  return TransformerModel(cfg, load_checkpoint(dir));
}

std::vector<int> encode_report(const Report& r, const Vocab& vocab, std::size_t max_len) {
  std::vector<int> ids;
  for (const auto& tok : r.tokens) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.lookup(tok));
  }
  return ids;
}

static double eval_loss(const TransformerModel& model, const std::vector<TrainSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0;
  for (const auto& s : samples) {
    auto loss = model.sample_loss(tensor_from(s.image), tensor_from(s.k_c),
                                  tensor_from(s.k_t), s.target_ids);
    total += loss->item();
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train_model(TransformerModel& model, const std::vector<TrainSample>& train,
                        const std::vector<TrainSample>& val, const TrainConfig& tc) {
  if (train.empty()) throw DataError("train_model: empty train split");
  auto params = model.param_list();
  AdamState adam(tc.adam);
  TrainResult result;
  result.best_val = 1e300;
  std::ofstream log;
  if (!tc.log_path.empty()) {
    log.open(tc.log_path);
    log << "epoch,train_loss,val_loss,seconds\n";
  }
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(tc.seed + epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t idx : order) {
      const TrainSample& s = train[idx];
      for (auto& p : params) p->zero_grad();
      auto loss = model.sample_loss(tensor_from(s.image), tensor_from(s.k_c),
                                    tensor_from(s.k_t), s.target_ids);
      const double l = loss->item();
      if (!std::isfinite(l))
        throw DataError("train_model: non-finite loss at epoch " + std::to_string(epoch) +
                        ", sample " + s.id);
      backward(loss);
      adam_step(params, adam);
      total += l;
    }
    const double train_loss = total / static_cast<double>(train.size());
    const double val_loss = eval_loss(model, val);
    result.train_losses.push_back(train_loss);
    result.val_losses.push_back(val_loss);
    const double select = val.empty() ? train_loss : val_loss;
    if (select < result.best_val) {
      result.best_val = select;
      result.best_epoch = epoch;
      if (!tc.checkpoint_dir.empty()) model.save(tc.checkpoint_dir);
    }
    if (log.is_open()) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << epoch << ',' << train_loss << ',' << val_loss << ',' << secs << '\n';
    }
  }
  return result;
}

}  // namespace kift
