#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kift/matrix_io.hpp"

namespace kift {

// A 2-D tensor (scalars are 1x1) with reverse-mode autodiff. Graphs are built
// eagerly by the free-function ops below; backward() runs reverse topological
// accumulation from a scalar loss.
struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<TensorPtr> parents;
  std::function<void()> backward_fn;  // accumulates into parents' grads

  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::size_t size() const { return rows * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double item() const;  // scalar value; throws ShapeError if not 1x1

  void zero_grad() { grad.assign(data.size(), 0.0); }
  void ensure_grad() { if (grad.size() != data.size()) grad.assign(data.size(), 0.0); }
};

TensorPtr tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);
TensorPtr tensor_from(const Matrix& m, bool requires_grad = false);
TensorPtr tensor_from(const std::vector<double>& v, bool requires_grad = false);  // 1 x n
TensorPtr scalar(double v);
Matrix to_matrix(const Tensor& t);

// Seeded uniform init in [-scale, scale].
void fill_uniform(Tensor& t, std::uint64_t seed, double scale);

// Core ops. All record backprop nodes when any input requires grad.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);           // same shape
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);           // elementwise
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v);    // a[m x n] + v[1 x n]
TensorPtr mul_rowvec(const TensorPtr& a, const TensorPtr& v);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr softmax_rows(const TensorPtr& a);                      // last axis
TensorPtr layer_norm_rows(const TensorPtr& a, double eps = 1e-5);
TensorPtr gelu(const TensorPtr& a);                              // erf-exact
TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids);
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr slice_cols(const TensorPtr& a, std::size_t begin, std::size_t len);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr mask_fill(const TensorPtr& a, const std::vector<char>& mask, double value);
TensorPtr sum(const TensorPtr& a);                               // scalar

// Mean of -log p(target) over non-pad positions; logits [T x V], targets [T].
TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<int>& targets,
                        int pad_index);

// Reverse topological accumulation from a traced scalar.
void backward(const TensorPtr& loss);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;
  bool decoupled = true;  // false: classic L2-in-gradient coupling
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m, v;  // per-parameter moments
  std::size_t step = 0;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

// One Adam update over params; grads must be populated.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state);

// Named-parameter checkpoints: one KIFT file per tensor + a JSON manifest.
void save_checkpoint(const std::map<std::string, TensorPtr>& params, const std::string& dir);
std::map<std::string, TensorPtr> load_checkpoint(const std::string& dir);

}  // namespace kift
