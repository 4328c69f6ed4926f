#include "kift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kift/common.hpp"

using nlohmann::json;

namespace kift {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows) + " x " + std::to_string(t.cols) + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Attach graph metadata only when some input is traced.
void trace(const TensorPtr& out, std::vector<TensorPtr> parents, std::function<void()> fn) {
  bool traced = false;
  for (const auto& p : parents)
    if (p->requires_grad) traced = true;
  if (!traced) return;
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

}  // namespace

double Tensor::item() const {
  if (rows != 1 || cols != 1) throw ShapeError("item(): tensor is " + shape_str(*this) + ", not 1x1");
  return data[0];
}

TensorPtr tensor(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto t = std::make_shared<Tensor>(rows, cols);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr tensor_from(const Matrix& m, bool requires_grad) {
  auto t = tensor(m.rows, m.cols, requires_grad);
  t->data = m.data;
  return t;
}

TensorPtr tensor_from(const std::vector<double>& v, bool requires_grad) {
  auto t = tensor(1, v.size(), requires_grad);
  t->data = v;
  return t;
}

TensorPtr scalar(double v) {
  auto t = tensor(1, 1);
  t->data[0] = v;
  return t;
}

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows, t.cols);
  m.data = t.data;
  return m;
}

void fill_uniform(Tensor& t, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& x : t.data) x = dist(rng);
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->cols != b->rows)
    throw ShapeError("matmul: inner dims " + shape_str(*a) + " vs " + shape_str(*b));
  auto out = tensor(a->rows, b->cols);
  const std::size_t m = a->rows, k = a->cols, n = b->cols;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a->data[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &b->data[p * n];
      double* orow = &out->data[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  trace(out, {a, b}, [a, b, o = out.get(), m, k, n] {
    a->ensure_grad();
    b->ensure_grad();
    // dA += dC * B^T ; dB += A^T * dC
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = o->grad[i * n + j];
        if (g == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          a->grad[i * k + p] += g * b->data[p * n + j];
          b->grad[p * n + j] += g * a->data[i * k + p];
        }
      }
  });
  return out;
}

TensorPtr transpose(const TensorPtr& a) {
  auto out = tensor(a->cols, a->rows);
  for (std::size_t i = 0; i < a->rows; ++i)
    for (std::size_t j = 0; j < a->cols; ++j) out->at(j, i) = a->at(i, j);
  trace(out, {a}, [a, o = out.get()] {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->rows; ++i)
      for (std::size_t j = 0; j < a->cols; ++j) a->grad[i * a->cols + j] += o->grad[j * o->cols + i];
  });
  return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "add");
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
  trace(out, {a, b}, [a, b, o = out.get()] {
    a->ensure_grad();
    b->ensure_grad();
    for (std::size_t i = 0; i < o->size(); ++i) {
      a->grad[i] += o->grad[i];
      b->grad[i] += o->grad[i];
    }
  });
  return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "sub");
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
  trace(out, {a, b}, [a, b, o = out.get()] {
    a->ensure_grad();
    b->ensure_grad();
    for (std::size_t i = 0; i < o->size(); ++i) {
      a->grad[i] += o->grad[i];
      b->grad[i] -= o->grad[i];
    }
  });
  return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "mul");
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
  trace(out, {a, b}, [a, b, o = out.get()] {
    a->ensure_grad();
    b->ensure_grad();
    for (std::size_t i = 0; i < o->size(); ++i) {
      a->grad[i] += o->grad[i] * b->data[i];
      b->grad[i] += o->grad[i] * a->data[i];
    }
  });
  return out;
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v) {
  if (v->rows != 1 || v->cols != a->cols)
    throw ShapeError("add_rowvec: " + shape_str(*a) + " vs " + shape_str(*v));
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < a->rows; ++i)
    for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) = a->at(i, j) + v->data[j];
  trace(out, {a, v}, [a, v, o = out.get()] {
    a->ensure_grad();
    v->ensure_grad();
    for (std::size_t i = 0; i < a->rows; ++i)
      for (std::size_t j = 0; j < a->cols; ++j) {
        a->grad[i * a->cols + j] += o->grad[i * a->cols + j];
        v->grad[j] += o->grad[i * a->cols + j];
      }
  });
  return out;
}

TensorPtr mul_rowvec(const TensorPtr& a, const TensorPtr& v) {
  if (v->rows != 1 || v->cols != a->cols)
    throw ShapeError("mul_rowvec: " + shape_str(*a) + " vs " + shape_str(*v));
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < a->rows; ++i)
    for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) = a->at(i, j) * v->data[j];
  trace(out, {a, v}, [a, v, o = out.get()] {
    a->ensure_grad();
    v->ensure_grad();
    for (std::size_t i = 0; i < a->rows; ++i)
      for (std::size_t j = 0; j < a->cols; ++j) {
        a->grad[i * a->cols + j] += o->grad[i * a->cols + j] * v->data[j];
        v->grad[j] += o->grad[i * a->cols + j] * a->data[i * a->cols + j];
      }
  });
  return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = c * a->data[i];
  trace(out, {a}, [a, o = out.get(), c] {
    a->ensure_grad();
    for (std::size_t i = 0; i < o->size(); ++i) a->grad[i] += c * o->grad[i];
  });
  return out;
}

TensorPtr softmax_rows(const TensorPtr& a) {
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < a->rows; ++i) {
    double mx = a->at(i, 0);
    for (std::size_t j = 1; j < a->cols; ++j) mx = std::max(mx, a->at(i, j));
    double denom = 0;
    for (std::size_t j = 0; j < a->cols; ++j) {
      out->at(i, j) = std::exp(a->at(i, j) - mx);
      denom += out->at(i, j);
    }
    for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) /= denom;
  }
  trace(out, {a}, [a, o = out.get()] {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->rows; ++i) {
      double dot = 0;
      for (std::size_t j = 0; j < a->cols; ++j)
        dot += o->grad[i * a->cols + j] * o->data[i * a->cols + j];
      for (std::size_t j = 0; j < a->cols; ++j)
        a->grad[i * a->cols + j] +=
            o->data[i * a->cols + j] * (o->grad[i * a->cols + j] - dot);
    }
  });
  return out;
}

TensorPtr layer_norm_rows(const TensorPtr& a, double eps) {
  auto out = tensor(a->rows, a->cols);
  const std::size_t n = a->cols;
  std::vector<double> inv_std(a->rows);
  for (std::size_t i = 0; i < a->rows; ++i) {
    double mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += a->at(i, j);
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = a->at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[i] = istd;
    for (std::size_t j = 0; j < n; ++j) out->at(i, j) = (a->at(i, j) - mean) * istd;
  }
  trace(out, {a}, [a, o = out.get(), inv_std = std::move(inv_std), n] {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->rows; ++i) {
      double gmean = 0, gymean = 0;
      for (std::size_t j = 0; j < n; ++j) {
        gmean += o->grad[i * n + j];
        gymean += o->grad[i * n + j] * o->data[i * n + j];
      }
      gmean /= static_cast<double>(n);
      gymean /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j)
        a->grad[i * n + j] += inv_std[i] * (o->grad[i * n + j] - gmean -
                                            o->data[i * n + j] * gymean);
    }
  });
  return out;
}

TensorPtr gelu(const TensorPtr& a) {
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < out->size(); ++i) {
    const double x = a->data[i];
    out->data[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  trace(out, {a}, [a, o = out.get()] {
    a->ensure_grad();
    for (std::size_t i = 0; i < o->size(); ++i) {
      const double x = a->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      a->grad[i] += o->grad[i] * (cdf + x * pdf);
    }
  });
  return out;
}

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids) {
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table->rows)
      throw ShapeError("embedding_lookup: id " + std::to_string(id) + " out of range " +
                       shape_str(*table));
  auto out = tensor(ids.size(), table->cols);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t j = 0; j < table->cols; ++j)
      out->at(t, j) = table->at(static_cast<std::size_t>(ids[t]), j);
  trace(out, {table}, [table, o = out.get(), ids] {
    table->ensure_grad();
    for (std::size_t t = 0; t < ids.size(); ++t)
      for (std::size_t j = 0; j < table->cols; ++j)
        table->grad[static_cast<std::size_t>(ids[t]) * table->cols + j] +=
            o->grad[t * o->cols + j];
  });
  return out;
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  std::size_t rows = 0;
  const std::size_t cols = parts[0]->cols;
  for (const auto& p : parts) {
    if (p->cols != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p->rows;
  }
  auto out = tensor(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + static_cast<std::ptrdiff_t>(off));
    off += p->size();
  }
  trace(out, parts, [parts, o = out.get()] {
    std::size_t off = 0;
    for (const auto& p : parts) {
      p->ensure_grad();
      for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] += o->grad[off + i];
      off += p->size();
    }
  });
  return out;
}

TensorPtr slice_cols(const TensorPtr& a, std::size_t begin, std::size_t len) {
  if (begin + len > a->cols)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + len) + ") outside " + shape_str(*a));
  auto out = tensor(a->rows, len);
  for (std::size_t i = 0; i < a->rows; ++i)
    for (std::size_t j = 0; j < len; ++j) out->at(i, j) = a->at(i, begin + j);
  trace(out, {a}, [a, o = out.get(), begin, len] {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->rows; ++i)
      for (std::size_t j = 0; j < len; ++j)
        a->grad[i * a->cols + begin + j] += o->grad[i * len + j];
  });
  return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t rows = parts[0]->rows;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p->rows != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p->cols;
  }
  auto out = tensor(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p->cols; ++j) out->at(i, off + j) = p->at(i, j);
    off += p->cols;
  }
  trace(out, parts, [parts, o = out.get(), rows] {
    std::size_t off = 0;
    for (const auto& p : parts) {
      p->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < p->cols; ++j)
          p->grad[i * p->cols + j] += o->grad[i * o->cols + off + j];
      off += p->cols;
    }
  });
  return out;
}

TensorPtr mask_fill(const TensorPtr& a, const std::vector<char>& mask, double value) {
  if (mask.size() != a->size())
    throw ShapeError("mask_fill: mask size " + std::to_string(mask.size()) + " vs " +
                     shape_str(*a));
  auto out = tensor(a->rows, a->cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = mask[i] ? value : a->data[i];
  trace(out, {a}, [a, o = out.get(), mask] {
    a->ensure_grad();
    for (std::size_t i = 0; i < o->size(); ++i)
      if (!mask[i]) a->grad[i] += o->grad[i];
  });
  return out;
}

TensorPtr sum(const TensorPtr& a) {
  auto out = tensor(1, 1);
  for (double x : a->data) out->data[0] += x;
  trace(out, {a}, [a, o = out.get()] {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[0];
  });
  return out;
}

TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<int>& targets,
                        int pad_index) {
  if (targets.size() != logits->rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets vs " +
                     shape_str(*logits));
  const std::size_t vocab = logits->cols;
  std::size_t n_valid = 0;
  for (int t : targets) {
    if (t == pad_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " out of vocab " +
                       std::to_string(vocab));
    ++n_valid;
  }
  if (n_valid == 0) throw DataError("cross_entropy: all targets are padding");
  // Row-wise log-softmax, kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(logits->size());
  auto out = tensor(1, 1);
  double loss = 0;
  for (std::size_t i = 0; i < logits->rows; ++i) {
    double mx = logits->at(i, 0);
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, logits->at(i, j));
    double denom = 0;
    for (std::size_t j = 0; j < vocab; ++j) denom += std::exp(logits->at(i, j) - mx);
    const double logz = mx + std::log(denom);
    for (std::size_t j = 0; j < vocab; ++j)
      (*probs)[i * vocab + j] = std::exp(logits->at(i, j) - logz);
    if (targets[i] != pad_index)
      loss -= logits->at(i, static_cast<std::size_t>(targets[i])) - logz;
  }
  out->data[0] = loss / static_cast<double>(n_valid);
  trace(out, {logits}, [logits, o = out.get(), probs, targets, pad_index, n_valid, vocab] {
    logits->ensure_grad();
    const double g = o->grad[0] / static_cast<double>(n_valid);
    for (std::size_t i = 0; i < logits->rows; ++i) {
      if (targets[i] == pad_index) continue;
      for (std::size_t j = 0; j < vocab; ++j) {
        double p = (*probs)[i * vocab + j];
        if (j == static_cast<std::size_t>(targets[i])) p -= 1.0;
        logits->grad[i * vocab + j] += g * p;
      }
    }
  });
  return out;
}

void backward(const TensorPtr& loss) {
  if (loss->rows != 1 || loss->cols != 1) throw ShapeError("backward: loss must be scalar");
  if (!loss->requires_grad) throw ShapeError("backward: loss is not traced");
  // Iterative post-order DFS.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<TensorPtr, std::size_t>> stack{{loss, 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorPtr child = node->parents[next++];
      if (visited.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node.get());
      stack.pop_back();
    }
  }
  for (Tensor* t : order) t->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), 0.0);
      state.v[i].assign(params[i]->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  for (const auto& p : params)
    if (p->grad.size() != p->data.size())
      throw DataError("adam_step: parameter missing gradient");
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double g = p.grad[j];
      if (!c.decoupled) g += c.weight_decay * p.data[j];
      state.m[i][j] = c.beta1 * state.m[i][j] + (1.0 - c.beta1) * g;
      state.v[i][j] = c.beta2 * state.v[i][j] + (1.0 - c.beta2) * g * g;
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      p.data[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
      if (c.decoupled) p.data[j] -= c.lr * c.weight_decay * p.data[j];
    }
  }
}

void save_checkpoint(const std::map<std::string, TensorPtr>& params, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json manifest = json::array();
  std::size_t idx = 0;
  for (const auto& [name, t] : params) {
    const std::string file = "p" + std::to_string(idx++) + ".kift";
    save_matrix(to_matrix(*t), dir + "/" + file);
    manifest.push_back({{"name", name}, {"file", file}, {"shape", {t->rows, t->cols}},
                        {"dtype", "f32"}});
  }
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw DataError("cannot write checkpoint manifest in " + dir);
  out << manifest.dump(2) << '\n';
}

std::map<std::string, TensorPtr> load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw DataError("missing checkpoint manifest in " + dir);
  json manifest;
  in >> manifest;
  std::map<std::string, TensorPtr> params;
  for (const auto& e : manifest) {
    Matrix m = load_matrix(dir + "/" + e.at("file").get<std::string>());
    auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || m.rows != shape[0] || m.cols != shape[1])
      throw FormatError("checkpoint shape mismatch for " + e.at("name").get<std::string>());
    params[e.at("name").get<std::string>()] = tensor_from(m, true);
  }
  return params;
}

}  // namespace kift
