#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ordseq/tensor.hpp"

namespace ordseq {

// A named trainable tensor plus its gradient accumulator. `decay` marks the
// parameter as eligible for decoupled weight decay.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;

  ParamTensor() = default;
  ParamTensor(std::string n, Tensor v, bool d)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())), decay(d) {}
};

// Records attention weights of one multi-head attention call, for inspection
// in tests and reports. Layout: (head, query, key), keys include padding
// positions with weight exactly 0.
struct AttnRecord {
  std::size_t heads = 0, lq = 0, lk = 0, batch = 0;
  std::vector<double> weights;  // batch * heads * lq * lk
  double at(std::size_t b, std::size_t h, std::size_t q, std::size_t k) const {
    return weights[((b * heads + h) * lq + q) * lk + k];
  }
};

// Reverse-mode tape. Nodes are created in topological order by the op
// builders below; backward() sweeps the tape in reverse. Values are plain
// double tensors; gradients are allocated lazily during the sweep.
class Graph {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    std::function<void(Graph&, int)> backward;
    ParamTensor* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor& value(int id) const { return nodes_[id].value; }
  Tensor& grad_buf(int id);  // allocates zeros on first use
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  // Raw node creation; op builders and loss nodes use this.
  int make_node(Tensor value, std::function<void(Graph&, int)> backward = nullptr);

  // ---- leaves ----
  int leaf(Tensor v);                // constant input
  int param(ParamTensor& p);         // trainable leaf; grads land in p.grad

  // ---- ops ----
  // x: (..., in) flattened over leading dims; w: (in, out); b: (out) or -1.
  int linear(int x, int w, int b);
  int add(int a, int b);
  int relu(int x);
  int gelu(int x);
  // Normalizes the last dimension; scale/shift have that dimension.
  int layer_norm(int x, int scale, int shift, double eps = 1e-5);
  // Inverted dropout. Active only when training and rate > 0; otherwise
  // returns x unchanged. Mask draws come from `rng` in element order.
  int dropout(int x, double rate, bool training, Rng* rng);
  // Multi-head attention. q: (B, Lq, d); k, v: (B, Lk, d); key_mask: (B, Lk)
  // with nonzero = valid. Masked keys receive attention weight exactly 0 in
  // forward and contribute nothing in backward. Output: (B, Lq, d).
  int multihead_attention(int q, int k, int v, const Tensor& key_mask, std::size_t heads,
                          AttnRecord* record = nullptr);
  // v: (n) tiled to (B, 1, n).
  int tile_rows(int v, std::size_t b);
  // a: (B, da), b: (B, db) -> (B, da + db).
  int concat_cols(int a, int b);
  int reshape(int x, std::vector<std::size_t> shape);
  // u: (B, d), w: (d), bias: (K) -> (B, K); z[b,k] = dot(u[b], w) + bias[k].
  // The single shared weight vector is what makes the logits rank-consistent.
  int rank_head(int u, int w, int bias);
  // y = sum_i terms[i].first * value(terms[i].second); scalar inputs only.
  int weighted_sum(const std::vector<std::pair<double, int>>& terms);

  // Seeds d(root) = seed and sweeps the tape in reverse creation order.
  // Parameter leaves accumulate into their ParamTensor::grad.
  void backward(int root, double seed = 1.0);

 private:
  std::vector<Node> nodes_;
};

}  // namespace ordseq
