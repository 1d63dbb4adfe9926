#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ordseq/corpus.hpp"
#include "ordseq/encoder.hpp"
#include "ordseq/graph.hpp"
#include "ordseq/tensor.hpp"

namespace ordseq {

enum class Mode { train, eval };

struct ModelConfig {
  std::size_t dim = 64;
  int transformer_layers = 3;
  std::size_t attn_heads = 8;
  std::size_t ffn_dim = 0;  // 0 means 4 * dim
  std::size_t pool_heads = 4;
  double dropout = 0.3;
  bool use_transformer = true;    // off: sequence encoder becomes identity
  bool use_stat_features = true;  // off: pooled vector feeds the heads directly
  std::size_t stat_hidden = 64;
  std::uint64_t seed = 42;

  std::size_t ffn() const { return ffn_dim != 0 ? ffn_dim : 4 * dim; }
  void validate() const;
};

// All trainable tensors, registered under stable names (the checkpoint key
// space). Construction allocates and initializes every branch regardless of
// ablation flags, so flipping a flag never shifts another tensor's init draws.
class ModelParams {
 public:
  explicit ModelParams(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamTensor& get(const std::string& name);
  const ParamTensor& get(const std::string& name) const;
  std::vector<ParamTensor>& all() { return params_; }
  const std::vector<ParamTensor>& all() const { return params_; }
  void zero_grads();

 private:
  ParamTensor& add(std::string name, std::vector<std::size_t> shape, bool decay);

  ModelConfig cfg_;
  std::vector<ParamTensor> params_;
  std::map<std::string, std::size_t> index_;
};

// Day-valued gaps between consecutive posts: position 0 gets 0, later valid
// positions min((t_i - t_{i-1}) / 86400, 365), padding positions 0.
std::array<double, kSeqLen> time_deltas(const std::array<long long, kSeqLen>& timestamps,
                                        int n_valid);

// Word-count and interval statistics over the valid posts (population std).
struct StatFeatures {
  double wc_mean = 0, wc_std = 0, wc_min = 0, wc_max = 0;
  double dt_mean = 0, dt_std = 0, dt_min = 0, dt_max = 0;

  std::array<double, 8> as_array() const {
    return {wc_mean, wc_std, wc_min, wc_max, dt_mean, dt_std, dt_min, dt_max};
  }
};

StatFeatures stat_features(const SequenceRecord& rec);

// Everything the forward pass consumes, in tensor form.
struct Batch {
  Tensor embeddings;  // (B, 5, d)
  Tensor mask;        // (B, 5), 1 = valid
  Tensor deltas;      // (B, 5, 1), day gaps
  Tensor stats;       // (B, 8)
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const std::vector<SequenceRecord>& records, const Encoder& encoder);

// The tape plus node ids of the interesting outputs. Keep the pass alive for
// backward(); extract_outputs() copies values out for inference use.
struct ForwardPass {
  Graph graph;
  int coral_logits = -1;  // (B, 3)
  int class_logits = -1;  // (B, 4)
  int pooled = -1;        // (B, d): the representation the heads read
  AttnRecord pool_attn;   // pooling attention weights, for inspection
};

// rng is required (and consumed) only when mode == train and dropout > 0.
ForwardPass forward(ModelParams& params, const Batch& batch, Mode mode, Rng* rng = nullptr);

struct DualOutput {
  std::array<double, 3> coral_logits{};
  std::array<double, kNumClasses> class_logits{};
  std::vector<double> pooled;
};

std::vector<DualOutput> extract_outputs(const ForwardPass& fp);

// q_k = sigmoid(z_k); adjacent differences (1-q0, q0-q1, q1-q2, q2), negatives
// clamped to 0 and the result renormalized to sum 1. If `monotonic` is given
// it reports whether q0 >= q1 >= q2 held (no clamping was needed).
std::array<double, kNumClasses> coral_to_probs(const std::array<double, 3>& coral_logits,
                                               bool* monotonic = nullptr);

struct Prediction {
  std::array<double, kNumClasses> p_final{};
  std::array<double, kNumClasses> p_coral{};
  std::array<double, kNumClasses> p_class{};
  int label = 0;
  bool coral_monotone = true;
};

// p_final = (coral_to_probs + softmax(class_logits)) / 2; argmax with ties
// resolved toward the higher class.
Prediction predict(const DualOutput& out);

}  // namespace ordseq
