#include "ordseq/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ordseq/text.hpp"

namespace ordseq {
namespace {

void fill_uniform(Tensor& t, Rng& rng, double bound) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
}

void stats_of(const std::vector<double>& xs, double* mean, double* std_, double* min_,
              double* max_) {
  double m = 0.0, lo = xs[0], hi = xs[0];
  for (double x : xs) {
    m += x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  m /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  var /= static_cast<double>(xs.size());
  *mean = m;
  *std_ = std::sqrt(var);
  *min_ = lo;
  *max_ = hi;
}

void check_finite(const Graph& g, int id, const std::string& where) {
  if (!g.value(id).all_finite())
    throw std::runtime_error("forward: non-finite values after " + where);
}

void softmax4(const std::array<double, kNumClasses>& z, std::array<double, kNumClasses>& p) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (int i = 0; i < kNumClasses; ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (int i = 0; i < kNumClasses; ++i) p[i] /= s;
}

}  // namespace

void ModelConfig::validate() const {
  std::string errs;
  auto bad = [&](const std::string& m) {
    if (!errs.empty()) errs += "; ";
    errs += m;
  };
  if (dim == 0) bad("dim must be positive");
  if (transformer_layers < 1) bad("transformer_layers must be >= 1");
  if (attn_heads == 0 || dim % attn_heads != 0)
    bad("dim must be divisible by attn_heads");
  if (pool_heads == 0 || dim % pool_heads != 0)
    bad("dim must be divisible by pool_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0, 1)");
  if (stat_hidden == 0) bad("stat_hidden must be positive");
  if (!errs.empty()) throw std::invalid_argument("model config: " + errs);
}

ParamTensor& ModelParams::add(std::string name, std::vector<std::size_t> shape, bool decay) {
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), Tensor(std::move(shape)), decay);
  return params_.back();
}

ModelParams::ModelParams(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.dim, f = cfg_.ffn(), h = cfg_.stat_hidden;
  Rng rng(cfg_.seed);

  auto lin = [&](const std::string& w, const std::string& b, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    fill_uniform(add(w, {in, out}, true).value, rng, bound);
    fill_uniform(add(b, {out}, false).value, rng, bound);
  };
  auto norm = [&](const std::string& prefix) {
    add(prefix + "_scale", {d}, false).value.fill(1.0);
    add(prefix + "_shift", {d}, false).value.fill(0.0);
  };

  lin("temporal.weight", "temporal.bias", 1, d);
  norm("temporal.ln");

  for (int i = 0; i < cfg_.transformer_layers; ++i) {
    const std::string p = "transformer." + std::to_string(i) + ".";
    lin(p + "attn.wq", p + "attn.bq", d, d);
    lin(p + "attn.wk", p + "attn.bk", d, d);
    lin(p + "attn.wv", p + "attn.bv", d, d);
    lin(p + "attn.wo", p + "attn.bo", d, d);
    norm(p + "ln1");
    lin(p + "ffn.w1", p + "ffn.b1", d, f);
    lin(p + "ffn.w2", p + "ffn.b2", f, d);
    norm(p + "ln2");
  }

  ParamTensor& q = add("pool.query", {d}, true);
  const double qstd = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t j = 0; j < d; ++j) q.value[j] = rng.normal() * qstd;
  lin("pool.wq", "pool.bq", d, d);
  lin("pool.wk", "pool.bk", d, d);
  lin("pool.wv", "pool.bv", d, d);
  lin("pool.wo", "pool.bo", d, d);

  lin("stat.w1", "stat.b1", 8, h);
  lin("stat.w2", "stat.b2", h, h);
  lin("fusion.weight", "fusion.bias", d + h, d);

  fill_uniform(add("coral.weight", {d}, true).value, rng, qstd);
  add("coral.bias", {static_cast<std::size_t>(kNumClasses - 1)}, false).value.fill(0.0);
  lin("class.weight", "class.bias", d, kNumClasses);
}

ParamTensor& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("no parameter named " + name);
  return params_[it->second];
}

const ParamTensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("no parameter named " + name);
  return params_[it->second];
}

void ModelParams::zero_grads() {
  for (ParamTensor& p : params_) p.grad.fill(0.0);
}

std::array<double, kSeqLen> time_deltas(const std::array<long long, kSeqLen>& timestamps,
                                        int n_valid) {
  if (n_valid < 1 || n_valid > kSeqLen)
    throw std::invalid_argument("time_deltas: n_valid " + std::to_string(n_valid) +
                                " outside [1, " + std::to_string(kSeqLen) + "]");
  std::array<double, kSeqLen> out{};
  for (int i = 1; i < n_valid; ++i) {
    const long long gap = timestamps[i] - timestamps[i - 1];
    if (gap < 0)
      throw std::invalid_argument("time_deltas: timestamps decrease at position " +
                                  std::to_string(i));
    out[i] = std::min(static_cast<double>(gap) / 86400.0, 365.0);
  }
  return out;
}

StatFeatures stat_features(const SequenceRecord& rec) {
  rec.validate();
  std::vector<double> wc, dt;
  wc.reserve(rec.n_valid);
  dt.reserve(rec.n_valid);
  auto deltas = time_deltas(rec.timestamps, rec.n_valid);
  for (int i = 0; i < rec.n_valid; ++i) {
    wc.push_back(static_cast<double>(split_words(rec.posts[i]).size()));
    dt.push_back(deltas[i]);
  }
  StatFeatures s;
  stats_of(wc, &s.wc_mean, &s.wc_std, &s.wc_min, &s.wc_max);
  stats_of(dt, &s.dt_mean, &s.dt_std, &s.dt_min, &s.dt_max);
  return s;
}

Batch make_batch(const std::vector<SequenceRecord>& records, const Encoder& encoder) {
  const std::size_t B = records.size();
  if (B == 0) throw std::invalid_argument("make_batch: empty record list");
  const std::size_t d = encoder.dim();

  Batch b;
  b.embeddings = Tensor({B, kSeqLen, d});
  b.mask = Tensor({B, kSeqLen});
  b.deltas = Tensor({B, kSeqLen, 1});
  b.stats = Tensor({B, 8});
  b.labels.reserve(B);
  b.ids.reserve(B);

  for (std::size_t r = 0; r < B; ++r) {
    const SequenceRecord& rec = records[r];
    encoder.encode_sequence(rec, b.embeddings.data() + r * kSeqLen * d,
                            b.mask.data() + r * kSeqLen);
    auto dts = time_deltas(rec.timestamps, rec.n_valid);
    for (int i = 0; i < kSeqLen; ++i) b.deltas[r * kSeqLen + i] = dts[i];
    auto st = stat_features(rec).as_array();
    for (int i = 0; i < 8; ++i) b.stats.at(r, i) = st[i];
    b.labels.push_back(rec.label);
    b.ids.push_back(rec.record_id);
  }
  return b;
}

ForwardPass forward(ModelParams& params, const Batch& batch, Mode mode, Rng* rng) {
  const ModelConfig& cfg = params.config();
  const std::size_t B = batch.size(), d = cfg.dim;
  if (B == 0) throw std::invalid_argument("forward: empty batch");
  const bool training = mode == Mode::train;

  ForwardPass fp;
  Graph& g = fp.graph;
  auto P = [&](const std::string& name) { return g.param(params.get(name)); };
  auto drop = [&](int x) { return g.dropout(x, cfg.dropout, training, rng); };

  int e = g.leaf(batch.embeddings);
  int dts = g.leaf(batch.deltas);

  int t = g.linear(dts, P("temporal.weight"), P("temporal.bias"));
  t = g.layer_norm(t, P("temporal.ln_scale"), P("temporal.ln_shift"));
  t = drop(g.relu(t));
  check_finite(g, t, "temporal embedding");
  int x = g.add(e, t);  // (B, 5, d)

  if (cfg.use_transformer) {
    for (int i = 0; i < cfg.transformer_layers; ++i) {
      const std::string p = "transformer." + std::to_string(i) + ".";
      int q = g.linear(x, P(p + "attn.wq"), P(p + "attn.bq"));
      int k = g.linear(x, P(p + "attn.wk"), P(p + "attn.bk"));
      int v = g.linear(x, P(p + "attn.wv"), P(p + "attn.bv"));
      int a = g.multihead_attention(q, k, v, batch.mask, cfg.attn_heads);
      int o = drop(g.linear(a, P(p + "attn.wo"), P(p + "attn.bo")));
      x = g.layer_norm(g.add(x, o), P(p + "ln1_scale"), P(p + "ln1_shift"));

      int h = drop(g.gelu(g.linear(x, P(p + "ffn.w1"), P(p + "ffn.b1"))));
      h = drop(g.linear(h, P(p + "ffn.w2"), P(p + "ffn.b2")));
      x = g.layer_norm(g.add(x, h), P(p + "ln2_scale"), P(p + "ln2_shift"));
      check_finite(g, x, "transformer layer " + std::to_string(i));
    }
  }

  int pq = g.linear(g.tile_rows(P("pool.query"), B), P("pool.wq"), P("pool.bq"));
  int pk = g.linear(x, P("pool.wk"), P("pool.bk"));
  int pv = g.linear(x, P("pool.wv"), P("pool.bv"));
  int pa = g.multihead_attention(pq, pk, pv, batch.mask, cfg.pool_heads, &fp.pool_attn);
  int u = g.linear(pa, P("pool.wo"), P("pool.bo"));
  u = drop(g.reshape(u, {B, d}));
  check_finite(g, u, "attention pooling");

  int head_in = u;
  if (cfg.use_stat_features) {
    int s = g.leaf(batch.stats);
    s = g.relu(g.linear(s, P("stat.w1"), P("stat.b1")));
    s = g.relu(g.linear(s, P("stat.w2"), P("stat.b2")));
    head_in = g.linear(g.concat_cols(u, s), P("fusion.weight"), P("fusion.bias"));
    check_finite(g, head_in, "stat fusion");
  }

  fp.pooled = head_in;
  fp.coral_logits = g.rank_head(head_in, P("coral.weight"), P("coral.bias"));
  check_finite(g, fp.coral_logits, "coral head");
  fp.class_logits = g.linear(head_in, P("class.weight"), P("class.bias"));
  check_finite(g, fp.class_logits, "class head");
  return fp;
}

std::vector<DualOutput> extract_outputs(const ForwardPass& fp) {
  const Tensor& coral = fp.graph.value(fp.coral_logits);
  const Tensor& cls = fp.graph.value(fp.class_logits);
  const Tensor& pooled = fp.graph.value(fp.pooled);
  const std::size_t B = coral.dim(0), d = pooled.dim(1);

  std::vector<DualOutput> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    for (int k = 0; k < kNumClasses - 1; ++k) out[b].coral_logits[k] = coral.at(b, k);
    for (int k = 0; k < kNumClasses; ++k) out[b].class_logits[k] = cls.at(b, k);
    out[b].pooled.assign(pooled.data() + b * d, pooled.data() + (b + 1) * d);
  }
  return out;
}

std::array<double, kNumClasses> coral_to_probs(const std::array<double, 3>& coral_logits,
                                               bool* monotonic) {
  std::array<double, 3> q;
  for (int k = 0; k < 3; ++k) {
    const double z = coral_logits[k];
    q[k] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  if (monotonic != nullptr) *monotonic = q[0] >= q[1] && q[1] >= q[2];

  std::array<double, kNumClasses> p = {1.0 - q[0], q[0] - q[1], q[1] - q[2], q[2]};
  double sum = 0.0;
  for (double& v : p) {
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  // The raw entries telescope to exactly 1, and clamping only raises them, so
  // sum >= 1 here and the division is always safe.
  for (double& v : p) v /= sum;
  return p;
}

Prediction predict(const DualOutput& out) {
  Prediction pr;
  pr.p_coral = coral_to_probs(out.coral_logits, &pr.coral_monotone);
  softmax4(out.class_logits, pr.p_class);
  double best = -1.0;
  for (int i = 0; i < kNumClasses; ++i) {
    pr.p_final[i] = 0.5 * pr.p_coral[i] + 0.5 * pr.p_class[i];
    if (pr.p_final[i] >= best) {  // >= so ties land on the higher class
      best = pr.p_final[i];
      pr.label = i;
    }
  }
  return pr;
}

}  // namespace ordseq
