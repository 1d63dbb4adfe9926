#include "ordseq/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace ordseq {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

std::vector<SequenceRecord> augment_records(const std::vector<SequenceRecord>& in,
                                            const AugmentConfig& cfg,
                                            const SynonymLexicon& lexicon, Rng& rng,
                                            long* calls) {
  std::vector<SequenceRecord> out = in;
  for (SequenceRecord& rec : out) {
    for (int i = 0; i < rec.n_valid; ++i) {
      rec.posts[i] = augment_post(rec.posts[i], cfg, lexicon, rng);
      if (calls != nullptr) ++*calls;
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  std::string errs;
  auto bad = [&](const std::string& m) {
    if (!errs.empty()) errs += "; ";
    errs += m;
  };
  if (!(base_lr > 0)) bad("base_lr must be positive");
  if (weight_decay < 0) bad("weight_decay must be >= 0");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) bad("warmup_fraction must be in [0, 1)");
  if (batch_size == 0) bad("batch_size must be positive");
  if (accumulation_steps < 1) bad("accumulation_steps must be >= 1");
  if (!(clip_norm > 0)) bad("clip_norm must be positive");
  if (max_epochs < 1) bad("max_epochs must be >= 1");
  if (patience < 1) bad("patience must be >= 1");
  if (!errs.empty()) throw std::invalid_argument("train config: " + errs);
  loss.validate();
  model.validate();
  augment.validate();
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0) throw std::invalid_argument("lr_at: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  const long warmup =
      static_cast<long>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  if (warmup > 0 && step <= warmup)
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return 0.5 * cfg.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::vector<ParamTensor>& params, AdamState& state, double lr,
                double weight_decay) {
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const ParamTensor& p : params) {
      state.m.push_back(Tensor::zeros(p.value.shape()));
      state.v.push_back(Tensor::zeros(p.value.shape()));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adamw_step: optimizer state does not match parameter list");

  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = params[i];
    if (!p.grad.all_finite())
      throw std::runtime_error("adamw_step: non-finite gradient for " + p.name);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const double decay_factor = p.decay ? 1.0 - lr * weight_decay : 1.0;
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j];
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] = p.value[j] * decay_factor - lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

double clip_gradients(std::vector<ParamTensor>& params, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const ParamTensor& p : params)
    for (std::size_t j = 0; j < p.grad.numel(); ++j) sq += p.grad[j] * p.grad[j];
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (ParamTensor& p : params)
      for (std::size_t j = 0; j < p.grad.numel(); ++j) p.grad[j] *= scale;
  }
  return norm;
}

long updates_per_epoch(std::size_t n_records, const TrainConfig& cfg) {
  const long batches = static_cast<long>((n_records + cfg.batch_size - 1) / cfg.batch_size);
  return (batches + cfg.accumulation_steps - 1) / cfg.accumulation_steps;
}

double train_epoch(TrainState& state, const std::vector<SequenceRecord>& train,
                   const Encoder& encoder, const SynonymLexicon& lexicon, const TrainConfig& cfg,
                   long total_steps, AugmentAudit* audit) {
  if (train.empty()) throw std::invalid_argument("train_epoch: empty training set");

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  state.rng.shuffle(order);

  const double inv_accum = 1.0 / static_cast<double>(cfg.accumulation_steps);
  double loss_sum = 0.0;
  int pending = 0;  // micro-batches accumulated since the last update

  auto apply_update = [&]() {
    clip_gradients(state.params.all(), cfg.clip_norm);
    ++state.update_step;
    adamw_step(state.params.all(), state.opt, lr_at(state.update_step, total_steps, cfg),
               cfg.weight_decay);
    state.params.zero_grads();
    pending = 0;
  };

  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::vector<SequenceRecord> chunk;
    chunk.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) chunk.push_back(train[order[i]]);

    long* counter = audit != nullptr ? &audit->train_calls : nullptr;
    std::vector<SequenceRecord> augmented =
        augment_records(chunk, cfg.augment, lexicon, state.rng, counter);
    Batch batch = make_batch(augmented, encoder);

    ForwardPass fp = forward(state.params, batch, Mode::train, &state.rng);
    TotalLossParts parts;
    int loss_id = total_loss_node(fp.graph, fp.coral_logits, fp.class_logits, batch.labels,
                                  cfg.loss, &parts);
    fp.graph.backward(loss_id, inv_accum);
    loss_sum += parts.total * static_cast<double>(batch.size());

    if (++pending == cfg.accumulation_steps) apply_update();
  }
  if (pending > 0) apply_update();

  return loss_sum / static_cast<double>(train.size());
}

std::vector<Prediction> evaluate(ModelParams& params, const std::vector<SequenceRecord>& records,
                                 const Encoder& encoder, std::size_t batch_size) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty record list");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t end = std::min(records.size(), start + batch_size);
    std::vector<SequenceRecord> chunk(records.begin() + start, records.begin() + end);
    Batch batch = make_batch(chunk, encoder);
    ForwardPass fp = forward(params, batch, Mode::eval);
    for (const DualOutput& d : extract_outputs(fp)) out.push_back(predict(d));
  }
  return out;
}

FitResult fit(const std::vector<SequenceRecord>& train, const std::vector<SequenceRecord>& val,
              const Encoder& encoder, const SynonymLexicon& lexicon, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  if (val.empty()) throw std::invalid_argument("fit: empty validation set");

  TrainState state(cfg.model, cfg.seed);
  const long total_steps = static_cast<long>(cfg.max_epochs) * updates_per_epoch(train.size(), cfg);

  std::vector<int> val_true;
  val_true.reserve(val.size());
  for (const SequenceRecord& r : val) val_true.push_back(r.label);

  FitResult res{state.params, 0, -1.0, {}, {}};
  int since_improvement = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double train_loss =
        train_epoch(state, train, encoder, lexicon, cfg, total_steps, &res.audit);

    std::vector<Prediction> preds = evaluate(state.params, val, encoder, cfg.batch_size);
    std::vector<int> val_pred;
    val_pred.reserve(preds.size());
    for (const Prediction& p : preds) val_pred.push_back(p.label);

    ConfusionMatrix cm = confusion(val_true, val_pred);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_loss;
    log.val_macro_f1 = macro_f1(cm);
    log.val_mae = mae(val_true, val_pred);
    log.val_qwk = qwk(val_true, val_pred);
    log.lr = lr_at(state.update_step, total_steps, cfg);
    res.history.push_back(log);

    if (log.val_macro_f1 > res.best_val_macro_f1) {
      res.best_val_macro_f1 = log.val_macro_f1;
      res.best_epoch = epoch;
      res.params = state.params;
      since_improvement = 0;
    } else if (++since_improvement >= cfg.patience) {
      break;
    }
  }
  return res;
}

CvResult run_cv(const std::vector<SequenceRecord>& records, int k, const TrainConfig& cfg,
                const Encoder& encoder, const SynonymLexicon& lexicon, int jobs) {
  cfg.validate();
  if (jobs < 1) throw std::invalid_argument("run_cv: jobs must be >= 1");

  CvResult cv;
  cv.assignment = stratified_folds(records, k, cfg.seed, &cv.stratification_warning);

  std::vector<std::vector<SequenceRecord>> train_sets(k), val_sets(k);
  for (const SequenceRecord& r : records) {
    const int f = cv.assignment.assignment.at(r.record_id);
    for (int j = 0; j < k; ++j) (j == f ? val_sets : train_sets)[j].push_back(r);
  }

  cv.folds.resize(k, FoldResult{0, FitResult{ModelParams(cfg.model), 0, 0, {}, {}}, {}, {}});

  auto run_fold = [&](int f) {
    TrainConfig fc = cfg;
    fc.seed = cfg.seed + static_cast<std::uint64_t>(f);
    fc.model.seed = fc.seed;
    fc.loss.alpha = class_weights(class_distribution(train_sets[f]));

    FoldResult& fr = cv.folds[f];
    fr.fold = f;
    fr.fit = fit(train_sets[f], val_sets[f], encoder, lexicon, fc);
    for (EpochLog& log : fr.fit.history) log.fold = f;

    std::vector<Prediction> preds =
        evaluate(fr.fit.params, val_sets[f], encoder, fc.batch_size);
    std::vector<int> yt, yp;
    for (std::size_t i = 0; i < val_sets[f].size(); ++i) {
      const SequenceRecord& rec = val_sets[f][i];
      fr.predictions.push_back(FoldPrediction{rec.record_id, f, rec.label, preds[i].label});
      yt.push_back(rec.label);
      yp.push_back(preds[i].label);
      if (!preds[i].coral_monotone) ++fr.coral_violations;
    }
    fr.val_report = compute_report(yt, yp);
  };

  if (jobs == 1 || k == 1) {
    for (int f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) run_fold(f);
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, k);
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<FoldPrediction> all;
  for (const FoldResult& fr : cv.folds) {
    all.insert(all.end(), fr.predictions.begin(), fr.predictions.end());
    cv.coral_violations += fr.coral_violations;
  }
  cv.oof = oof_report(all);
  return cv;
}

}  // namespace ordseq
