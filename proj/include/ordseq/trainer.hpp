#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ordseq/augment.hpp"
#include "ordseq/corpus.hpp"
#include "ordseq/encoder.hpp"
#include "ordseq/losses.hpp"
#include "ordseq/metrics.hpp"
#include "ordseq/model.hpp"

namespace ordseq {

struct TrainConfig {
  double base_lr = 1e-4;
  double weight_decay = 0.01;
  double warmup_fraction = 0.10;
  std::size_t batch_size = 8;
  int accumulation_steps = 2;
  double clip_norm = 1.0;
  int max_epochs = 30;
  int patience = 5;
  std::uint64_t seed = 42;
  LossConfig loss;
  ModelConfig model;
  AugmentConfig augment;

  void validate() const;
};

// Linear warmup to base_lr over ceil(warmup_fraction * total_steps) updates,
// then cosine decay to 0 at total_steps. Continuous at the boundary.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

// First/second Adam moments, parallel to a parameter list; sized lazily on
// the first step.
struct AdamState {
  std::vector<Tensor> m, v;
  long step = 0;
};

// Decoupled-weight-decay Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias
// corrected). Decay multiplies only parameters flagged decay=true.
void adamw_step(std::vector<ParamTensor>& params, AdamState& state, double lr,
                double weight_decay);

// Global L2 clipping across all parameter gradients; returns the pre-clip
// norm.
double clip_gradients(std::vector<ParamTensor>& params, double max_norm);

struct TrainState {
  ModelParams params;
  AdamState opt;
  Rng rng;
  long update_step = 0;  // optimizer updates applied so far

  TrainState(const ModelConfig& model_cfg, std::uint64_t seed)
      : params(model_cfg), rng(seed) {}
};

struct AugmentAudit {
  long train_calls = 0;
  long val_calls = 0;  // stays 0: evaluation never touches the augmenter
};

// One pass over the (shuffled) training records: augment -> encode -> forward
// -> backward with seed 1/accumulation_steps; every accumulation_steps
// micro-batches the gradients are clipped and applied at lr_at(update_step),
// and a trailing partial accumulation is flushed at the end. Returns the
// example-weighted mean loss.
double train_epoch(TrainState& state, const std::vector<SequenceRecord>& train,
                   const Encoder& encoder, const SynonymLexicon& lexicon, const TrainConfig& cfg,
                   long total_steps, AugmentAudit* audit = nullptr);

// Eval-mode predictions in record order, batched by cfg batch size.
std::vector<Prediction> evaluate(ModelParams& params, const std::vector<SequenceRecord>& records,
                                 const Encoder& encoder, std::size_t batch_size);

struct EpochLog {
  int fold = -1;
  int epoch = 0;
  double train_loss = 0, val_macro_f1 = 0, val_mae = 0, val_qwk = 0, lr = 0;
};

struct FitResult {
  ModelParams params;  // best checkpoint, not the last epoch
  int best_epoch = 0;
  double best_val_macro_f1 = 0;
  std::vector<EpochLog> history;
  AugmentAudit audit;
};

// Trains with early stopping on validation macro-F1 (patience in epochs, ties
// keep the earlier epoch) and returns the best checkpoint.
FitResult fit(const std::vector<SequenceRecord>& train, const std::vector<SequenceRecord>& val,
              const Encoder& encoder, const SynonymLexicon& lexicon, const TrainConfig& cfg);

long updates_per_epoch(std::size_t n_records, const TrainConfig& cfg);

struct FoldResult {
  int fold = 0;
  FitResult fit;
  MetricReport val_report;
  std::vector<FoldPrediction> predictions;
  long coral_violations = 0;
};

struct CvResult {
  FoldAssignment assignment;
  std::string stratification_warning;
  std::vector<FoldResult> folds;
  OofReport oof;
  long coral_violations = 0;  // non-monotone coral outputs among OOF predictions
};

// Stratified k-fold cross-validation. Every fold trains from scratch with
// seed cfg.seed + fold and focal class weights recomputed from its own
// training split; out-of-fold predictions are pooled into one report. `jobs`
// folds run in parallel (results are independent of jobs).
CvResult run_cv(const std::vector<SequenceRecord>& records, int k, const TrainConfig& cfg,
                const Encoder& encoder, const SynonymLexicon& lexicon, int jobs = 1);

}  // namespace ordseq
