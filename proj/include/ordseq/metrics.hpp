#pragma once

#include <array>
#include <string>
#include <vector>

#include "ordseq/corpus.hpp"

namespace ordseq {

// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

  long n() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

struct MetricReport {
  double macro_f1 = 0, weighted_f1 = 0, mae = 0, qwk = 0;
  std::array<double, kNumClasses> per_class_f1{};
  ConfusionMatrix confusion;
  long n = 0;
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Per-class F1 over the fixed label set {0..3}; a class whose precision and
// recall denominators are both zero contributes 0.
std::array<double, kNumClasses> per_class_f1(const ConfusionMatrix& cm);
double macro_f1(const ConfusionMatrix& cm);
double weighted_f1(const ConfusionMatrix& cm);

double mae(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// kappa = 1 - sum(w O) / sum(w E) with w_ij = (i-j)^2 / 9 and E the outer
// product of the marginals scaled to n. A zero expected mass means both
// marginals sit on one identical class: that is 1.0 when the observed matrix
// is purely diagonal and an error otherwise.
double qwk(const std::vector<int>& y_true, const std::vector<int>& y_pred);

MetricReport compute_report(const std::vector<int>& y_true, const std::vector<int>& y_pred);

struct FoldPrediction {
  std::string record_id;
  int fold = 0;
  int y_true = 0;
  int y_pred = 0;
};

struct OofReport {
  MetricReport pooled;
  std::vector<MetricReport> per_fold;  // indexed by fold
};

// Pools out-of-fold predictions (each record must appear exactly once) and
// computes metrics on the pooled pairs plus a per-fold breakdown.
OofReport oof_report(const std::vector<FoldPrediction>& preds);

}  // namespace ordseq
