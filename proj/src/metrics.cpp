#include "ordseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace ordseq {
namespace {

void check_pairs(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                 const char* where) {
  if (y_true.empty())
    throw std::invalid_argument(std::string(where) + ": empty label lists");
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument(std::string(where) + ": length mismatch (" +
                                std::to_string(y_true.size()) + " vs " +
                                std::to_string(y_pred.size()) + ")");
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= kNumClasses || y_pred[i] < 0 || y_pred[i] >= kNumClasses)
      throw std::invalid_argument(std::string(where) + ": label outside {0..3} at index " +
                                  std::to_string(i));
  }
}

}  // namespace

long ConfusionMatrix::n() const {
  long total = 0;
  for (const auto& row : counts)
    for (long c : row) total += c;
  return total;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j) counts[i][j] += other.counts[i][j];
  return *this;
}

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_pairs(y_true, y_pred, "confusion");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) ++cm.counts[y_true[i]][y_pred[i]];
  return cm;
}

std::array<double, kNumClasses> per_class_f1(const ConfusionMatrix& cm) {
  std::array<double, kNumClasses> f1{};
  for (int c = 0; c < kNumClasses; ++c) {
    long tp = cm.counts[c][c], fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    const long denom = 2 * tp + fp + fn;
    f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return f1;
}

double macro_f1(const ConfusionMatrix& cm) {
  auto f1 = per_class_f1(cm);
  double s = 0.0;
  for (double v : f1) s += v;
  return s / kNumClasses;
}

double weighted_f1(const ConfusionMatrix& cm) {
  auto f1 = per_class_f1(cm);
  double s = 0.0;
  long total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    long support = 0;
    for (int j = 0; j < kNumClasses; ++j) support += cm.counts[c][j];
    s += f1[c] * static_cast<double>(support);
    total += support;
  }
  return total == 0 ? 0.0 : s / static_cast<double>(total);
}

double mae(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_pairs(y_true, y_pred, "mae");
  long s = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::abs(y_true[i] - y_pred[i]);
  return static_cast<double>(s) / static_cast<double>(y_true.size());
}

double qwk(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_pairs(y_true, y_pred, "qwk");
  ConfusionMatrix cm = confusion(y_true, y_pred);
  const double n = static_cast<double>(cm.n());

  std::array<double, kNumClasses> row_marg{}, col_marg{};
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j) {
      row_marg[i] += static_cast<double>(cm.counts[i][j]);
      col_marg[j] += static_cast<double>(cm.counts[i][j]);
    }

  double wo = 0.0, we = 0.0;
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / 9.0;
      wo += w * static_cast<double>(cm.counts[i][j]);
      we += w * row_marg[i] * col_marg[j] / n;
    }

  if (we == 0.0) {
    // Both marginals concentrated on a single identical class.
    bool diagonal = true;
    for (int i = 0; i < kNumClasses && diagonal; ++i)
      for (int j = 0; j < kNumClasses; ++j)
        if (i != j && cm.counts[i][j] != 0) {
          diagonal = false;
          break;
        }
    if (diagonal) return 1.0;
    throw std::domain_error("qwk: expected agreement is zero but observations disagree");
  }
  return 1.0 - wo / we;
}

MetricReport compute_report(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  MetricReport r;
  r.confusion = confusion(y_true, y_pred);
  r.per_class_f1 = per_class_f1(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  r.weighted_f1 = weighted_f1(r.confusion);
  r.mae = mae(y_true, y_pred);
  r.qwk = qwk(y_true, y_pred);
  r.n = r.confusion.n();
  return r;
}

OofReport oof_report(const std::vector<FoldPrediction>& preds) {
  if (preds.empty()) throw std::invalid_argument("oof_report: no predictions");

  std::set<std::string> seen;
  int max_fold = 0;
  for (const FoldPrediction& p : preds) {
    if (!seen.insert(p.record_id).second)
      throw std::invalid_argument("oof_report: record " + p.record_id + " predicted twice");
    if (p.fold < 0) throw std::invalid_argument("oof_report: negative fold index");
    max_fold = std::max(max_fold, p.fold);
  }

  OofReport r;
  std::vector<int> yt, yp;
  yt.reserve(preds.size());
  yp.reserve(preds.size());
  std::vector<std::vector<int>> fyt(max_fold + 1), fyp(max_fold + 1);
  for (const FoldPrediction& p : preds) {
    yt.push_back(p.y_true);
    yp.push_back(p.y_pred);
    fyt[p.fold].push_back(p.y_true);
    fyp[p.fold].push_back(p.y_pred);
  }
  r.pooled = compute_report(yt, yp);
  r.per_fold.reserve(max_fold + 1);
  for (int f = 0; f <= max_fold; ++f) {
    if (fyt[f].empty())
      throw std::invalid_argument("oof_report: fold " + std::to_string(f) + " has no predictions");
    r.per_fold.push_back(compute_report(fyt[f], fyp[f]));
  }
  return r;
}

}  // namespace ordseq
