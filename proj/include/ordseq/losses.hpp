#pragma once

#include <array>
#include <vector>

#include "ordseq/corpus.hpp"
#include "ordseq/graph.hpp"

namespace ordseq {

struct LossConfig {
  double w_coral = 0.5;
  double w_ce = 0.3;
  double w_focal = 0.2;
  double smoothing = 0.1;   // label-smoothing epsilon
  double focal_gamma = 2.0;
  // When false (default) the smoothed targets are the literal
  // {1 - eps, eps/4, ...} assignment whose mass sums to 1 - eps/4; the
  // normalized variant adds eps/4 back onto the true class.
  bool normalized_smoothing = false;
  std::array<double, kNumClasses> alpha = {1.0, 1.0, 1.0, 1.0};  // focal class weights

  void validate() const;
};

// Binary threshold targets t_k = 1[y > k], non-increasing in k.
std::array<int, 3> coral_targets(int label);

// Per-example losses (batch variants reduce by mean).
double coral_loss(const std::array<double, 3>& coral_logits, int label);
double smoothed_ce(const std::array<double, kNumClasses>& class_logits, int label, double eps,
                   bool normalized = false);
double focal_loss(const std::array<double, kNumClasses>& class_logits, int label, double gamma,
                  const std::array<double, kNumClasses>& alpha);

// Mean-normalized inverse class frequencies: alpha_i = N / (4 * n_i).
// A zero-count class is an error (the data needs augmentation or merging).
std::array<double, kNumClasses> class_weights(const ClassDistribution& dist);

// ---- tape nodes (scalar outputs, batch mean) ----
int coral_loss_node(Graph& g, int coral_logits, const std::vector<int>& labels);
int smoothed_ce_node(Graph& g, int class_logits, const std::vector<int>& labels, double eps,
                     bool normalized);
int focal_loss_node(Graph& g, int class_logits, const std::vector<int>& labels, double gamma,
                    const std::array<double, kNumClasses>& alpha);

struct TotalLossParts {
  double coral = 0.0, ce = 0.0, focal = 0.0, total = 0.0;
};

// L = w_coral * L_CORAL(coral head) + w_ce * L_CE + w_focal * L_Focal, all on
// the same tape so one backward() routes gradients through both heads.
int total_loss_node(Graph& g, int coral_logits, int class_logits, const std::vector<int>& labels,
                    const LossConfig& cfg, TotalLossParts* parts = nullptr);

}  // namespace ordseq
