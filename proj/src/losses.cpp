#include "ordseq/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ordseq {
namespace {

// log(1 + e^x) without overflow for large |x|.
double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax_row(const double* z, int n, double* p) {
  double m = z[0];
  for (int i = 1; i < n; ++i) m = std::max(m, z[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (int i = 0; i < n; ++i) p[i] /= s;
}

void check_label(int label, const char* where) {
  if (label < 0 || label >= kNumClasses)
    throw std::invalid_argument(std::string(where) + ": label " + std::to_string(label) +
                                " outside [0, " + std::to_string(kNumClasses - 1) + "]");
}

std::array<double, kNumClasses> smooth_targets(int label, double eps, bool normalized) {
  std::array<double, kNumClasses> t;
  for (int i = 0; i < kNumClasses; ++i) t[i] = eps / kNumClasses;
  t[label] = 1.0 - eps;
  if (normalized) t[label] += eps / kNumClasses;
  return t;
}

int batch_rows(const Tensor& z, int cols, const std::vector<int>& labels, const char* where) {
  if (z.rank() != 2 || static_cast<int>(z.dim(1)) != cols)
    throw std::invalid_argument(std::string(where) + ": logits must be (B, " +
                                std::to_string(cols) + "), got " + z.shape_str());
  int B = static_cast<int>(z.dim(0));
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument(std::string(where) + ": labels size " +
                                std::to_string(labels.size()) + " != batch " + std::to_string(B));
  return B;
}

}  // namespace

void LossConfig::validate() const {
  std::string errs;
  auto bad = [&](const std::string& m) {
    if (!errs.empty()) errs += "; ";
    errs += m;
  };
  if (w_coral < 0 || w_ce < 0 || w_focal < 0) bad("loss weights must be >= 0");
  if (w_coral + w_ce + w_focal <= 0) bad("at least one loss weight must be positive");
  if (smoothing < 0 || smoothing >= 1) bad("smoothing must be in [0, 1)");
  if (focal_gamma < 0) bad("focal_gamma must be >= 0");
  for (double a : alpha)
    if (!(a > 0)) {
      bad("focal alpha entries must be > 0");
      break;
    }
  if (!errs.empty()) throw std::invalid_argument("loss config: " + errs);
}

std::array<int, 3> coral_targets(int label) {
  check_label(label, "coral_targets");
  std::array<int, 3> t;
  for (int k = 0; k < kNumClasses - 1; ++k) t[k] = label > k ? 1 : 0;
  return t;
}

double coral_loss(const std::array<double, 3>& coral_logits, int label) {
  auto t = coral_targets(label);
  double loss = 0.0;
  for (int k = 0; k < kNumClasses - 1; ++k) {
    // -[t log sigma(z) + (1-t) log(1 - sigma(z))] = softplus(z) - t z
    loss += softplus(coral_logits[k]) - t[k] * coral_logits[k];
  }
  return loss;
}

double smoothed_ce(const std::array<double, kNumClasses>& class_logits, int label, double eps,
                   bool normalized) {
  check_label(label, "smoothed_ce");
  std::array<double, kNumClasses> p;
  softmax_row(class_logits.data(), kNumClasses, p.data());
  auto t = smooth_targets(label, eps, normalized);
  double loss = 0.0;
  for (int i = 0; i < kNumClasses; ++i) loss -= t[i] * std::log(p[i]);
  return loss;
}

double focal_loss(const std::array<double, kNumClasses>& class_logits, int label, double gamma,
                  const std::array<double, kNumClasses>& alpha) {
  check_label(label, "focal_loss");
  std::array<double, kNumClasses> p;
  softmax_row(class_logits.data(), kNumClasses, p.data());
  double py = p[label];
  if (py >= 1.0) return 0.0;  // limit of (1-p)^g log p as p -> 1
  return -alpha[label] * std::pow(1.0 - py, gamma) * std::log(py);
}

std::array<double, kNumClasses> class_weights(const ClassDistribution& dist) {
  long total = 0;
  for (long c : dist.counts) total += c;
  std::array<double, kNumClasses> a;
  for (int i = 0; i < kNumClasses; ++i) {
    if (dist.counts[i] == 0)
      throw std::runtime_error(
          "class_weights: class " + std::to_string(i) +
          " has no training examples; augment the data or merge labels before training");
    a[i] = static_cast<double>(total) /
           (static_cast<double>(kNumClasses) * static_cast<double>(dist.counts[i]));
  }
  return a;
}

int coral_loss_node(Graph& g, int coral_logits, const std::vector<int>& labels) {
  const Tensor& z = g.value(coral_logits);
  const int B = batch_rows(z, kNumClasses - 1, labels, "coral_loss_node");

  double loss = 0.0;
  for (int b = 0; b < B; ++b) loss += coral_loss({z.at(b, 0), z.at(b, 1), z.at(b, 2)}, labels[b]);
  loss /= B;

  return g.make_node(Tensor::scalar(loss), [coral_logits, labels, B](Graph& g, int self) {
    const double go = g.grad_buf(self)[0];
    const Tensor& zz = g.value(coral_logits);
    Tensor& dz = g.grad_buf(coral_logits);
    for (int b = 0; b < B; ++b) {
      auto t = coral_targets(labels[b]);
      for (int k = 0; k < kNumClasses - 1; ++k)
        dz.at(b, k) += go * (sigmoid(zz.at(b, k)) - t[k]) / B;
    }
  });
}

int smoothed_ce_node(Graph& g, int class_logits, const std::vector<int>& labels, double eps,
                     bool normalized) {
  const Tensor& z = g.value(class_logits);
  const int B = batch_rows(z, kNumClasses, labels, "smoothed_ce_node");

  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    std::array<double, kNumClasses> row;
    for (int i = 0; i < kNumClasses; ++i) row[i] = z.at(b, i);
    loss += smoothed_ce(row, labels[b], eps, normalized);
  }
  loss /= B;

  return g.make_node(Tensor::scalar(loss),
                     [class_logits, labels, eps, normalized, B](Graph& g, int self) {
    const double go = g.grad_buf(self)[0];
    const Tensor& zz = g.value(class_logits);
    Tensor& dz = g.grad_buf(class_logits);
    for (int b = 0; b < B; ++b) {
      std::array<double, kNumClasses> p;
      softmax_row(zz.data() + static_cast<std::size_t>(b) * kNumClasses, kNumClasses, p.data());
      auto t = smooth_targets(labels[b], eps, normalized);
      double T = 0.0;
      for (double ti : t) T += ti;
      // d/dz_i of -sum_j t_j log p_j = T p_i - t_i
      for (int i = 0; i < kNumClasses; ++i) dz.at(b, i) += go * (T * p[i] - t[i]) / B;
    }
  });
}

int focal_loss_node(Graph& g, int class_logits, const std::vector<int>& labels, double gamma,
                    const std::array<double, kNumClasses>& alpha) {
  const Tensor& z = g.value(class_logits);
  const int B = batch_rows(z, kNumClasses, labels, "focal_loss_node");

  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    std::array<double, kNumClasses> row;
    for (int i = 0; i < kNumClasses; ++i) row[i] = z.at(b, i);
    loss += focal_loss(row, labels[b], gamma, alpha);
  }
  loss /= B;

  return g.make_node(Tensor::scalar(loss),
                     [class_logits, labels, gamma, alpha, B](Graph& g, int self) {
    const double go = g.grad_buf(self)[0];
    const Tensor& zz = g.value(class_logits);
    Tensor& dz = g.grad_buf(class_logits);
    for (int b = 0; b < B; ++b) {
      std::array<double, kNumClasses> p;
      softmax_row(zz.data() + static_cast<std::size_t>(b) * kNumClasses, kNumClasses, p.data());
      const int y = labels[b];
      const double py = p[y];
      const double a = alpha[y];
      // L = -a (1-py)^g log py, differentiated through py then softmax.
      double dLdpy;
      if (gamma == 0.0) {
        dLdpy = -a / py;
      } else if (py >= 1.0) {
        dLdpy = 0.0;  // both factor terms vanish for g > 1; g in (0,1] never hits py == 1 exactly
      } else {
        dLdpy = a * gamma * std::pow(1.0 - py, gamma - 1.0) * std::log(py) -
                a * std::pow(1.0 - py, gamma) / py;
      }
      // dpy/dz_i = py (delta_iy - p_i)
      for (int i = 0; i < kNumClasses; ++i) {
        const double d = (i == y ? 1.0 : 0.0) - p[i];
        dz.at(b, i) += go * dLdpy * py * d / B;
      }
    }
  });
}

int total_loss_node(Graph& g, int coral_logits, int class_logits, const std::vector<int>& labels,
                    const LossConfig& cfg, TotalLossParts* parts) {
  cfg.validate();
  int lc = coral_loss_node(g, coral_logits, labels);
  int le = smoothed_ce_node(g, class_logits, labels, cfg.smoothing, cfg.normalized_smoothing);
  int lf = focal_loss_node(g, class_logits, labels, cfg.focal_gamma, cfg.alpha);
  int total = g.weighted_sum({{cfg.w_coral, lc}, {cfg.w_ce, le}, {cfg.w_focal, lf}});
  if (parts) {
    parts->coral = g.value(lc)[0];
    parts->ce = g.value(le)[0];
    parts->focal = g.value(lf)[0];
    parts->total = g.value(total)[0];
  }
  return total;
}

}  // namespace ordseq
