#include "ordseq/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ordseq {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  return cdf + x * phi;
}

}  // namespace

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

int Graph::make_node(Tensor value, std::function<void(Graph&, int)> backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), nullptr});
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Tensor v) { return make_node(std::move(v)); }

int Graph::param(ParamTensor& p) {
  int id = make_node(p.value);
  nodes_[id].param = &p;
  return id;
}

int Graph::linear(int x, int w, int b) {
  const Tensor& xt = nodes_[x].value;
  const Tensor& wt = nodes_[w].value;
  if (wt.rank() != 2) throw std::invalid_argument("linear: weight must be 2-d");
  const std::size_t in = wt.dim(0), out = wt.dim(1);
  if (xt.rank() < 1 || xt.shape().back() != in) {
    throw std::invalid_argument("linear: input " + xt.shape_str() + " does not match weight " +
                                wt.shape_str());
  }
  const std::size_t rows = xt.numel() / in;

  std::vector<std::size_t> oshape = xt.shape();
  oshape.back() = out;
  Tensor y(std::move(oshape));
  {
    ConstMatMap X(xt.data(), rows, in);
    ConstMatMap W(wt.data(), in, out);
    MatMap Y(y.data(), rows, out);
    Y.noalias() = X * W;
  }
  if (b >= 0) {
    const Tensor& bt = nodes_[b].value;
    if (bt.numel() != out) throw std::invalid_argument("linear: bias size mismatch");
    for (std::size_t r = 0; r < rows; ++r) {
      double* yr = y.data() + r * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += bt[o];
    }
  }

  return make_node(std::move(y), [x, w, b, rows, in, out](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    const Tensor& xt = g.nodes_[x].value;
    const Tensor& wt = g.nodes_[w].value;
    ConstMatMap dY(dy.data(), rows, out);
    ConstMatMap X(xt.data(), rows, in);
    ConstMatMap W(wt.data(), in, out);
    {
      MatMap dX(g.grad_buf(x).data(), rows, in);
      dX.noalias() += dY * W.transpose();
    }
    {
      MatMap dW(g.grad_buf(w).data(), in, out);
      dW.noalias() += X.transpose() * dY;
    }
    if (b >= 0) {
      Tensor& db = g.grad_buf(b);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dyr = dy.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
      }
    }
  });
}

int Graph::add(int a, int b) {
  const Tensor& at = nodes_[a].value;
  const Tensor& bt = nodes_[b].value;
  if (!at.same_shape(bt)) throw std::invalid_argument("add: shape mismatch");
  Tensor y(at.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = at[i] + bt[i];
  return make_node(std::move(y), [a, b](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    Tensor& da = g.grad_buf(a);
    Tensor& db = g.grad_buf(b);
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      da[i] += dy[i];
      db[i] += dy[i];
    }
  });
}

int Graph::relu(int x) {
  const Tensor& xt = nodes_[x].value;
  Tensor y(xt.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xt[i] > 0.0 ? xt[i] : 0.0;
  return make_node(std::move(y), [x](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    const Tensor& xt = g.nodes_[x].value;
    Tensor& dx = g.grad_buf(x);
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      if (xt[i] > 0.0) dx[i] += dy[i];
    }
  });
}

int Graph::gelu(int x) {
  const Tensor& xt = nodes_[x].value;
  Tensor y(xt.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = gelu_scalar(xt[i]);
  return make_node(std::move(y), [x](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    const Tensor& xt = g.nodes_[x].value;
    Tensor& dx = g.grad_buf(x);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * gelu_grad(xt[i]);
  });
}

int Graph::layer_norm(int x, int scale, int shift, double eps) {
  const Tensor& xt = nodes_[x].value;
  const Tensor& st = nodes_[scale].value;
  const Tensor& bt = nodes_[shift].value;
  const std::size_t d = xt.shape().back();
  if (st.numel() != d || bt.numel() != d) throw std::invalid_argument("layer_norm: affine size");
  const std::size_t rows = xt.numel() / d;

  Tensor y(xt.shape());
  // xhat and istd are needed by backward; captured by value in the closure.
  Tensor xhat(xt.shape());
  std::vector<double> istd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xt.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    istd[r] = is;
    double* hr = xhat.data() + r * d;
    double* yr = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * is;
      yr[j] = st[j] * hr[j] + bt[j];
    }
  }

  return make_node(std::move(y), [x, scale, shift, rows, d, xhat = std::move(xhat),
                                  istd = std::move(istd)](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    const Tensor& st = g.nodes_[scale].value;
    Tensor& dx = g.grad_buf(x);
    Tensor& dscale = g.grad_buf(scale);
    Tensor& dshift = g.grad_buf(shift);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dyr = dy.data() + r * d;
      const double* hr = xhat.data() + r * d;
      double* dxr = dx.data() + r * d;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = dyr[j] * st[j];
        mean_dh += dh;
        mean_dh_h += dh * hr[j];
        dscale[j] += dyr[j] * hr[j];
        dshift[j] += dyr[j];
      }
      mean_dh /= static_cast<double>(d);
      mean_dh_h /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = dyr[j] * st[j];
        dxr[j] += istd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
      }
    }
  });
}

int Graph::dropout(int x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  if (rng == nullptr) throw std::invalid_argument("dropout: rng required in training mode");
  const Tensor& xt = nodes_[x].value;
  const double keep = 1.0 - rate;
  Tensor mask(xt.shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    mask[i] = rng->uniform01() >= rate ? 1.0 / keep : 0.0;
  }
  Tensor y(xt.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xt[i] * mask[i];
  return make_node(std::move(y), [x, mask = std::move(mask)](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    Tensor& dx = g.grad_buf(x);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * mask[i];
  });
}

int Graph::multihead_attention(int q, int k, int v, const Tensor& key_mask, std::size_t heads,
                               AttnRecord* record) {
  const Tensor& qt = nodes_[q].value;
  const Tensor& kt = nodes_[k].value;
  const Tensor& vt = nodes_[v].value;
  if (qt.rank() != 3 || kt.rank() != 3 || vt.rank() != 3) {
    throw std::invalid_argument("attention: q/k/v must be (B, L, d)");
  }
  const std::size_t B = qt.dim(0), Lq = qt.dim(1), d = qt.dim(2);
  const std::size_t Lk = kt.dim(1);
  if (kt.dim(0) != B || vt.dim(0) != B || vt.dim(1) != Lk || kt.dim(2) != d || vt.dim(2) != d) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  if (d % heads != 0) throw std::invalid_argument("attention: dim not divisible by heads");
  if (key_mask.dim(0) != B || key_mask.dim(1) != Lk) {
    throw std::invalid_argument("attention: key mask must be (B, Lk)");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Softmax runs over valid keys only, so masked keys carry weight exactly 0
  // and padded content can never leak into valid positions.
  Tensor attn({B, heads, Lq, Lk});
  Tensor out({B, Lq, d});
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::size_t> valid;
    for (std::size_t j = 0; j < Lk; ++j) {
      if (key_mask[b * Lk + j] != 0.0) valid.push_back(j);
    }
    if (valid.empty()) throw std::invalid_argument("attention: all keys masked for one sample");
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        const double* qrow = qt.data() + (b * Lq + i) * d + h * dh;
        double maxs = -1e300;
        std::vector<double> s(valid.size());
        for (std::size_t jj = 0; jj < valid.size(); ++jj) {
          const double* krow = kt.data() + (b * Lk + valid[jj]) * d + h * dh;
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += qrow[c] * krow[c];
          s[jj] = dot * scale;
          if (s[jj] > maxs) maxs = s[jj];
        }
        double z = 0.0;
        for (double& sv : s) {
          sv = std::exp(sv - maxs);
          z += sv;
        }
        double* arow = attn.data() + ((b * heads + h) * Lq + i) * Lk;
        for (std::size_t jj = 0; jj < valid.size(); ++jj) arow[valid[jj]] = s[jj] / z;
        double* orow = out.data() + (b * Lq + i) * d + h * dh;
        for (std::size_t jj = 0; jj < valid.size(); ++jj) {
          const double a = arow[valid[jj]];
          const double* vrow = vt.data() + (b * Lk + valid[jj]) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) orow[c] += a * vrow[c];
        }
      }
    }
  }
  if (record != nullptr) {
    record->heads = heads;
    record->lq = Lq;
    record->lk = Lk;
    record->batch = B;
    record->weights = attn.vec();
  }

  Tensor mask_copy = key_mask;
  return make_node(
      std::move(out), [q, k, v, B, Lq, Lk, d, dh, heads, scale, attn = std::move(attn),
                       mask = std::move(mask_copy)](Graph& g, int self) {
        const Tensor& dy = g.nodes_[self].grad;
        const Tensor& qt = g.nodes_[q].value;
        const Tensor& kt = g.nodes_[k].value;
        const Tensor& vt = g.nodes_[v].value;
        Tensor& dq = g.grad_buf(q);
        Tensor& dk = g.grad_buf(k);
        Tensor& dv = g.grad_buf(v);
        for (std::size_t b = 0; b < B; ++b) {
          std::vector<std::size_t> valid;
          for (std::size_t j = 0; j < Lk; ++j) {
            if (mask[b * Lk + j] != 0.0) valid.push_back(j);
          }
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < Lq; ++i) {
              const double* dyrow = dy.data() + (b * Lq + i) * d + h * dh;
              const double* arow = attn.data() + ((b * heads + h) * Lq + i) * Lk;
              // dA over valid keys, then softmax backward.
              std::vector<double> dA(valid.size());
              double inner = 0.0;
              for (std::size_t jj = 0; jj < valid.size(); ++jj) {
                const double* vrow = vt.data() + (b * Lk + valid[jj]) * d + h * dh;
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c) acc += dyrow[c] * vrow[c];
                dA[jj] = acc;
                inner += arow[valid[jj]] * acc;
                double* dvrow = dv.data() + (b * Lk + valid[jj]) * d + h * dh;
                const double a = arow[valid[jj]];
                for (std::size_t c = 0; c < dh; ++c) dvrow[c] += a * dyrow[c];
              }
              const double* qrow = qt.data() + (b * Lq + i) * d + h * dh;
              double* dqrow = dq.data() + (b * Lq + i) * d + h * dh;
              for (std::size_t jj = 0; jj < valid.size(); ++jj) {
                const double a = arow[valid[jj]];
                const double ds = a * (dA[jj] - inner) * scale;
                const double* krow = kt.data() + (b * Lk + valid[jj]) * d + h * dh;
                double* dkrow = dk.data() + (b * Lk + valid[jj]) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  dqrow[c] += ds * krow[c];
                  dkrow[c] += ds * qrow[c];
                }
              }
            }
          }
        }
      });
}

int Graph::tile_rows(int v, std::size_t b) {
  const Tensor& vt = nodes_[v].value;
  if (vt.rank() != 1) throw std::invalid_argument("tile_rows: input must be 1-d");
  const std::size_t n = vt.numel();
  Tensor y({b, 1, n});
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = vt[j];
  }
  return make_node(std::move(y), [v, b, n](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    Tensor& dv = g.grad_buf(v);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t j = 0; j < n; ++j) dv[j] += dy[r * n + j];
    }
  });
}

int Graph::concat_cols(int a, int b) {
  const Tensor& at = nodes_[a].value;
  const Tensor& bt = nodes_[b].value;
  if (at.rank() != 2 || bt.rank() != 2 || at.dim(0) != bt.dim(0)) {
    throw std::invalid_argument("concat_cols: inputs must be (B, *) with equal B");
  }
  const std::size_t B = at.dim(0), da = at.dim(1), db = bt.dim(1);
  Tensor y({B, da + db});
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t j = 0; j < da; ++j) y.at(r, j) = at.at(r, j);
    for (std::size_t j = 0; j < db; ++j) y.at(r, da + j) = bt.at(r, j);
  }
  return make_node(std::move(y), [a, b, B, da, db](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    Tensor& dat = g.grad_buf(a);
    Tensor& dbt = g.grad_buf(b);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t j = 0; j < da; ++j) dat.at(r, j) += dy.at(r, j);
      for (std::size_t j = 0; j < db; ++j) dbt.at(r, j) += dy.at(r, da + j);
    }
  });
}

int Graph::reshape(int x, std::vector<std::size_t> shape) {
  const Tensor& xt = nodes_[x].value;
  Tensor y(std::move(shape), xt.vec());
  return make_node(std::move(y), [x](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    Tensor& dx = g.grad_buf(x);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i];
  });
}

int Graph::rank_head(int u, int w, int bias) {
  const Tensor& ut = nodes_[u].value;
  const Tensor& wt = nodes_[w].value;
  const Tensor& bt = nodes_[bias].value;
  if (ut.rank() != 2 || wt.rank() != 1 || ut.dim(1) != wt.numel()) {
    throw std::invalid_argument("rank_head: u must be (B, d) and w (d)");
  }
  const std::size_t B = ut.dim(0), d = ut.dim(1), K = bt.numel();
  Tensor y({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    double dot = 0.0;
    const double* urow = ut.data() + b * d;
    for (std::size_t j = 0; j < d; ++j) dot += urow[j] * wt[j];
    for (std::size_t k = 0; k < K; ++k) y.at(b, k) = dot + bt[k];
  }
  return make_node(std::move(y), [u, w, bias, B, d, K](Graph& g, int self) {
    const Tensor& dy = g.nodes_[self].grad;
    const Tensor& ut = g.nodes_[u].value;
    const Tensor& wt = g.nodes_[w].value;
    Tensor& du = g.grad_buf(u);
    Tensor& dw = g.grad_buf(w);
    Tensor& db = g.grad_buf(bias);
    for (std::size_t b = 0; b < B; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        s += dy.at(b, k);
        db[k] += dy.at(b, k);
      }
      const double* urow = ut.data() + b * d;
      double* durow = du.data() + b * d;
      for (std::size_t j = 0; j < d; ++j) {
        durow[j] += s * wt[j];
        dw[j] += s * urow[j];
      }
    }
  });
}

int Graph::weighted_sum(const std::vector<std::pair<double, int>>& terms) {
  double acc = 0.0;
  for (const auto& [wgt, id] : terms) {
    if (nodes_[id].value.numel() != 1) throw std::invalid_argument("weighted_sum: scalar inputs only");
    acc += wgt * nodes_[id].value[0];
  }
  return make_node(Tensor::scalar(acc), [terms](Graph& g, int self) {
    const double dy = g.nodes_[self].grad[0];
    for (const auto& [wgt, id] : terms) g.grad_buf(id)[0] += wgt * dy;
  });
}

void Graph::backward(int root, double seed) {
  if (nodes_[root].value.numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  // Each call contributes exactly one gradient to the params; node buffers
  // from a previous sweep would otherwise be re-counted.
  for (Node& n : nodes_) {
    if (!n.grad.empty()) n.grad.fill(0.0);
  }
  grad_buf(root)[0] += seed;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;  // never touched, nothing flows through it
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      for (std::size_t j = 0; j < pg.numel(); ++j) pg[j] += n.grad[j];
    }
  }
}

}  // namespace ordseq
