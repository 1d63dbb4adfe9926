#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "ordseq/losses.hpp"

using namespace ordseq;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::array<double, 4> softmax4(const std::array<double, 4>& z) {
  const double m = std::max(std::max(z[0], z[1]), std::max(z[2], z[3]));
  std::array<double, 4> p{};
  double s = 0;
  for (int i = 0; i < 4; ++i) s += p[i] = std::exp(z[i] - m);
  for (int i = 0; i < 4; ++i) p[i] /= s;
  return p;
}

// Direct transcription of the loss definitions, kept deliberately naive.
double naive_coral(const std::array<double, 3>& z, int y) {
  double loss = 0;
  for (int k = 0; k < 3; ++k) {
    const int t = y > k ? 1 : 0;
    const double q = sigmoid(z[k]);
    loss -= t * std::log(q) + (1 - t) * std::log(1 - q);
  }
  return loss;
}

double naive_smoothed_ce(const std::array<double, 4>& z, int y, double eps) {
  const auto p = softmax4(z);
  double loss = 0;
  for (int c = 0; c < 4; ++c) {
    const double target = c == y ? 1.0 - eps : eps / 4.0;
    loss -= target * std::log(p[c]);
  }
  return loss;
}

double naive_focal(const std::array<double, 4>& z, int y, double gamma,
                   const std::array<double, 4>& alpha) {
  const double py = softmax4(z)[y];
  return -alpha[y] * std::pow(1.0 - py, gamma) * std::log(py);
}

std::array<double, 4> rand_logits(Rng& rng) {
  return {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
}

Tensor logits_tensor(const std::vector<std::array<double, 4>>& rows) {
  Tensor t = Tensor::zeros({rows.size(), 4});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < 4; ++c) t.at(r, c) = rows[r][c];
  return t;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("coral_targets matches the exhaustive truth table") {
    CHECK(coral_targets(0) == std::array<int, 3>{0, 0, 0});
    CHECK(coral_targets(1) == std::array<int, 3>{1, 0, 0});
    CHECK(coral_targets(2) == std::array<int, 3>{1, 1, 0});
    CHECK(coral_targets(3) == std::array<int, 3>{1, 1, 1});
    CHECK_THROWS_AS(coral_targets(4), std::invalid_argument);
    CHECK_THROWS_AS(coral_targets(-1), std::invalid_argument);
  }

  TEST_CASE("coral_loss at zero logits is 3 ln 2") {
    for (int y = 0; y < 4; ++y)
      CHECK(coral_loss({0, 0, 0}, y) == doctest::Approx(3 * std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("losses match naive formulas on random logits") {
    Rng rng(300);
    for (int t = 0; t < 1000; ++t) {
      const int y = static_cast<int>(rng.below(4));
      const std::array<double, 3> zc = {rng.uniform(-6, 6), rng.uniform(-6, 6),
                                        rng.uniform(-6, 6)};
      const auto z = rand_logits(rng);
      const std::array<double, 4> alpha = {rng.uniform(0.2, 3), rng.uniform(0.2, 3),
                                           rng.uniform(0.2, 3), rng.uniform(0.2, 3)};
      CHECK(coral_loss(zc, y) == doctest::Approx(naive_coral(zc, y)).epsilon(1e-10));
      CHECK(smoothed_ce(z, y, 0.1) == doctest::Approx(naive_smoothed_ce(z, y, 0.1)).epsilon(1e-10));
      CHECK(focal_loss(z, y, 2.0, alpha) ==
            doctest::Approx(naive_focal(z, y, 2.0, alpha)).epsilon(1e-10));
    }
  }

  TEST_CASE("smoothed CE on uniform logits equals 0.975 ln 4") {
    const double expect = 0.975 * std::log(4.0);
    CHECK(smoothed_ce({0, 0, 0, 0}, 2, 0.1) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(1.3517).epsilon(1e-4));
  }

  TEST_CASE("normalized smoothing returns the eps/4 mass to the true class") {
    // Targets then sum to one; on uniform logits the loss is exactly ln 4.
    CHECK(smoothed_ce({0, 0, 0, 0}, 1, 0.1, true) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }

  TEST_CASE("eps = 0 reduces smoothed CE to plain cross-entropy") {
    Rng rng(301);
    for (int t = 0; t < 200; ++t) {
      const auto z = rand_logits(rng);
      const int y = static_cast<int>(rng.below(4));
      const double plain = -std::log(softmax4(z)[y]);
      CHECK(smoothed_ce(z, y, 0.0) == doctest::Approx(plain).epsilon(1e-12));
    }
  }

  TEST_CASE("gamma = 0 with unit alpha reduces focal loss to cross-entropy") {
    Rng rng(302);
    const std::array<double, 4> ones = {1, 1, 1, 1};
    for (int t = 0; t < 200; ++t) {
      const auto z = rand_logits(rng);
      const int y = static_cast<int>(rng.below(4));
      const double plain = -std::log(softmax4(z)[y]);
      CHECK(focal_loss(z, y, 0.0, ones) == doctest::Approx(plain).epsilon(1e-12));
    }
  }

  TEST_CASE("focal loss hand value: p_y = 0.9, gamma = 2") {
    // Construct logits whose softmax puts exactly 0.9 on class 0: with the
    // other three classes equal, z0 - z = log(27).
    const double z0 = std::log(27.0);
    const std::array<double, 4> z = {z0, 0, 0, 0};
    CHECK(softmax4(z)[0] == doctest::Approx(0.9).epsilon(1e-12));
    const double expect = -0.01 * std::log(0.9);
    CHECK(focal_loss(z, 0, 2.0, {1, 1, 1, 1}) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(expect == doctest::Approx(1.0536e-3).epsilon(1e-3));
  }

  TEST_CASE("class weights are mean-normalized inverse frequencies") {
    std::vector<SequenceRecord> records;
    const std::array<long, 4> counts = {2480, 3536, 1019, 348};
    int id = 0;
    for (int c = 0; c < 4; ++c)
      for (long i = 0; i < counts[c]; ++i) {
        SequenceRecord r;
        r.record_id = std::to_string(id++);
        r.label = c;
        r.n_valid = 5;
        records.push_back(r);
      }
    const auto alpha = class_weights(class_distribution(records));
    CHECK(alpha[0] == doctest::Approx(0.7442).epsilon(1e-3));
    CHECK(alpha[1] == doctest::Approx(0.5219).epsilon(1e-3));
    CHECK(alpha[2] == doctest::Approx(1.8113).epsilon(1e-3));
    CHECK(alpha[3] == doctest::Approx(5.3039).epsilon(1e-3));
    // Weighted mean count recovers N/4.
    double s = 0;
    for (int c = 0; c < 4; ++c) s += static_cast<double>(counts[c]) * alpha[c];
    CHECK(s == doctest::Approx(7383.0).epsilon(1e-12));

    ClassDistribution zero;
    zero.counts = {5, 0, 3, 2};
    CHECK_THROWS_WITH_AS(class_weights(zero), doctest::Contains("class 1"), std::runtime_error);
  }

  TEST_CASE("total loss is the documented weighted sum") {
    Rng rng(303);
    for (int t = 0; t < 50; ++t) {
      const std::size_t B = 1 + rng.below(4);
      std::vector<std::array<double, 4>> zc_rows(B), z_rows(B);
      std::vector<std::array<double, 3>> coral_rows(B);
      std::vector<int> labels(B);
      Tensor coral = Tensor::zeros({B, 3});
      for (std::size_t b = 0; b < B; ++b) {
        labels[b] = static_cast<int>(rng.below(4));
        for (int k = 0; k < 3; ++k) coral.at(b, k) = coral_rows[b][k] = rng.uniform(-4, 4);
        z_rows[b] = rand_logits(rng);
      }
      LossConfig cfg;
      cfg.alpha = {0.7, 0.5, 1.8, 5.3};

      Graph g;
      int zc = g.leaf(coral);
      int z = g.leaf(logits_tensor(z_rows));
      TotalLossParts parts;
      int root = total_loss_node(g, zc, z, labels, cfg, &parts);

      double mc = 0, me = 0, mf = 0;
      for (std::size_t b = 0; b < B; ++b) {
        mc += naive_coral(coral_rows[b], labels[b]);
        me += naive_smoothed_ce(z_rows[b], labels[b], cfg.smoothing);
        mf += naive_focal(z_rows[b], labels[b], cfg.focal_gamma, cfg.alpha);
      }
      mc /= B, me /= B, mf /= B;
      CHECK(parts.coral == doctest::Approx(mc).epsilon(1e-10));
      CHECK(parts.ce == doctest::Approx(me).epsilon(1e-10));
      CHECK(parts.focal == doctest::Approx(mf).epsilon(1e-10));
      const double expect = 0.5 * mc + 0.3 * me + 0.2 * mf;
      CHECK(parts.total == doctest::Approx(expect).epsilon(1e-12));
      CHECK(g.value(root)[0] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("loss node gradients match finite differences") {
    Rng rng(304);
    const std::size_t B = 3;
    ParamTensor coral("coral", Tensor::zeros({B, 3}), true);
    ParamTensor cls("cls", Tensor::zeros({B, 4}), true);
    for (std::size_t i = 0; i < coral.value.numel(); ++i) coral.value[i] = rng.uniform(-3, 3);
    for (std::size_t i = 0; i < cls.value.numel(); ++i) cls.value[i] = rng.uniform(-3, 3);
    const std::vector<int> labels = {0, 2, 3};
    LossConfig cfg;
    cfg.alpha = {0.7, 0.5, 1.8, 5.3};

    auto build = [&](Graph& g) {
      return total_loss_node(g, g.param(coral), g.param(cls), labels, cfg, nullptr);
    };
    coral.grad.fill(0);
    cls.grad.fill(0);
    {
      Graph g;
      g.backward(build(g));
    }
    const double h = 1e-6;
    auto eval = [&] {
      Graph g;
      return g.value(build(g))[0];
    };
    for (ParamTensor* p : {&coral, &cls}) {
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        const double v = p->value[i];
        p->value[i] = v + h;
        const double f1 = eval();
        p->value[i] = v - h;
        const double f2 = eval();
        p->value[i] = v;
        const double fd = (f1 - f2) / (2 * h);
        INFO(p->name << "[" << i << "]");
        CHECK(p->grad[i] == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("loss config validation") {
    LossConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.smoothing = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.focal_gamma = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.w_coral = -0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.alpha[2] = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}
