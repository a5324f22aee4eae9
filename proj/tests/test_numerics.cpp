#include <gtest/gtest.h>

#include <cmath>

#include "tracediag/numerics.hpp"

using namespace tracediag;

namespace {

double entry(const NormalizedAdjacency& a, std::size_t r, std::size_t c) {
  for (const auto& e : a.entries)
    if (e.row == r && e.col == c) return e.weight;
  return 0.0;
}

// Dense D^-1/2 (A'+I) D^-1/2, written out without the sparse code path.
std::vector<std::vector<double>> dense_adjacency(const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                                 std::size_t n, bool sym) {
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (auto [s, d] : edges) {
    if (s == d) continue;
    a[s][d] = 1.0;
    if (sym) a[d][s] = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i][j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] /= std::sqrt(deg[i] * deg[j]);
  return a;
}

}  // namespace

TEST(Matrix, MatmulVariantsAgree) {
  Rng rng(1);
  DenseMatrix a(3, 4), b(4, 2), c(3, 2);
  for (auto& v : a.data()) v = rng.uniform(-1, 1);
  for (auto& v : b.data()) v = rng.uniform(-1, 1);
  for (auto& v : c.data()) v = rng.uniform(-1, 1);
  const auto ab = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(ab(i, j), s, 1e-15);
    }
  const auto atc = matmul_tn(a, c);  // 4x2
  const auto cbt = matmul_nt(c, b);  // 3x4
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a(k, i) * c(k, j);
      EXPECT_NEAR(atc(i, j), s, 1e-15);
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 2; ++k) s += c(i, k) * b(j, k);
      EXPECT_NEAR(cbt(i, j), s, 1e-15);
    }
  EXPECT_THROW(matmul(a, a), ContractError);
}

TEST(Adjacency, SingleNode) {
  const auto a = normalize_adjacency({}, 1);
  ASSERT_EQ(a.entries.size(), 1u);
  EXPECT_EQ(a.entries[0].row, 0u);
  EXPECT_EQ(a.entries[0].col, 0u);
  EXPECT_DOUBLE_EQ(a.entries[0].weight, 1.0);
}

TEST(Adjacency, TwoNodesAllHalf) {
  const auto a = normalize_adjacency({{0, 1}}, 2);
  ASSERT_EQ(a.entries.size(), 4u);
  for (const auto& e : a.entries) EXPECT_DOUBLE_EQ(e.weight, 0.5);
}

TEST(Adjacency, ChainCorners) {
  const auto a = normalize_adjacency({{0, 1}, {1, 2}}, 3);
  EXPECT_NEAR(entry(a, 0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(entry(a, 2, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(entry(a, 1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(entry(a, 0, 0), 0.5, 1e-15);
  EXPECT_EQ(entry(a, 0, 2), 0.0);
}

TEST(Adjacency, SymmetricAndMatchesDenseOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < 2 * n; ++k) edges.emplace_back(rng.below(n), rng.below(n));
    for (bool sym : {true, false}) {
      const auto a = normalize_adjacency(edges, n, sym);
      const auto d = dense_adjacency(edges, n, sym);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          EXPECT_NEAR(entry(a, i, j), d[i][j], 1e-15);
          if (sym) EXPECT_EQ(entry(a, i, j), entry(a, j, i));
        }
    }
  }
}

TEST(Adjacency, DuplicateEdgesCollapse) {
  const auto a = normalize_adjacency({{0, 1}, {0, 1}, {1, 0}}, 2);
  EXPECT_EQ(a.entries.size(), 4u);
}

TEST(Adjacency, ApplyExamples) {
  const auto a = normalize_adjacency({{0, 1}}, 2);
  const auto y = apply_adjacency(a, DenseMatrix(2, 1, std::vector<double>{2, 4}));
  EXPECT_DOUBLE_EQ(y(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 3.0);
  const auto id = normalize_adjacency({}, 3);
  const DenseMatrix x(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(apply_adjacency(id, x), x);
}

TEST(Adjacency, TransposedMatchesDense) {
  const std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {0, 2}, {2, 3}};
  const auto a = normalize_adjacency(edges, 4, false);
  const auto d = dense_adjacency(edges, 4, false);
  const DenseMatrix x(4, 1, std::vector<double>{1, -2, 3, 0.5});
  const auto y = apply_adjacency_transposed(a, x);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += d[i][j] * x(i, 0);
    EXPECT_NEAR(y(j, 0), s, 1e-15);
  }
}

TEST(Activations, Basics) {
  EXPECT_EQ(relu(-1.0), 0.0);
  EXPECT_EQ(relu(2.5), 2.5);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(3.0), 0.95257412682243, 1e-12);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  const std::vector<double> big{1000.0, 1000.0};
  const auto s = softmax(big);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
}

TEST(Loss, BceExamples) {
  const std::vector<double> z{0.0}, one{1.0}, zero{0.0};
  EXPECT_NEAR(loss_bce_weighted(z, one, 1.0).loss, std::log(2.0), 1e-15);
  const auto r = loss_bce_weighted(z, zero, 1.0);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.dlogits[0], 0.5, 1e-15);
  // pos_weight scales only the positive term
  EXPECT_NEAR(loss_bce_weighted(z, one, 3.0).loss, 3.0 * std::log(2.0), 1e-15);
  EXPECT_THROW(loss_bce_weighted(z, one, 0.0), ContractError);
}

TEST(Loss, CeExamples) {
  const DenseMatrix z(1, 2, std::vector<double>{0, 0});
  const std::vector<std::size_t> y{0};
  const std::vector<double> w{1, 1};
  EXPECT_NEAR(loss_ce_weighted(z, y, w).loss, std::log(2.0), 1e-15);
}

TEST(Loss, UniformWeightsGiveUnweightedCe) {
  Rng rng(2);
  DenseMatrix z(6, 3);
  for (auto& v : z.data()) v = rng.uniform(-3, 3);
  const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0};
  double ref = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += std::exp(z(i, j));
    ref += std::log(s) - z(i, y[i]);
  }
  ref /= 6;
  const std::vector<double> w1{1, 1, 1}, w2{2.5, 2.5, 2.5};
  EXPECT_NEAR(loss_ce_weighted(z, y, w1).loss, ref, 1e-12);
  EXPECT_NEAR(loss_ce_weighted(z, y, w2).loss, ref, 1e-12);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.below(5);
    // BCE
    std::vector<double> z(b), y(b);
    for (std::size_t i = 0; i < b; ++i) {
      z[i] = rng.uniform(-4, 4);
      y[i] = static_cast<double>(rng.below(2));
    }
    const double pw = rng.uniform(0.2, 5.0);
    const auto r = loss_bce_weighted(z, y, pw);
    const auto g = finite_difference_gradient(
        [&](std::span<const double> x) { return loss_bce_weighted(x, y, pw).loss; }, z);
    for (std::size_t i = 0; i < b; ++i) EXPECT_NEAR(r.dlogits[i], g[i], 1e-6);
    // CE
    const std::size_t k = 2 + rng.below(3);
    DenseMatrix zk(b, k);
    for (auto& v : zk.data()) v = rng.uniform(-4, 4);
    std::vector<std::size_t> yk(b);
    for (auto& v : yk) v = rng.below(k);
    std::vector<double> w(k);
    for (auto& v : w) v = rng.uniform(0.2, 3.0);
    const auto rk = loss_ce_weighted(zk, yk, w);
    const auto gk = finite_difference_gradient(
        [&](std::span<const double> x) {
          return loss_ce_weighted(DenseMatrix(b, k, std::vector<double>(x.begin(), x.end())), yk, w).loss;
        },
        zk.data());
    for (std::size_t i = 0; i < zk.size(); ++i) EXPECT_NEAR(rk.dlogits[i], gk[i], 1e-6);
  }
}

TEST(AdamW, FirstStepByHand) {
  std::vector<double> theta{1.0};
  const std::vector<double> g{0.5};
  AdamWState s(1, AdamWHyper{});
  adamw_step(theta, g, s);
  // m̂ = 0.5, v̂ = 0.25, step = lr·0.5/(0.5+1e-8) + lr·wd·1
  const double expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8) - 1e-3 * 0.01;
  EXPECT_NEAR(theta[0], expected, 1e-15);
  EXPECT_NEAR(theta[0], 0.998990000, 1e-9);
}

TEST(AdamW, DecayOnly) {
  std::vector<double> theta{2.0};
  const std::vector<double> g{0.0};
  AdamWHyper h;
  h.weight_decay = 0.1;
  AdamWState s(1, h);
  adamw_step(theta, g, s);
  EXPECT_NEAR(theta[0], 1.9998, 1e-15);
}

TEST(AdamW, ZeroGradZeroDecayIsIdentity) {
  std::vector<double> theta{1.5, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamWHyper h;
  h.weight_decay = 0.0;
  AdamWState s(2, h);
  for (int i = 0; i < 5; ++i) adamw_step(theta, g, s);
  EXPECT_EQ(theta, (std::vector<double>{1.5, -2.0}));
}

TEST(NoisyOr, Examples) {
  EXPECT_EQ(noisy_or(std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_EQ(noisy_or(std::vector<double>{1, 0.2}), 1.0);
  EXPECT_NEAR(noisy_or(std::vector<double>{0.5, 0.5}), 0.75, 1e-15);
  EXPECT_EQ(noisy_or(std::vector<double>{0.3}), 0.3);
  EXPECT_THROW(noisy_or(std::vector<double>{}), ContractError);
  EXPECT_THROW(noisy_or(std::vector<double>{1.5}), ContractError);
}

TEST(FiniteDifference, Examples) {
  const auto g1 = finite_difference_gradient([](std::span<const double> x) { return x[0] * x[0]; }, {3.0});
  EXPECT_NEAR(g1[0], 6.0, 1e-8);
  const auto g2 = finite_difference_gradient(
      [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; }, {1.0, 2.0});
  EXPECT_NEAR(g2[0], 2.0, 1e-8);
  EXPECT_NEAR(g2[1], 4.0, 1e-8);
}
