#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>

#include "pmp/errors.hpp"
#include "pmp/message_passing.hpp"

using namespace pmp;

namespace {

PatchSet patches(std::size_t n, std::size_t f, std::vector<float> v) { return {Tensor({n, f}, std::move(v))}; }

PatchSet random_patches(std::size_t n, std::size_t f, std::mt19937_64& rng) {
  std::normal_distribution<float> d(0, 1);
  std::vector<float> v(n * f);
  for (float& x : v) x = d(rng);
  return patches(n, f, v);
}

// O(n^2) oracle: sort every other index by (squared distance in double, index).
std::vector<std::size_t> brute_knn(const PatchSet& p, std::size_t k) {
  const std::size_t n = p.size(), f = p.width();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<float, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      float d = 0;
      for (std::size_t c = 0; c < f; ++c) {
        const float diff = p.features.at(j, c) - p.features.at(i, c);
        d += diff * diff;
      }
      cand.emplace_back(d, j);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t t = 0; t < k; ++t) out.push_back(cand[t].second);
  }
  return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(float)) == 0;
}

PMPParams random_params(std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PMPParams p = make_pmp_params(f, rng);
  std::normal_distribution<float> d(0, 0.5f);
  for (float& v : p.bias.mutable_values()) v = d(rng);
  for (float& v : p.gamma.mutable_values()) v = 1 + d(rng);
  for (float& v : p.beta.mutable_values()) v = d(rng);
  return p;
}

PatchSet permute(const PatchSet& p, const std::vector<std::size_t>& perm) {
  return {gather_rows(p.features, perm)};
}

}  // namespace

TEST(KnnGraph, HandExample) {
  const NeighborGraph g = knn_graph(patches(3, 1, {0, 1, 10}), 1);
  EXPECT_EQ(g.indices, (std::vector<std::size_t>{1, 0, 1}));
}

TEST(KnnGraph, AllTiesUseIndexOrder) {
  const NeighborGraph g = knn_graph(patches(3, 1, {0, 0, 0}), 2);
  EXPECT_EQ(g.indices, (std::vector<std::size_t>{1, 2, 0, 2, 0, 1}));
}

TEST(KnnGraph, CompleteGraphAtKEqualsNMinusOne) {
  std::mt19937_64 rng(5);
  const PatchSet p = random_patches(6, 3, rng);
  const NeighborGraph g = knn_graph(p, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<std::size_t> row(g.row(i).begin(), g.row(i).end());
    std::sort(row.begin(), row.end());
    std::vector<std::size_t> expected;
    for (std::size_t j = 0; j < 6; ++j)
      if (j != i) expected.push_back(j);
    EXPECT_EQ(row, expected);
  }
}

TEST(KnnGraph, KTooLargeListsNAndK) {
  try {
    knn_graph(patches(3, 1, {0, 1, 2}), 3);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("n=3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("k=3"), std::string::npos) << msg;
  }
}

TEST(KnnGraph, MatchesBruteForceOnRandomAndTiedInstances) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 64)(rng);
    const std::size_t f = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(8, n - 1))(rng);
    PatchSet p = random_patches(n, f, rng);
    if (t % 2 == 1) {
      // Small integer grids make exact distance ties common.
      for (float& v : p.features.mutable_values()) v = std::round(v);
    }
    const NeighborGraph g = knn_graph(p, k);
    ASSERT_EQ(g.indices, brute_knn(p, k)) << "instance " << t;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = g.row(i);
      EXPECT_EQ(std::count(row.begin(), row.end(), i), 0);
      std::vector<std::size_t> sorted(row.begin(), row.end());
      std::sort(sorted.begin(), sorted.end());
      EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    }
  }
}

TEST(EdgeMessages, ZeroMapGivesZeroMessages) {
  std::mt19937_64 rng(1);
  const PatchSet p = random_patches(5, 4, rng);
  PMPParams z = make_pmp_params(4, rng);
  for (Tensor* t : {&z.weight, &z.bias, &z.beta}) std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0f);
  const Tensor m = edge_messages(p, knn_graph(p, 2), z, false, 0);
  EXPECT_EQ(m.shape(), (Shape{5, 2, 4}));
  for (float v : m.values()) EXPECT_EQ(v, 0.0f);
}

TEST(EdgeMessages, SelfSimilarNeighbourHasZeroPreNorm) {
  // Duplicate patches are each other's nearest neighbour; with W reading only
  // the difference half and zero bias, the linear output is zero, so LN gives beta.
  const PatchSet p = patches(3, 2, {1, 2, 1, 2, 9, 9});
  std::mt19937_64 rng(1);
  PMPParams w = make_pmp_params(2, rng);
  auto wv = w.weight.mutable_values();
  for (std::size_t r = 0; r < 2; ++r) wv[r * 2] = wv[r * 2 + 1] = 0.0f;
  std::fill(w.bias.mutable_values().begin(), w.bias.mutable_values().end(), 0.0f);
  w.beta.mutable_values()[0] = 0.25f;
  w.beta.mutable_values()[1] = -0.5f;
  const Tensor m = edge_messages(p, knn_graph(p, 1), w, false, 0);
  EXPECT_FLOAT_EQ(m.at(0), 0.25f);
  EXPECT_FLOAT_EQ(m.at(1), 0.2f * -0.5f);
}

TEST(EdgeMessages, WrongWeightShape) {
  std::mt19937_64 rng(1);
  const PatchSet p = random_patches(4, 3, rng);
  PMPParams bad = make_mlp_params(3, rng);
  EXPECT_THROW(edge_messages(p, knn_graph(p, 1), bad, false, 0), DimensionError);
}

TEST(EdgeMessages, CompositionOracleIsBitwise) {
  std::mt19937_64 rng(8);
  const PatchSet p = random_patches(3, 4, rng);
  const PMPParams prm = random_params(4, 3);
  const NeighborGraph g = knn_graph(p, 2);
  for (bool training : {false, true}) {
    const Tensor m = edge_messages(p, g, prm, training, 77);
    std::vector<std::size_t> centre, nbr;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j : g.row(i)) {
        centre.push_back(i);
        nbr.push_back(j);
      }
    const Tensor pi = gather_rows(p.features, centre);
    const Tensor pj = gather_rows(p.features, nbr);
    Tensor direct = linear(concat_cols(pi, sub(pj, pi)), prm.weight, prm.bias);
    direct = layer_norm(direct, prm.gamma, prm.beta);
    direct = leaky_relu(direct, prm.leaky_slope);
    direct = dropout(direct, prm.dropout_rate, training, 77);
    EXPECT_TRUE(bitwise_equal(reshape(direct, {3, 2, 4}), m)) << "training=" << training;
  }
}

TEST(AggregateMax, Examples) {
  const PatchSet single = aggregate_max(Tensor({2, 1, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(std::vector<float>(single.features.values().begin(), single.features.values().end()),
            (std::vector<float>{1, 2, 3, 4}));
  const PatchSet two = aggregate_max(Tensor({1, 2, 2}, {1, 4, 3, 2}));
  EXPECT_EQ(two.features.at(0), 3.0f);
  EXPECT_EQ(two.features.at(1), 4.0f);
  const PatchSet same = aggregate_max(Tensor::full({2, 3, 2}, 1.5f));
  for (float v : same.features.values()) EXPECT_EQ(v, 1.5f);
}

TEST(PmpForward, ZeroParamsTwoPatches) {
  std::mt19937_64 rng(4);
  PMPParams z = make_pmp_params(3, rng);
  for (Tensor* t : {&z.weight, &z.bias, &z.gamma, &z.beta}) std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0f);
  const PatchSet out = pmp_forward(random_patches(2, 3, rng), z, 1, true, 5);
  for (float v : out.features.values()) EXPECT_EQ(v, 0.0f);
}

TEST(PmpForward, PipelineOracleIsBitwise) {
  std::mt19937_64 rng(12);
  const PatchSet p = random_patches(9, 5, rng);
  const PMPParams prm = random_params(5, 13);
  const PatchSet manual = aggregate_max(edge_messages(p, knn_graph(p, 3), prm, true, 31));
  EXPECT_TRUE(bitwise_equal(pmp_forward(p, prm, 3, true, 31).features, manual.features));
}

TEST(PmpForward, PermutationEquivarianceIsBitwise) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 24)(rng);
    const std::size_t f = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(6, n - 1))(rng);
    const PatchSet p = random_patches(n, f, rng);
    const PMPParams prm = random_params(f, 1000 + t);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const PatchSet a = permute(pmp_forward(p, prm, k, false, 0), perm);
    const PatchSet b = pmp_forward(permute(p, perm), prm, k, false, 0);
    ASSERT_TRUE(bitwise_equal(a.features, b.features)) << "instance " << t;
  }
}

TEST(PmpStack, SingleModuleEqualsForward) {
  std::mt19937_64 rng(21);
  const PatchSet p = random_patches(10, 4, rng);
  const std::vector<PMPParams> mods{random_params(4, 5)};
  EXPECT_TRUE(bitwise_equal(pmp_stack(p, mods, 3, true, 8).features, pmp_forward(p, mods[0], 3, true, 8).features));
}

TEST(PmpStack, TwoModuleUnrollingWithGraphRebuild) {
  std::mt19937_64 rng(22);
  const PatchSet p = random_patches(12, 4, rng);
  const std::vector<PMPParams> mods{random_params(4, 6), random_params(4, 7)};
  const PatchSet first = pmp_forward(p, mods[0], 3, true, module_seed(40, 0));
  const PatchSet second = pmp_forward(first, mods[1], 3, true, module_seed(40, 1));
  EXPECT_TRUE(bitwise_equal(pmp_stack(p, mods, 3, true, 40).features, second.features));

  // The fixed mode reuses the input graph for the second module.
  const NeighborGraph g = knn_graph(p, 3);
  const PatchSet f1 = aggregate_max(edge_messages(p, g, mods[0], true, module_seed(40, 0)));
  const PatchSet f2 = aggregate_max(edge_messages(f1, g, mods[1], true, module_seed(40, 1)));
  EXPECT_TRUE(bitwise_equal(pmp_stack(p, mods, 3, true, 40, GraphMode::fixed).features, f2.features));
}

TEST(PmpStack, BestBranchSettingsOnTwelveByTwelve) {
  std::mt19937_64 rng(23);
  const PatchSet p = random_patches(144, 16, rng);
  std::vector<PMPParams> mods;
  for (int m = 0; m < 3; ++m) mods.push_back(make_pmp_params(16, rng));
  const PatchSet out = pmp_stack(p, mods, 8, true, 1);
  EXPECT_EQ(out.features.shape(), (Shape{144, 16}));
}

TEST(PmpForward, LocalityOfInfluenceWithFixedGraph) {
  std::mt19937_64 rng(31);
  const PatchSet p = random_patches(10, 3, rng);
  const PMPParams prm = random_params(3, 9);
  const NeighborGraph g = knn_graph(p, 2);
  const PatchSet base = aggregate_max(edge_messages(p, g, prm, false, 0));
  for (std::size_t j = 0; j < 10; ++j) {
    PatchSet q{p.features.leaf_copy(false)};
    for (std::size_t c = 0; c < 3; ++c) q.features.mutable_values()[j * 3 + c] += 0.37f;
    const PatchSet moved = aggregate_max(edge_messages(q, g, prm, false, 0));
    for (std::size_t i = 0; i < 10; ++i) {
      const auto row = g.row(i);
      const bool involved = i == j || std::find(row.begin(), row.end(), j) != row.end();
      bool changed = false;
      for (std::size_t c = 0; c < 3; ++c) changed |= moved.features.at(i, c) != base.features.at(i, c);
      if (!involved) EXPECT_FALSE(changed) << "patch " << i << " moved by " << j;
    }
  }
}

TEST(PmpStack, EveryParameterGetsFiniteGradient) {
  std::mt19937_64 rng(41);
  const PatchSet p = random_patches(8, 4, rng);
  std::vector<PMPParams> mods{random_params(4, 1), random_params(4, 2), random_params(4, 3)};
  for (auto& m : mods)
    for (Tensor* t : {&m.weight, &m.bias, &m.gamma, &m.beta}) *t = t->leaf_copy(true);
  sum(pmp_stack(p, mods, 3, true, 2).features).backward();
  for (auto& m : mods) {
    for (Tensor* t : {&m.weight, &m.bias, &m.gamma, &m.beta}) {
      ASSERT_TRUE(t->has_grad());
      for (float g : t->grad()) EXPECT_TRUE(std::isfinite(g));
    }
  }
}

TEST(PatchMlp, NoNeighbourExchange) {
  std::mt19937_64 rng(51);
  const PatchSet p = random_patches(6, 4, rng);
  PMPParams m = make_mlp_params(4, rng);
  const PatchSet a = patch_mlp(p, m, false, 0);
  PatchSet q{p.features.leaf_copy(false)};
  q.features.mutable_values()[0] += 1.0f;
  const PatchSet b = patch_mlp(q, m, false, 0);
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(a.features.at(i, c), b.features.at(i, c));
}
