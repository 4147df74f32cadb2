// Compiled twice: against the 32-bit model (normwise error per input) and
// against the 64-bit model (h = 1e-6, elementwise error).
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "pmp/head.hpp"
#include "pmp/init.hpp"
#include "pmp/message_passing.hpp"
#include "pmp/ops.hpp"

using namespace pmp;

namespace {

#ifdef PMP_REAL_DOUBLE
constexpr double kStep = 1e-6;
constexpr double kTolerance = 1e-6;
constexpr bool kElementwise = true;
#else
// 3e-3 keeps float rounding noise below the tolerance for smooth ops.
constexpr double kStep = 3e-3;
constexpr double kTolerance = 1e-3;
constexpr bool kElementwise = false;
#endif

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = static_cast<Real>(d(rng));
  return Tensor(std::move(shape), std::move(v), true);
}

// Worst error over inputs of |analytic - numeric| relative to the larger
// magnitude, either per element or over each input's whole gradient vector.
double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor*> inputs,
                      double step = kStep) {
  for (Tensor* t : inputs) t->zero_grad();
  f().backward();
  double worst = 0;
  for (Tensor* t : inputs) {
    std::vector<double> analytic(t->numel(), 0.0);
    if (t->has_grad())
      for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = t->grad()[i];
    std::vector<double> numeric(t->numel());
    auto v = t->mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Real orig = v[i];
      v[i] = static_cast<Real>(orig + step);
      const double up = f().item();
      v[i] = static_cast<Real>(orig - step);
      const double down = f().item();
      v[i] = orig;
      const double taken = static_cast<double>(static_cast<Real>(orig + step)) -
                           static_cast<double>(static_cast<Real>(orig - step));
      numeric[i] = (up - down) / taken;
    }
    if (kElementwise) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
      }
    } else {
      double diff = 0, na = 0, nn = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
      }
      worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-6}));
    }
  }
  return worst;
}

// Contracts a non-scalar output with fixed random weights.
Tensor project(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<Real> w(y.numel());
  for (Real& x : w) x = static_cast<Real>(d(rng));
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

class OpGradient : public ::testing::TestWithParam<std::uint64_t> {
 protected:
  std::mt19937_64 rng{GetParam()};
};

}  // namespace

TEST_P(OpGradient, Linear) {
  Tensor x = uniform({3, 4}, rng), w = uniform({4, 5}, rng), b = uniform({5}, rng);
  EXPECT_LE(gradient_error([&] { return project(linear(x, w, b), 1); }, {&x, &w, &b}), kTolerance);
}

TEST_P(OpGradient, MatmulAndElementwise) {
  Tensor a = uniform({3, 4}, rng), b = uniform({4, 2}, rng), c = uniform({3, 2}, rng);
  const auto f = [&] { return project(sub(mul(matmul(a, b), c), add(c, scale(c, Real(0.5)))), 2); };
  EXPECT_LE(gradient_error(f, {&a, &b, &c}), kTolerance);
}

TEST_P(OpGradient, ReductionsAndReshape) {
  Tensor x = uniform({4, 3}, rng);
  const auto f = [&] {
    return add(add(mean(mul(x, x)), pick(reshape(x, {12}), 5)), project(mean_pool(x), 3));
  };
  EXPECT_LE(gradient_error(f, {&x}), kTolerance);
}

TEST_P(OpGradient, LayerNorm) {
  Tensor x = uniform({4, 6}, rng), g = uniform({6}, rng), b = uniform({6}, rng);
  EXPECT_LE(gradient_error([&] { return project(layer_norm(x, g, b), 4); }, {&x, &g, &b}), kTolerance);
}

TEST_P(OpGradient, Activations) {
  // Keep inputs away from the LeakyReLU kink.
  Tensor x = uniform({5, 4}, rng, 0.05, 1);
  Tensor y = uniform({5, 4}, rng, -1, -0.05);
  const auto f = [&] { return add(project(leaky_relu(concat_cols(x, y), Real(0.2)), 5), project(gelu(y), 6)); };
  EXPECT_LE(gradient_error(f, {&x, &y}), kTolerance);
}

TEST_P(OpGradient, DropoutTrainingMask) {
  Tensor x = uniform({6, 5}, rng);
  EXPECT_LE(gradient_error([&] { return project(dropout(x, Real(0.3), true, 17), 7); }, {&x}), kTolerance);
}

TEST_P(OpGradient, SoftmaxAndCrossEntropy) {
  Tensor x = uniform({2, 5}, rng, -2, 2), l = uniform({5}, rng, -2, 2);
  const auto f = [&] { return add(project(softmax(x), 8), softmax_cross_entropy(l, 3)); };
  EXPECT_LE(gradient_error(f, {&x, &l}), kTolerance);
}

TEST_P(OpGradient, MaxAndGather) {
  // Values spaced by more than the step so no argmax flips.
  std::vector<Real> v(24);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(0.1 * static_cast<double>((i * 7) % 24));
  Tensor groups({4, 3, 2}, v, true);
  Tensor rows = uniform({4, 3}, rng);
  const std::vector<std::size_t> idx{2, 0, 2, 3, 1};
  const auto f = [&] {
    return add(project(max_over_groups(groups).values, 9),
               add(project(gather_rows(rows, idx), 10), project(max_over_first_axis(reshape(groups, {4, 6})).values, 11)));
  };
  EXPECT_LE(gradient_error(f, {&groups, &rows}), kTolerance);
}

TEST_P(OpGradient, GroupedAttention) {
  Tensor q = uniform({8, 4}, rng), k = uniform({8, 4}, rng), v = uniform({8, 4}, rng);
  const auto f = [&] { return project(grouped_attention(q, k, v, 4, 2).out, 12); };
  EXPECT_LE(gradient_error(f, {&q, &k, &v}), kTolerance);
}

TEST_P(OpGradient, TwoLayerComposite) {
  Tensor x = uniform({4, 3}, rng), w1 = uniform({3, 6}, rng), b1 = uniform({6}, rng);
  Tensor w2 = uniform({6, 3}, rng), b2 = uniform({3}, rng);
  const auto f = [&] {
    const Tensor h = gelu(linear(x, w1, b1));
    return softmax_cross_entropy(reshape(mean_pool(linear(h, w2, b2)), {3}), 1);
  };
#ifdef PMP_REAL_DOUBLE
  EXPECT_LE(gradient_error(f, {&x, &w1, &b1, &w2, &b2}), kTolerance);
#else
  EXPECT_LE(gradient_error(f, {&x, &w1, &b1, &w2, &b2}, 1e-3), kTolerance);
#endif
}

// Max aggregation and LeakyReLU put kinks within a float-sized step of the
// evaluation point, so this check runs in the 64-bit build only.
#ifdef PMP_REAL_DOUBLE
TEST_P(OpGradient, MessagePassingStack) {
  std::mt19937_64 init(GetParam() + 100);
  PatchSet p{uniform({7, 4}, rng)};
  std::vector<PMPParams> mods{make_pmp_params(4, init), make_pmp_params(4, init)};
  for (auto& m : mods) m.dropout_rate = 0;
  std::vector<Tensor*> inputs{&p.features};
  for (auto& m : mods) {
    inputs.push_back(&m.weight);
    inputs.push_back(&m.bias);
    inputs.push_back(&m.gamma);
    inputs.push_back(&m.beta);
  }
  const auto f = [&] { return project(pmp_stack(p, mods, 3, false, 0).features, 13); };
  EXPECT_LE(gradient_error(f, inputs), kTolerance);
}
#endif

TEST_P(OpGradient, PatchMergeAndBranchLogits) {
  Tensor grid = uniform({16, 3}, rng);
  LinearParams proj{uniform({12, 5}, rng), uniform({5}, rng)};
  LinearParams cls{uniform({5, 4}, rng), uniform({4}, rng)};
  const auto f = [&] {
    return softmax_cross_entropy(branch_logits(patch_merge(grid, 4, 4, 2, proj), cls), 2);
  };
  EXPECT_LE(gradient_error(f, {&grid, &proj.weight, &proj.bias, &cls.weight, &cls.bias}), kTolerance);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Values(1u, 2u, 3u));
