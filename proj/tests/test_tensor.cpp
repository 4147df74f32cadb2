#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "pmp/errors.hpp"
#include "pmp/ops.hpp"
#include "pmp/tensor_io.hpp"

using namespace pmp;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<float> v, bool rg = false) {
  return Tensor({r, c}, std::move(v), rg);
}

Tensor vec(std::vector<float> v, bool rg = false) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v), rg);
}

std::vector<float> values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Linear, IdentityWeights) {
  const Tensor y = linear(mat(1, 2, {1, 2}), mat(2, 2, {1, 0, 0, 1}), vec({0, 0}));
  EXPECT_EQ(values(y), (std::vector<float>{1, 2}));
}

TEST(Linear, ZeroWeightsPassBias) {
  const Tensor y = linear(mat(1, 2, {1, 2}), mat(2, 2, {0, 0, 0, 0}), vec({3, 4}));
  EXPECT_EQ(values(y), (std::vector<float>{3, 4}));
}

TEST(Linear, HandMatrixMultiply) {
  const Tensor y = linear(mat(2, 2, {1, 2, 3, 4}), mat(2, 1, {1, 1}), vec({1}));
  EXPECT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(y), (std::vector<float>{4, 8}));
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  try {
    linear(mat(1, 3, {1, 2, 3}), mat(2, 2, {1, 0, 0, 1}), vec({0, 0}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Linear, TapeRecordedOnlyWithGrad) {
  const Tensor w = mat(2, 2, {1, 0, 0, 1}, true);
  const Tensor a = linear(mat(1, 2, {1, 2}), w, vec({0, 0}));
  EXPECT_TRUE(a.requires_grad());
  const Tensor b = linear(mat(1, 2, {1, 2}), mat(2, 2, {1, 0, 0, 1}), vec({0, 0}));
  EXPECT_FALSE(b.requires_grad());
}

TEST(LayerNorm, ConstantRowIsZero) {
  const Tensor y = layer_norm(mat(1, 3, {5, 5, 5}), vec({1, 1, 1}), vec({0, 0, 0}));
  for (float v : values(y)) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, AlreadyStandardised) {
  const Tensor y = layer_norm(mat(1, 2, {1, -1}), vec({1, 1}), vec({0, 0}), 0.0f);
  EXPECT_FLOAT_EQ(y.at(0), 1.0f);
  EXPECT_FLOAT_EQ(y.at(1), -1.0f);
}

TEST(LayerNorm, ZeroEpsDirectFormula) {
  const Tensor y = layer_norm(mat(1, 2, {0, 2}), vec({1, 1}), vec({0, 0}), 0.0f);
  EXPECT_FLOAT_EQ(y.at(0), -1.0f);
  EXPECT_FLOAT_EQ(y.at(1), 1.0f);
}

TEST(LayerNorm, RowMomentsOnRandomInput) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> d(2.0f, 3.0f);
  std::vector<float> x(20 * 16);
  for (float& v : x) v = d(rng);
  const Tensor y = layer_norm(mat(20, 16, x), Tensor::full({16}, 1), Tensor::zeros({16}));
  for (std::size_t r = 0; r < 20; ++r) {
    double m = 0, s = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) s += (y.at(r, c) - m) * (y.at(r, c) - m);
    EXPECT_LE(std::abs(m), 1e-5);
    EXPECT_NEAR(s / 16, 1.0, 1e-3);
  }
}

TEST(LeakyRelu, Examples) {
  EXPECT_EQ(leaky_relu(vec({2}), 0.2f).at(0), 2.0f);
  EXPECT_EQ(leaky_relu(vec({0}), 0.2f).at(0), 0.0f);
  EXPECT_FLOAT_EQ(leaky_relu(vec({-5}), 0.2f).at(0), -1.0f);
  EXPECT_THROW(leaky_relu(vec({1}), 1.0f), ParameterError);
}

TEST(Dropout, EvalIsExactIdentity) {
  const Tensor x = vec({1.5f, -2.25f, 3});
  const Tensor y = dropout(x, 0.5f, false, 9);
  EXPECT_EQ(values(y), values(x));
}

TEST(Dropout, ZeroRateIsIdentity) {
  const Tensor x = vec({1.5f, -2.25f, 3});
  EXPECT_EQ(values(dropout(x, 0.0f, true, 9)), values(x));
}

TEST(Dropout, UnbiasedOverSeeds) {
  const Tensor x = Tensor::full({10000}, 1.0f);
  double total = 0;
  for (std::uint64_t s = 0; s < 10; ++s) total += mean(dropout(x, 0.5f, true, s)).item();
  EXPECT_NEAR(total / 10, 1.0, 0.05);
  const Tensor one = dropout(x, 0.5f, true, 4);
  EXPECT_NEAR(mean(one).item(), 1.0, 0.05);
}

TEST(Dropout, ReproducibleAndRateChecked) {
  const Tensor x = Tensor::full({256}, 1.0f);
  EXPECT_EQ(values(dropout(x, 0.3f, true, 11)), values(dropout(x, 0.3f, true, 11)));
  EXPECT_NE(values(dropout(x, 0.3f, true, 11)), values(dropout(x, 0.3f, true, 12)));
  for (float v : values(dropout(x, 0.3f, true, 11))) EXPECT_TRUE(v == 0.0f || std::abs(v - 1 / 0.7f) < 1e-6);
  EXPECT_THROW(dropout(x, 1.0f, true, 0), ParameterError);
  EXPECT_THROW(dropout(x, -0.1f, true, 0), ParameterError);
}

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(softmax_cross_entropy(vec({0, 0}), 0).item(), std::log(2.0), 1e-6);
  const float big = softmax_cross_entropy(vec({1000, 0}), 0).item();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 0.0, 1e-6);
  EXPECT_NEAR(softmax_cross_entropy(vec({1, 2, 3}), 2).item(), 0.40761, 1e-5);
  EXPECT_THROW(softmax_cross_entropy(vec({1, 2}), 2), IndexError);
}

TEST(MaxOverFirstAxis, Columnwise) {
  const MaxResult r = max_over_first_axis(mat(2, 2, {1, 5, 3, 2}));
  EXPECT_EQ(values(r.values), (std::vector<float>{3, 5}));
  EXPECT_EQ(r.argmax, (std::vector<std::size_t>{1, 0}));
}

TEST(MaxOverFirstAxis, SingleRowAndTies) {
  EXPECT_EQ(values(max_over_first_axis(mat(1, 2, {7, 7})).values), (std::vector<float>{7, 7}));
  const MaxResult tie = max_over_first_axis(mat(2, 1, {4, 4}));
  EXPECT_EQ(tie.values.at(0), 4.0f);
  EXPECT_EQ(tie.argmax, (std::vector<std::size_t>{0}));
}

TEST(MaxOverFirstAxis, GradientOnlyAtArgmax) {
  const Tensor x = mat(3, 2, {1, 9, 4, 2, 4, 3}, true);
  const MaxResult r = max_over_first_axis(x);
  const std::vector<float> seed{2.5f, -1.5f};
  r.values.backward(seed);
  EXPECT_EQ(values(Tensor({6}, {x.grad().begin(), x.grad().end()})),
            (std::vector<float>{0, -1.5f, 2.5f, 0, 0, 0}));
  for (std::size_t c = 0; c < 2; ++c) {
    float col = 0;
    for (std::size_t r2 = 0; r2 < 3; ++r2) col += x.grad()[r2 * 2 + c];
    EXPECT_EQ(col, seed[c]);
  }
}

TEST(MaxOverFirstAxis, EmptyAxisRejected) {
  EXPECT_THROW(max_over_first_axis(Tensor({0, 2}, {})), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  const Tensor x = mat(2, 3, {1, -2, 3, 0.5f, 7, 8}, true);
  sum(x).backward();
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, Quadratic) {
  const Tensor x = vec({3}, true);
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad()[0], 6.0f);
}

TEST(Backward, FanOutAccumulates) {
  const Tensor x = vec({2}, true);
  const Tensor y = add(mul(x, x), scale(x, 3));
  sum(y).backward();
  EXPECT_EQ(x.grad()[0], 7.0f);
}

TEST(Backward, NonScalarRootIsUsageError) {
  const Tensor x = vec({1, 2}, true);
  EXPECT_THROW(scale(x, 2).backward(), UsageError);
}

TEST(Backward, TapeOrderedByCreation) {
  const Tensor x = vec({1}, true);
  const Tensor a = scale(x, 2);
  const Tensor b = add(a, x);
  EXPECT_LT(x.order(), a.order());
  EXPECT_LT(a.order(), b.order());
}

TEST(Pmt1, RoundTripIsBitwise) {
  const Tensor t({2, 3, 1}, {1.5f, -0.0f, 3e-8f, 7, -2, 1e30f});
  std::stringstream ss;
  write_pmt1(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "PMT1");
  EXPECT_EQ(bytes.size(), 4 + 4 + 3 * 4 + 6 * 4u);
  const Tensor back = read_pmt1(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.values().data(), t.values().data(), 6 * sizeof(float)), 0);
}

TEST(Pmt1, Errors) {
  std::stringstream bad("PMTX\x01\x00\x00\x00");
  EXPECT_THROW(read_pmt1(bad), ParseError);
  std::stringstream ss;
  write_pmt1(ss, Tensor({4}, {1, 2, 3, 4}));
  const std::string full = ss.str();
  std::stringstream cut(full.substr(0, full.size() - 3));
  try {
    read_pmt1(cut);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }
}
