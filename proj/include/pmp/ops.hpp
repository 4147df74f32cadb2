#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pmp/tensor.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

inline constexpr Real kLayerNormEps = Real(1e-5);
inline constexpr Real kDefaultLeakySlope = Real(0.2);
inline constexpr Real kDefaultDropoutRate = Real(0.1);

// Affine map over rows: out[i,j] = b[j] + sum_k x[i,k] * w[k,j].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Element `index` of a flat view, as a scalar.
Tensor pick(const Tensor& x, std::size_t index);
/// Same values, new shape of equal element count.
Tensor reshape(const Tensor& x, Shape shape);

/// Row-wise normalisation with biased variance, then gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps = kLayerNormEps);
Tensor leaky_relu(const Tensor& x, Real slope = kDefaultLeakySlope);
/// tanh approximation.
Tensor gelu(const Tensor& x);

/// Inverted dropout. Eval mode, or rate 0, returns `x` itself. The keep mask
/// for element e is a pure function of (seed, e).
Tensor dropout(const Tensor& x, Real rate, bool training, std::uint64_t seed);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
/// -log softmax(logits)[target] for a single logit vector.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

struct MaxResult {
  Tensor values;
  // Winning row for every output element; ties go to the smallest row.
  std::vector<std::size_t> argmax;
};

/// Column maximum of a [k x d] tensor.
MaxResult max_over_first_axis(const Tensor& x);
/// Per-group column maximum of an [n x k x d] tensor, giving [n x d].
MaxResult max_over_groups(const Tensor& x);

/// Mean over rows of [n x d], returned as [1 x d].
Tensor mean_pool(const Tensor& x);
/// Rows of a [n x d] tensor in the given order (repeats allowed).
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_cols(const Tensor& a, const Tensor& b);

struct AttentionResult {
  Tensor out;
  // Softmax weights laid out [group][head][query][key].
  std::vector<Real> weights;
};

/// Scaled dot-product self-attention inside contiguous groups of
/// `group_size` rows. q, k, v are [n x d]; d splits evenly over `heads`.
AttentionResult grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  std::size_t group_size, std::size_t heads);

PMP_PRECISION_END
}  // namespace pmp
