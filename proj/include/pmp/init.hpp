#pragma once

#include <random>

#include "pmp/tensor.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

/// N(0, stddev^2) leaf tensor. Draws in double so both precisions see the
/// same initial values.
inline Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = static_cast<Real>(dist(rng));
  return Tensor(std::move(shape), std::move(v), true);
}

/// Weight for a linear layer with the given fan-in.
inline Tensor linear_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return normal_tensor({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

PMP_PRECISION_END
}  // namespace pmp
