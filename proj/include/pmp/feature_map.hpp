#pragma once

#include "pmp/tensor.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

/// Backbone output: an h x w grid of patch vectors. `values` is stored as
/// [h*w x channels] with grid cells in row-major order.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  Tensor values;

  std::size_t cells() const { return height * width; }
};

PMP_PRECISION_END
}  // namespace pmp
