#pragma once

#include <string>
#include <vector>

#include "pmp/tensor.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

struct NamedParameter {
  std::string name;
  Tensor* tensor;
};

using ParameterRefs = std::vector<NamedParameter>;

/// Weight and bias of a pooled linear classifier or projection.
struct LinearParams {
  Tensor weight;
  Tensor bias;
};

inline void append_parameter(ParameterRefs& out, std::string name, Tensor& t) {
  out.push_back({std::move(name), &t});
}

inline void append_parameters(ParameterRefs& out, const std::string& prefix, LinearParams& p) {
  append_parameter(out, prefix + ".weight", p.weight);
  append_parameter(out, prefix + ".bias", p.bias);
}

PMP_PRECISION_END
}  // namespace pmp
