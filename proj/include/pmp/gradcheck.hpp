#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pmp/parameters.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

struct GradCheckOptions {
  double step = 1e-3;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0;
  std::size_t elements = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

double relative_error(double analytic, double numeric, double floor);

/// Compares reverse-mode gradients of `loss` against central differences for
/// every element of every listed parameter. `loss` must rebuild the graph
/// from the current parameter values on each call.
GradCheckReport check_gradients(const std::function<Tensor()>& loss, const ParameterRefs& params,
                                const GradCheckOptions& options = {});

/// The reference head instance: a random 6x6x32 feature map, small branch
/// (1, 4, 2), large branch (2, 2, 2), 4 classes, eval mode. Checks the joint
/// loss against every head parameter and the feature map itself.
GradCheckReport head_gradient_check(std::uint64_t seed, const GradCheckOptions& options);

PMP_PRECISION_END
}  // namespace pmp
