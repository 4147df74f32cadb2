#include "pmp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pmp/head.hpp"
#include "pmp/init.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss, const ParameterRefs& params,
                                const GradCheckOptions& options) {
  for (const auto& p : params) p.tensor->zero_grad();
  loss().backward();
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.tensor->has_grad()) {
      analytic.emplace_back(p.tensor->grad().begin(), p.tensor->grad().end());
    } else {
      analytic.emplace_back(p.tensor->numel(), Real(0));
    }
  }

  GradCheckReport report;
  const Real h = static_cast<Real>(options.step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].tensor->mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real orig = values[i];
      values[i] = orig + h;
      const double up = loss().item();
      values[i] = orig - h;
      const double down = loss().item();
      values[i] = orig;
      // Divide by the step actually taken after rounding.
      const double taken = static_cast<double>(orig + h) - static_cast<double>(orig - h);
      const double numeric = (up - down) / taken;
      const double err = relative_error(analytic[t][i], numeric, options.floor);
      ++report.elements;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_parameter = params[t].name;
        report.worst_index = i;
        report.worst_analytic = analytic[t][i];
        report.worst_numeric = numeric;
      }
    }
  }
  for (const auto& p : params) p.tensor->zero_grad();
  return report;
}

GradCheckReport head_gradient_check(std::uint64_t seed, const GradCheckOptions& options) {
  HeadConfig config;
  config.channels = 32;
  config.num_classes = 4;
  config.small = {1, 4, 2};
  config.large = {2, 2, 2};
  std::mt19937_64 rng(seed);
  HeadParams head = make_head_params(config, rng);
  FeatureMap map{6, 6, 32, normal_tensor({36, 32}, 1.0, rng)};
  const std::size_t target = std::uniform_int_distribution<std::size_t>(0, 3)(rng);

  ParameterRefs params;
  append_parameter(params, "features", map.values);
  append_parameters(params, "head", head);
  const auto loss = [&] {
    const HeadOutputs out = head_forward(map, config, head, false, seed);
    return joint_loss(target, out.logits());
  };
  return check_gradients(loss, params, options);
}

PMP_PRECISION_END
}  // namespace pmp
