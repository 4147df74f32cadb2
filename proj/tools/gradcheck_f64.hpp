#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pmp::cli {

struct HeadCheckSummary {
  double max_relative_error = 0;
  std::size_t elements = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
};

HeadCheckSummary run_head_gradcheck(std::uint64_t seed);

/// joint_loss of three logit vectors evaluated by the 64-bit model.
double joint_loss_f64(std::size_t target, const std::vector<double>& y1, const std::vector<double>& y2,
                      const std::vector<double>& y3);

}  // namespace pmp::cli
