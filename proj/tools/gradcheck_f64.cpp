// Built with PMP_REAL_DOUBLE so the check runs on the 64-bit model.
#include "gradcheck_f64.hpp"

#include "pmp/gradcheck.hpp"
#include "pmp/head.hpp"

namespace pmp::cli {

HeadCheckSummary run_head_gradcheck(std::uint64_t seed) {
  const GradCheckReport r = head_gradient_check(seed, {1e-6, 1e-6});
  return {r.max_relative_error, r.elements, r.worst_parameter, r.worst_index};
}

double joint_loss_f64(std::size_t target, const std::vector<double>& y1, const std::vector<double>& y2,
                      const std::vector<double>& y3) {
  auto vec = [](const std::vector<double>& v) { return Tensor({v.size()}, v); };
  return joint_loss(target, vec(y1), vec(y2), vec(y3)).item();
}

}  // namespace pmp::cli
