#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "pmp/model.hpp"

namespace pmp {

/// h x w grid in row-major order, values in [0, 1].
struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  /// Row-major position of the largest value (first on ties).
  std::pair<std::size_t, std::size_t> argmax() const;
};

/// Rectified gradient-weighted sum of activations: channel weights are the
/// spatial mean of `gradients`; both inputs are [h*w x channels] row-major.
/// The result is min-max normalised; an all-zero map stays zero and a
/// constant positive map becomes all ones.
Heatmap cam_from_gradients(std::span<const float> activations, std::span<const float> gradients,
                           std::size_t height, std::size_t width, std::size_t channels);

/// Grad-CAM on the backbone output for the target class's fused logit.
/// The model is not modified. Throws IndexError for an invalid class.
Heatmap grad_cam(const Model& model, const Tensor& image, std::size_t target_class);

/// Bilinear resampling with pixel-centre alignment.
Heatmap upsample_bilinear(const Heatmap& map, std::size_t height, std::size_t width);

/// Binary PGM: "P5\n<w> <h>\n255\n" then row-major bytes round(v * 255).
void export_heatmap_pgm(const Heatmap& map, const std::filesystem::path& path);
Heatmap read_heatmap_pgm(const std::filesystem::path& path);

}  // namespace pmp
