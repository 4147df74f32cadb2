#include "pmp/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pmp/errors.hpp"

namespace pmp {

std::pair<std::size_t, std::size_t> Heatmap::argmax() const {
  if (values.empty()) throw UsageError("heatmap: argmax of an empty map");
  const auto it = std::max_element(values.begin(), values.end());
  const std::size_t i = static_cast<std::size_t>(it - values.begin());
  return {i / width, i % width};
}

Heatmap cam_from_gradients(std::span<const float> activations, std::span<const float> gradients,
                           std::size_t height, std::size_t width, std::size_t channels) {
  const std::size_t cells = height * width;
  if (activations.size() != cells * channels || gradients.size() != cells * channels) {
    throw DimensionError("grad_cam: activations/gradients do not match a " + std::to_string(height) +
                         "x" + std::to_string(width) + "x" + std::to_string(channels) + " map");
  }
  std::vector<double> weight(channels, 0.0);
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t c = 0; c < channels; ++c) weight[c] += gradients[i * channels + c];
  for (double& w : weight) w /= static_cast<double>(cells);

  Heatmap map{height, width, std::vector<double>(cells, 0.0)};
  for (std::size_t i = 0; i < cells; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < channels; ++c) s += weight[c] * activations[i * channels + c];
    map.values[i] = std::max(0.0, s);
  }
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double mn = *lo, mx = *hi;
  if (mx <= 0) return map;
  for (double& v : map.values) v = mx > mn ? (v - mn) / (mx - mn) : 1.0;
  return map;
}

Heatmap grad_cam(const Model& model, const Tensor& image, std::size_t target_class) {
  const std::size_t classes = model.config().head.num_classes;
  if (target_class >= classes) {
    throw IndexError("grad_cam: class " + std::to_string(target_class) + " out of range for " +
                     std::to_string(classes) + " classes");
  }
  const Model local = model.bind();
  const ModelOutputs out = local.forward(image, false, 0);
  pick(out.head.fused_logits, target_class).backward();
  const FeatureMap& m = out.features;
  const std::vector<float> zeros(m.values.numel(), 0.0f);
  const std::span<const float> grads = m.values.has_grad() ? m.values.grad() : std::span<const float>(zeros);
  return cam_from_gradients(m.values.values(), grads, m.height, m.width, m.channels);
}

Heatmap upsample_bilinear(const Heatmap& map, std::size_t height, std::size_t width) {
  if (map.values.empty() || height == 0 || width == 0) throw UsageError("upsample_bilinear: empty map");
  Heatmap out{height, width, std::vector<double>(height * width)};
  const auto coord = [](std::size_t dst, std::size_t dst_n, std::size_t src_n) {
    const double x = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) /
                         static_cast<double>(dst_n) - 0.5;
    return std::clamp(x, 0.0, static_cast<double>(src_n - 1));
  };
  for (std::size_t r = 0; r < height; ++r) {
    const double y = coord(r, height, map.height);
    const std::size_t y0 = static_cast<std::size_t>(y), y1 = std::min(y0 + 1, map.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = coord(c, width, map.width);
      const std::size_t x0 = static_cast<std::size_t>(x), x1 = std::min(x0 + 1, map.width - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = (1 - fx) * map.at(y0, x0) + fx * map.at(y0, x1);
      const double bottom = (1 - fx) * map.at(y1, x0) + fx * map.at(y1, x1);
      out.values[r * width + c] = (1 - fy) * top + fy * bottom;
    }
  }
  return out;
}

void export_heatmap_pgm(const Heatmap& map, const std::filesystem::path& path) {
  if (map.values.size() != map.height * map.width || map.values.empty()) {
    throw UsageError("export_heatmap_pgm: heatmap size does not match its grid");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("export_heatmap_pgm: cannot write " + path.string());
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (double v : map.values) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255))));
  }
  if (!out) throw Error("export_heatmap_pgm: write failed for " + path.string());
}

Heatmap read_heatmap_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("PGM: cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || !in || maxval != 255 || w == 0 || h == 0) {
    throw ParseError("PGM: unsupported header in " + path.string());
  }
  in.get();  // single whitespace before the payload
  std::vector<char> bytes(w * h);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError("PGM: truncated payload");
  Heatmap map{h, w, std::vector<double>(w * h)};
  for (std::size_t i = 0; i < bytes.size(); ++i)
    map.values[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  return map;
}

}  // namespace pmp
