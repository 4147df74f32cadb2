#include "pmp/backbone.hpp"

#include "pmp/head.hpp"
#include "pmp/init.hpp"
#include "pmp/tensor_io.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

namespace {

LinearParams make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {linear_weight(in, out, rng), Tensor::zeros({out}, true)};
}

AttentionBlockParams make_block(std::size_t d, std::size_t mlp_ratio, std::mt19937_64& rng) {
  AttentionBlockParams b;
  b.norm1_gamma = Tensor::full({d}, Real(1), true);
  b.norm1_beta = Tensor::zeros({d}, true);
  b.query = make_linear(d, d, rng);
  b.key = make_linear(d, d, rng);
  b.value = make_linear(d, d, rng);
  b.out = make_linear(d, d, rng);
  b.norm2_gamma = Tensor::full({d}, Real(1), true);
  b.norm2_beta = Tensor::zeros({d}, true);
  b.ffn1 = make_linear(d, d * mlp_ratio, rng);
  b.ffn2 = make_linear(d * mlp_ratio, d, rng);
  return b;
}

std::vector<std::size_t> inverse(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

}  // namespace

void validate_backbone(const BackboneConfig& config) {
  if (config.side == 0 || config.side % kOutputStride != 0) {
    throw ConfigError("backbone: side " + std::to_string(config.side) + " is not a multiple of " +
                      std::to_string(kOutputStride));
  }
  if (config.base_channels == 0) throw ConfigError("backbone: base_channels must be positive");
  if (config.heads == 0 || config.base_channels % config.heads != 0) {
    throw ConfigError("backbone: " + std::to_string(config.heads) +
                      " heads do not divide base_channels " + std::to_string(config.base_channels));
  }
  for (double s : config.pixel_std)
    if (!(s > 0)) throw ConfigError("backbone: pixel_std entries must be positive");
  if (config.mlp_ratio == 0) throw ConfigError("backbone: mlp_ratio must be positive");
  std::size_t grid = config.side / kEmbedPatch;
  for (std::size_t s = 0; s < kStages; ++s, grid /= 2) {
    if (config.window == 0 || grid % config.window != 0) {
      throw ConfigError("backbone: window " + std::to_string(config.window) +
                        " does not divide the stage-" + std::to_string(s) + " grid side " +
                        std::to_string(grid));
    }
  }
}

BackboneParams make_backbone_params(const BackboneConfig& config, std::mt19937_64& rng) {
  BackboneParams p;
  const std::size_t c = config.base_channels;
  p.embed = make_linear(kEmbedPatch * kEmbedPatch * 3, c, rng);
  p.embed_gamma = Tensor::full({c}, Real(1), true);
  p.embed_beta = Tensor::zeros({c}, true);
  std::size_t d = c;
  for (std::size_t s = 0; s < kStages; ++s) {
    std::vector<AttentionBlockParams> blocks;
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b)
      blocks.push_back(make_block(d, config.mlp_ratio, rng));
    p.stages.push_back(std::move(blocks));
    if (s + 1 < kStages) {
      p.merges.push_back(make_linear(4 * d, 2 * d, rng));
      d *= 2;
    }
  }
  p.out_gamma = Tensor::full({d}, Real(1), true);
  p.out_beta = Tensor::zeros({d}, true);
  return p;
}

void append_parameters(ParameterRefs& out, const std::string& prefix, BackboneParams& p) {
  append_parameters(out, prefix + ".embed", p.embed);
  append_parameter(out, prefix + ".embed_norm.gamma", p.embed_gamma);
  append_parameter(out, prefix + ".embed_norm.beta", p.embed_beta);
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    for (std::size_t b = 0; b < p.stages[s].size(); ++b) {
      AttentionBlockParams& blk = p.stages[s][b];
      const std::string bp = prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(b);
      append_parameter(out, bp + ".norm1.gamma", blk.norm1_gamma);
      append_parameter(out, bp + ".norm1.beta", blk.norm1_beta);
      append_parameters(out, bp + ".query", blk.query);
      append_parameters(out, bp + ".key", blk.key);
      append_parameters(out, bp + ".value", blk.value);
      append_parameters(out, bp + ".out", blk.out);
      append_parameter(out, bp + ".norm2.gamma", blk.norm2_gamma);
      append_parameter(out, bp + ".norm2.beta", blk.norm2_beta);
      append_parameters(out, bp + ".ffn1", blk.ffn1);
      append_parameters(out, bp + ".ffn2", blk.ffn2);
    }
    if (s < p.merges.size()) append_parameters(out, prefix + ".merge" + std::to_string(s), p.merges[s]);
  }
  append_parameter(out, prefix + ".out_norm.gamma", p.out_gamma);
  append_parameter(out, prefix + ".out_norm.beta", p.out_beta);
}

Tensor standardize(const Tensor& image, const std::array<double, 3>& mean,
                   const std::array<double, 3>& std) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("standardize: image must be [H x W x 3], got " + shape_string(image.shape()));
  }
  std::vector<Real> scale(image.numel()), shift(image.numel());
  for (std::size_t i = 0; i < image.numel(); ++i) {
    scale[i] = static_cast<Real>(1.0 / std[i % 3]);
    shift[i] = static_cast<Real>(-mean[i % 3] / std[i % 3]);
  }
  return add(mul(image, Tensor(image.shape(), std::move(scale))), Tensor(image.shape(), std::move(shift)));
}

Tensor patch_embed(const Tensor& image, const LinearParams& embed) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("patch_embed: image must be [H x W x 3], got " +
                         shape_string(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (h % kEmbedPatch != 0 || w % kEmbedPatch != 0) {
    throw ConfigError("patch_embed: image " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not a multiple of " + std::to_string(kEmbedPatch));
  }
  const Tensor pixels = reshape(image, {h * w, 3});
  const std::vector<std::size_t> order = block_order(h, w, kEmbedPatch);
  const std::size_t cells = (h / kEmbedPatch) * (w / kEmbedPatch);
  const Tensor blocks =
      reshape(gather_rows(pixels, order), {cells, kEmbedPatch * kEmbedPatch * 3});
  return linear(blocks, embed.weight, embed.bias);
}

BlockResult window_attention_block(const Tensor& grid, std::size_t height, std::size_t width,
                                   const AttentionBlockParams& params, std::size_t window,
                                   std::size_t heads) {
  if (grid.rank() != 2 || grid.dim(0) != height * width) {
    throw DimensionError("window_attention_block: grid " + shape_string(grid.shape()) +
                         " is not [" + std::to_string(height * width) + " x d]");
  }
  if (window == 0 || height % window != 0 || width % window != 0) {
    throw ConfigError("window_attention_block: window " + std::to_string(window) +
                      " does not divide the " + std::to_string(height) + "x" +
                      std::to_string(width) + " grid");
  }
  // Every step except attention is row-wise, so the block runs in window
  // order and restores row-major order at the end.
  const std::vector<std::size_t> order = block_order(height, width, window);
  const bool identity = window == 1 || (window == height && window == width);
  Tensor x = identity ? grid : gather_rows(grid, order);

  const Tensor h1 = layer_norm(x, params.norm1_gamma, params.norm1_beta);
  const Tensor q = linear(h1, params.query.weight, params.query.bias);
  const Tensor k = linear(h1, params.key.weight, params.key.bias);
  const Tensor v = linear(h1, params.value.weight, params.value.bias);
  AttentionResult attn = grouped_attention(q, k, v, window * window, heads);
  x = add(x, linear(attn.out, params.out.weight, params.out.bias));

  const Tensor h2 = layer_norm(x, params.norm2_gamma, params.norm2_beta);
  const Tensor f = gelu(linear(h2, params.ffn1.weight, params.ffn1.bias));
  x = add(x, linear(f, params.ffn2.weight, params.ffn2.bias));

  if (!identity) x = gather_rows(x, inverse(order));
  return {x, std::move(attn.weights)};
}

Tensor downsample_merge(const Tensor& grid, std::size_t height, std::size_t width,
                        const LinearParams& project) {
  if (height % 2 != 0 || width % 2 != 0) {
    throw ConfigError("downsample_merge: grid " + std::to_string(height) + "x" +
                      std::to_string(width) + " has an odd side");
  }
  return patch_merge(grid, height, width, 2, project).features;
}

FeatureMap backbone_forward(const Tensor& image, const BackboneConfig& config,
                            const BackboneParams& params, bool /*training*/,
                            std::uint64_t /*seed*/) {
  validate_backbone(config);
  if (image.rank() != 3 || image.dim(0) != config.side || image.dim(1) != config.side) {
    throw DimensionError("backbone_forward: image " + shape_string(image.shape()) +
                         " does not match configured side " + std::to_string(config.side));
  }
  Tensor x = patch_embed(standardize(image, config.pixel_mean, config.pixel_std), params.embed);
  x = layer_norm(x, params.embed_gamma, params.embed_beta);
  std::size_t side = config.side / kEmbedPatch;
  for (std::size_t s = 0; s < kStages; ++s) {
    for (const AttentionBlockParams& blk : params.stages[s])
      x = window_attention_block(x, side, side, blk, config.window, config.heads).grid;
    if (s + 1 < kStages) {
      x = downsample_merge(x, side, side, params.merges[s]);
      side /= 2;
    }
  }
  x = layer_norm(x, params.out_gamma, params.out_beta);
  return FeatureMap{side, side, x.dim(1), x};
}

FeatureMap load_features(const std::filesystem::path& path, std::size_t expected_channels) {
  const Tensor t = load_tensor(path);
  if (t.rank() != 3) {
    throw ParseError("feature map " + path.string() + ": rank mismatch (expected 3, got " +
                     std::to_string(t.rank()) + ")");
  }
  if (expected_channels != 0 && t.dim(2) != expected_channels) {
    throw ParseError("feature map " + path.string() + ": channel mismatch (expected " +
                     std::to_string(expected_channels) + ", got " + std::to_string(t.dim(2)) + ")");
  }
  const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
  return FeatureMap{h, w, c, Tensor({h * w, c}, std::vector<Real>(t.values().begin(), t.values().end()))};
}

void save_features(const std::filesystem::path& path, const FeatureMap& map) {
  save_tensor(path, Tensor({map.height, map.width, map.channels},
                           std::vector<Real>(map.values.values().begin(), map.values.values().end())));
}

PMP_PRECISION_END
}  // namespace pmp
