#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "pmp/feature_map.hpp"
#include "pmp/ops.hpp"
#include "pmp/parameters.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

inline constexpr std::size_t kEmbedPatch = 4;
inline constexpr std::size_t kStages = 4;
// Total downsampling: 4x embedding then three 2x merges.
inline constexpr std::size_t kOutputStride = 32;

/// Four-stage windowed-attention feature extractor. Stage grids are side/4,
/// side/8, side/16, side/32 with C, 2C, 4C, 8C channels.
struct BackboneConfig {
  std::size_t side = 192;
  std::size_t base_channels = 16;
  std::size_t window = 3;
  std::size_t blocks_per_stage = 1;
  std::size_t heads = 1;
  std::size_t mlp_ratio = 2;
  // Per-channel input standardisation (x - mean) / std, applied before embedding.
  std::array<double, 3> pixel_mean{0.46, 0.23, 0.12};
  std::array<double, 3> pixel_std{0.1, 0.08, 0.06};

  std::size_t output_side() const { return side / kOutputStride; }
  std::size_t output_channels() const { return base_channels * 8; }
};

void validate_backbone(const BackboneConfig& config);

struct AttentionBlockParams {
  Tensor norm1_gamma, norm1_beta;
  LinearParams query, key, value, out;
  Tensor norm2_gamma, norm2_beta;
  LinearParams ffn1, ffn2;
};

struct BackboneParams {
  LinearParams embed;
  Tensor embed_gamma, embed_beta;
  std::vector<std::vector<AttentionBlockParams>> stages;  // kStages entries
  std::vector<LinearParams> merges;                       // kStages - 1 entries
  Tensor out_gamma, out_beta;
};

BackboneParams make_backbone_params(const BackboneConfig& config, std::mt19937_64& rng);
void append_parameters(ParameterRefs& out, const std::string& prefix, BackboneParams& p);

/// Elementwise (x - mean[c]) / std[c] over the channel axis of [H x W x 3].
Tensor standardize(const Tensor& image, const std::array<double, 3>& mean,
                   const std::array<double, 3>& std);

/// Flattens each 4x4x3 block of an [H x W x 3] image (row-major, channels
/// innermost) and projects it: returns [(H/4)*(W/4) x C].
Tensor patch_embed(const Tensor& image, const LinearParams& embed);

struct BlockResult {
  Tensor grid;
  // Attention weights in window order, [window][head][query][key].
  std::vector<Real> attention;
};

/// x + Attn(LN(x)) with attention inside non-overlapping window x window
/// groups, then x + FFN(LN(x)). `grid` is [h*w x d] in row-major cell order.
BlockResult window_attention_block(const Tensor& grid, std::size_t height, std::size_t width,
                                   const AttentionBlockParams& params, std::size_t window,
                                   std::size_t heads);

/// Concatenates each 2x2 block ([h*w x d] -> [(h/2)*(w/2) x 4d]) and projects
/// to 2d channels.
Tensor downsample_merge(const Tensor& grid, std::size_t height, std::size_t width,
                        const LinearParams& project);

FeatureMap backbone_forward(const Tensor& image, const BackboneConfig& config,
                            const BackboneParams& params, bool training, std::uint64_t seed);

/// PMT1 rank-3 [h x w x channels] tensor.
FeatureMap load_features(const std::filesystem::path& path, std::size_t expected_channels);
void save_features(const std::filesystem::path& path, const FeatureMap& map);

PMP_PRECISION_END
}  // namespace pmp
