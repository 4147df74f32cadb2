#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pmp/feature_map.hpp"
#include "pmp/message_passing.hpp"
#include "pmp/parameters.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

/// One scale-specific branch: merge block side, neighbours per patch, and
/// number of stacked message-passing modules.
struct BranchConfig {
  std::size_t patch_size = 1;
  std::size_t k = 8;
  std::size_t n_modules = 3;
};

enum class HeadVariant {
  backbone_only,  // y' only
  mlp,            // small branch with per-patch MLPs in place of message passing
  mono,           // small branch only
  dual,           // both branches
};

std::string to_string(HeadVariant v);
HeadVariant parse_head_variant(const std::string& s);

struct HeadConfig {
  std::size_t channels = 128;  // width of the incoming feature map
  std::size_t num_classes = 4;
  std::size_t branch_width = 0;  // projected patch width; 0 means `channels`
  BranchConfig small{1, 8, 3};
  BranchConfig large{2, 4, 3};
  HeadVariant variant = HeadVariant::dual;
  GraphMode graph_mode = GraphMode::dynamic;
  Real dropout_rate = kDefaultDropoutRate;
  Real leaky_slope = kDefaultLeakySlope;

  std::size_t projected_width() const { return branch_width ? branch_width : channels; }
  bool uses_small() const { return variant != HeadVariant::backbone_only; }
  bool uses_large() const { return variant == HeadVariant::dual; }
};

struct BranchParams {
  LinearParams project;
  std::vector<PMPParams> modules;
  LinearParams classifier;
};

struct HeadParams {
  LinearParams primary;
  BranchParams small;
  BranchParams large;
};

/// y1: primary logits, y2: large-branch logits, y3: small-branch logits.
/// Branches absent from the variant leave their tensor undefined.
struct HeadOutputs {
  Tensor y1;
  Tensor y2;
  Tensor y3;
  Tensor fused_logits;  // mean of the present logit vectors
  Tensor fused;         // softmax(fused_logits)

  std::vector<Tensor> logits() const;
};

/// Throws ConfigError naming the branch when a branch cannot run on an
/// h x w map (indivisible merge size, or k not below the patch count).
void validate_head(const HeadConfig& config, std::size_t height, std::size_t width);

HeadParams make_head_params(const HeadConfig& config, std::mt19937_64& rng);
void append_parameters(ParameterRefs& out, const std::string& prefix, HeadParams& p);

/// Grid-cell visiting order that lists every s x s block contiguously
/// (blocks row-major, cells row-major within a block).
std::vector<std::size_t> block_order(std::size_t height, std::size_t width, std::size_t s);

/// Concatenates each s x s block of an h x w grid ([h*w x F]) into one
/// s*s*F vector, then projects it linearly.
PatchSet patch_merge(const Tensor& grid, std::size_t height, std::size_t width, std::size_t s,
                     const LinearParams& project);

/// Mean-pool over patches, then a linear map to class logits ([C]).
Tensor branch_logits(const PatchSet& patches, const LinearParams& classifier);

/// softmax(mean(y...)).
Tensor fuse_predict(const Tensor& y1, const Tensor& y2, const Tensor& y3);
Tensor fuse_predict(std::span<const Tensor> logits);
Tensor mean_logits(std::span<const Tensor> logits);

/// (CE(y1,t) + CE(y2,t) + CE(y3,t)) / 3.
Tensor joint_loss(std::size_t target, const Tensor& y1, const Tensor& y2, const Tensor& y3);
Tensor joint_loss(std::size_t target, std::span<const Tensor> logits);

HeadOutputs head_forward(const FeatureMap& map, const HeadConfig& config, const HeadParams& params,
                         bool training, std::uint64_t seed);

PMP_PRECISION_END
}  // namespace pmp
