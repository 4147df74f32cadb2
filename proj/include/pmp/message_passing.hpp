#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pmp/ops.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

/// Graph nodes: n patch feature vectors of width F, stored as [n x F].
struct PatchSet {
  Tensor features;

  std::size_t size() const { return features.dim(0); }
  std::size_t width() const { return features.dim(1); }
};

/// Directed feature-space KNN graph: row i lists the k nearest patches to i,
/// ordered by (distance, index), never including i itself.
struct NeighborGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // n x k

  std::span<const std::size_t> row(std::size_t i) const {
    return std::span<const std::size_t>(indices).subspan(i * k, k);
  }
};

/// Learnable parameters of h_theta: Linear(2F -> F), LayerNorm(F), LeakyReLU,
/// Dropout. Also used with a [F x F] weight by the per-patch MLP substitute.
struct PMPParams {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  Real dropout_rate = kDefaultDropoutRate;
  Real leaky_slope = kDefaultLeakySlope;
};

enum class GraphMode {
  dynamic,  // rebuild the KNN graph from the current features before every module
  fixed,    // build once from the stack input
};

PMPParams make_pmp_params(std::size_t width, std::mt19937_64& rng);
/// Parameters for the MLP substitute: same layers, input width F.
PMPParams make_mlp_params(std::size_t width, std::mt19937_64& rng);

/// Squared Euclidean distance between two patches, accumulated in index order.
Real squared_distance(std::span<const Real> a, std::span<const Real> b);

NeighborGraph knn_graph(const PatchSet& patches, std::size_t k);

/// e_ij = Dropout(LeakyReLU(LayerNorm(Linear([p_i, p_j - p_i])))) for every
/// edge, returned as [n x k x F].
Tensor edge_messages(const PatchSet& patches, const NeighborGraph& graph, const PMPParams& params,
                     bool training, std::uint64_t seed);

/// p'_i = elementwise max over the k messages of patch i.
PatchSet aggregate_max(const Tensor& messages);

/// One message-passing module: KNN graph, edge messages, max aggregation.
PatchSet pmp_forward(const PatchSet& patches, const PMPParams& params, std::size_t k,
                     bool training, std::uint64_t seed);

/// Dropout seed of module m in a stack; module 0 uses `seed` unchanged so a
/// one-module stack matches pmp_forward.
std::uint64_t module_seed(std::uint64_t seed, std::size_t module);

/// Sequential modules, each seeded with module_seed(seed, m).
PatchSet pmp_stack(const PatchSet& patches, std::span<const PMPParams> modules, std::size_t k,
                   bool training, std::uint64_t seed, GraphMode mode = GraphMode::dynamic);

/// Per-patch MLP with no neighbour exchange; the ablation stand-in for a module.
PatchSet patch_mlp(const PatchSet& patches, const PMPParams& params, bool training,
                   std::uint64_t seed);
PatchSet mlp_stack(const PatchSet& patches, std::span<const PMPParams> modules, bool training,
                   std::uint64_t seed);

PMP_PRECISION_END
}  // namespace pmp
