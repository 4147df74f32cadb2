#include "pmp/message_passing.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "pmp/init.hpp"
#include "pmp/random.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

namespace {

PMPParams make_params(std::size_t in_width, std::size_t width, std::mt19937_64& rng) {
  PMPParams p;
  p.weight = linear_weight(in_width, width, rng);
  p.bias = Tensor::zeros({width}, true);
  p.gamma = Tensor::full({width}, Real(1), true);
  p.beta = Tensor::zeros({width}, true);
  return p;
}

Tensor message_map(const Tensor& input, const PMPParams& params, bool training,
                   std::uint64_t seed) {
  Tensor h = linear(input, params.weight, params.bias);
  h = layer_norm(h, params.gamma, params.beta);
  h = leaky_relu(h, params.leaky_slope);
  return dropout(h, params.dropout_rate, training, seed);
}

}  // namespace

std::uint64_t module_seed(std::uint64_t seed, std::size_t module) {
  return module == 0 ? seed : derive_seed(seed, module);
}

PMPParams make_pmp_params(std::size_t width, std::mt19937_64& rng) {
  return make_params(2 * width, width, rng);
}

PMPParams make_mlp_params(std::size_t width, std::mt19937_64& rng) {
  return make_params(width, width, rng);
}

Real squared_distance(std::span<const Real> a, std::span<const Real> b) {
  Real acc = 0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const Real diff = a[c] - b[c];
    acc += diff * diff;
  }
  return acc;
}

NeighborGraph knn_graph(const PatchSet& patches, std::size_t k) {
  if (patches.features.rank() != 2) {
    throw DimensionError("knn_graph: patch features must be [n x F], got " +
                         shape_string(patches.features.shape()));
  }
  const std::size_t n = patches.size(), f = patches.width();
  if (k == 0 || k >= n) {
    throw ConfigError("knn_graph: need 1 <= k <= n-1, got n=" + std::to_string(n) +
                      ", k=" + std::to_string(k));
  }
  const auto x = patches.features.values();
  NeighborGraph graph{n, k, std::vector<std::size_t>(n * k)};
  std::vector<std::pair<Real, std::size_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    const auto pi = x.subspan(i * f, f);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back(squared_distance(pi, x.subspan(j * f, f)), j);
    }
    // pair ordering is (distance, index): ties resolve to the smaller index.
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) graph.indices[i * k + r] = cand[r].second;
  }
  return graph;
}

Tensor edge_messages(const PatchSet& patches, const NeighborGraph& graph, const PMPParams& params,
                     bool training, std::uint64_t seed) {
  const std::size_t n = patches.size(), f = patches.width();
  if (graph.n != n) {
    throw DimensionError("edge_messages: graph built for " + std::to_string(graph.n) +
                         " patches, got " + std::to_string(n));
  }
  if (params.weight.rank() != 2 || params.weight.dim(0) != 2 * f || params.weight.dim(1) != f) {
    throw DimensionError("edge_messages: weight " + shape_string(params.weight.shape()) +
                         " must be [2F x F] with F=" + std::to_string(f));
  }
  std::vector<std::size_t> centers(n * graph.k);
  for (std::size_t i = 0; i < n; ++i)
    std::fill_n(centers.begin() + static_cast<std::ptrdiff_t>(i * graph.k), graph.k, i);

  const Tensor p_i = gather_rows(patches.features, centers);
  const Tensor p_j = gather_rows(patches.features, graph.indices);
  const Tensor input = concat_cols(p_i, sub(p_j, p_i));
  const Tensor e = message_map(input, params, training, seed);
  return reshape(e, {n, graph.k, f});
}

PatchSet aggregate_max(const Tensor& messages) {
  if (messages.rank() != 3) {
    throw DimensionError("aggregate_max: messages must be [n x k x F], got " +
                         shape_string(messages.shape()));
  }
  return PatchSet{max_over_groups(messages).values};
}

PatchSet pmp_forward(const PatchSet& patches, const PMPParams& params, std::size_t k,
                     bool training, std::uint64_t seed) {
  const NeighborGraph graph = knn_graph(patches, k);
  return aggregate_max(edge_messages(patches, graph, params, training, seed));
}

PatchSet pmp_stack(const PatchSet& patches, std::span<const PMPParams> modules, std::size_t k,
                   bool training, std::uint64_t seed, GraphMode mode) {
  PatchSet current = patches;
  if (modules.empty()) return current;
  NeighborGraph graph = knn_graph(patches, k);
  for (std::size_t m = 0; m < modules.size(); ++m) {
    if (m > 0 && mode == GraphMode::dynamic) graph = knn_graph(current, k);
    current = aggregate_max(
        edge_messages(current, graph, modules[m], training, module_seed(seed, m)));
  }
  return current;
}

PatchSet patch_mlp(const PatchSet& patches, const PMPParams& params, bool training,
                   std::uint64_t seed) {
  const std::size_t f = patches.width();
  if (params.weight.rank() != 2 || params.weight.dim(0) != f || params.weight.dim(1) != f) {
    throw DimensionError("patch_mlp: weight " + shape_string(params.weight.shape()) +
                         " must be [F x F] with F=" + std::to_string(f));
  }
  return PatchSet{message_map(patches.features, params, training, seed)};
}

PatchSet mlp_stack(const PatchSet& patches, std::span<const PMPParams> modules, bool training,
                   std::uint64_t seed) {
  PatchSet current = patches;
  for (std::size_t m = 0; m < modules.size(); ++m)
    current = patch_mlp(current, modules[m], training, module_seed(seed, m));
  return current;
}

PMP_PRECISION_END
}  // namespace pmp
