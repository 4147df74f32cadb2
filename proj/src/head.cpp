#include "pmp/head.hpp"

#include <utility>

#include "pmp/init.hpp"
#include "pmp/random.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

namespace {

constexpr std::uint64_t kSmallBranchTag = 1;
constexpr std::uint64_t kLargeBranchTag = 2;

LinearParams make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {linear_weight(in, out, rng), Tensor::zeros({out}, true)};
}

BranchParams make_branch(const HeadConfig& config, const BranchConfig& branch, bool mlp,
                         std::mt19937_64& rng) {
  const std::size_t d = config.projected_width();
  BranchParams p;
  p.project = make_linear(branch.patch_size * branch.patch_size * config.channels, d, rng);
  for (std::size_t m = 0; m < branch.n_modules; ++m) {
    PMPParams mod = mlp ? make_mlp_params(d, rng) : make_pmp_params(d, rng);
    mod.dropout_rate = config.dropout_rate;
    mod.leaky_slope = config.leaky_slope;
    p.modules.push_back(std::move(mod));
  }
  p.classifier = make_linear(d, config.num_classes, rng);
  return p;
}

void append_branch(ParameterRefs& out, const std::string& prefix, BranchParams& b) {
  append_parameters(out, prefix + ".project", b.project);
  for (std::size_t m = 0; m < b.modules.size(); ++m) {
    const std::string mp = prefix + ".module" + std::to_string(m);
    append_parameter(out, mp + ".weight", b.modules[m].weight);
    append_parameter(out, mp + ".bias", b.modules[m].bias);
    append_parameter(out, mp + ".gamma", b.modules[m].gamma);
    append_parameter(out, mp + ".beta", b.modules[m].beta);
  }
  append_parameters(out, prefix + ".classifier", b.classifier);
}

void validate_branch(const char* name, const BranchConfig& b, std::size_t h, std::size_t w) {
  const std::string where = std::string(name) + " branch: ";
  if (b.patch_size == 0 || h % b.patch_size != 0 || w % b.patch_size != 0) {
    throw ConfigError(where + "patch size " + std::to_string(b.patch_size) +
                      " does not divide the " + std::to_string(h) + "x" + std::to_string(w) +
                      " feature map");
  }
  const std::size_t patches = (h / b.patch_size) * (w / b.patch_size);
  if (b.n_modules > 0 && (b.k == 0 || b.k >= patches)) {
    throw ConfigError(where + "k=" + std::to_string(b.k) + " must satisfy 1 <= k < " +
                      std::to_string(patches) + " (derived patch count)");
  }
}

template <class Fn>
auto annotate(const char* branch, Fn&& fn) {
  const std::string where = std::string(branch) + " branch: ";
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(where + e.what());
  } catch (const IndexError& e) {
    throw IndexError(where + e.what());
  }
}

Tensor run_branch(const FeatureMap& map, const HeadConfig& config, const BranchConfig& branch,
                  const BranchParams& params, bool mlp, bool training, std::uint64_t seed) {
  PatchSet patches =
      patch_merge(map.values, map.height, map.width, branch.patch_size, params.project);
  if (mlp) {
    patches = mlp_stack(patches, params.modules, training, seed);
  } else {
    patches = pmp_stack(patches, params.modules, branch.k, training, seed, config.graph_mode);
  }
  return branch_logits(patches, params.classifier);
}

}  // namespace

std::string to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::backbone_only: return "backbone";
    case HeadVariant::mlp: return "mlp";
    case HeadVariant::mono: return "mono";
    case HeadVariant::dual: return "dual";
  }
  return "unknown";
}

HeadVariant parse_head_variant(const std::string& s) {
  if (s == "backbone") return HeadVariant::backbone_only;
  if (s == "mlp") return HeadVariant::mlp;
  if (s == "mono") return HeadVariant::mono;
  if (s == "dual") return HeadVariant::dual;
  throw ConfigError("unknown head variant '" + s + "' (expected backbone, mlp, mono or dual)");
}

std::vector<Tensor> HeadOutputs::logits() const {
  std::vector<Tensor> out{y1};
  if (y2.defined()) out.push_back(y2);
  if (y3.defined()) out.push_back(y3);
  return out;
}

void validate_head(const HeadConfig& config, std::size_t height, std::size_t width) {
  if (config.num_classes < 2) throw ConfigError("head: need at least two classes");
  if (height * width < 2) throw ConfigError("head: feature map needs at least two cells");
  if (config.uses_small()) validate_branch("small", config.small, height, width);
  if (config.uses_large()) validate_branch("large", config.large, height, width);
}

HeadParams make_head_params(const HeadConfig& config, std::mt19937_64& rng) {
  HeadParams p;
  p.primary = make_linear(config.channels, config.num_classes, rng);
  if (config.uses_small())
    p.small = make_branch(config, config.small, config.variant == HeadVariant::mlp, rng);
  if (config.uses_large()) p.large = make_branch(config, config.large, false, rng);
  return p;
}

void append_parameters(ParameterRefs& out, const std::string& prefix, HeadParams& p) {
  append_parameters(out, prefix + ".primary", p.primary);
  if (p.small.project.weight.defined()) append_branch(out, prefix + ".small", p.small);
  if (p.large.project.weight.defined()) append_branch(out, prefix + ".large", p.large);
}

std::vector<std::size_t> block_order(std::size_t height, std::size_t width, std::size_t s) {
  if (s == 0 || height % s != 0 || width % s != 0) {
    throw ConfigError("block size " + std::to_string(s) + " does not divide a " +
                      std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  std::vector<std::size_t> order;
  order.reserve(height * width);
  for (std::size_t br = 0; br < height / s; ++br)
    for (std::size_t bc = 0; bc < width / s; ++bc)
      for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = 0; c < s; ++c) order.push_back((br * s + r) * width + bc * s + c);
  return order;
}

PatchSet patch_merge(const Tensor& grid, std::size_t height, std::size_t width, std::size_t s,
                     const LinearParams& project) {
  if (grid.rank() != 2 || grid.dim(0) != height * width) {
    throw DimensionError("patch_merge: grid " + shape_string(grid.shape()) + " is not [" +
                         std::to_string(height * width) + " x F]");
  }
  const std::size_t f = grid.dim(1);
  const std::vector<std::size_t> order = block_order(height, width, s);
  const std::size_t blocks = (height / s) * (width / s);
  Tensor merged = s == 1 ? grid : reshape(gather_rows(grid, order), {blocks, s * s * f});
  return PatchSet{linear(merged, project.weight, project.bias)};
}

Tensor branch_logits(const PatchSet& patches, const LinearParams& classifier) {
  const Tensor pooled = mean_pool(patches.features);
  const Tensor logits = linear(pooled, classifier.weight, classifier.bias);
  return reshape(logits, {logits.dim(1)});
}

Tensor mean_logits(std::span<const Tensor> logits) {
  if (logits.empty()) throw UsageError("mean_logits: no logit vectors");
  Tensor acc = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i].shape() != logits[0].shape()) {
      throw DimensionError("fuse: logit shapes differ, " + shape_string(logits[0].shape()) +
                           " vs " + shape_string(logits[i].shape()));
    }
    acc = add(acc, logits[i]);
  }
  return logits.size() == 1 ? acc : scale(acc, Real(1) / static_cast<Real>(logits.size()));
}

Tensor fuse_predict(std::span<const Tensor> logits) { return softmax(mean_logits(logits)); }

Tensor fuse_predict(const Tensor& y1, const Tensor& y2, const Tensor& y3) {
  const std::vector<Tensor> all{y1, y2, y3};
  return fuse_predict(all);
}

Tensor joint_loss(std::size_t target, std::span<const Tensor> logits) {
  if (logits.empty()) throw UsageError("joint_loss: no logit vectors");
  Tensor acc = softmax_cross_entropy(logits[0], target);
  for (std::size_t i = 1; i < logits.size(); ++i)
    acc = add(acc, softmax_cross_entropy(logits[i], target));
  return logits.size() == 1 ? acc : scale(acc, Real(1) / static_cast<Real>(logits.size()));
}

Tensor joint_loss(std::size_t target, const Tensor& y1, const Tensor& y2, const Tensor& y3) {
  const std::vector<Tensor> all{y1, y2, y3};
  return joint_loss(target, all);
}

HeadOutputs head_forward(const FeatureMap& map, const HeadConfig& config, const HeadParams& params,
                         bool training, std::uint64_t seed) {
  if (map.values.rank() != 2 || map.values.dim(0) != map.cells() ||
      map.values.dim(1) != config.channels) {
    throw DimensionError("head_forward: feature map " + shape_string(map.values.shape()) +
                         " does not match " + std::to_string(map.height) + "x" +
                         std::to_string(map.width) + "x" + std::to_string(config.channels));
  }
  validate_head(config, map.height, map.width);

  HeadOutputs out;
  out.y1 = annotate("primary", [&] { return branch_logits(PatchSet{map.values}, params.primary); });
  if (config.uses_large()) {
    out.y2 = annotate("large", [&] {
      return run_branch(map, config, config.large, params.large, false, training,
                        derive_seed(seed, kLargeBranchTag));
    });
  }
  if (config.uses_small()) {
    out.y3 = annotate("small", [&] {
      return run_branch(map, config, config.small, params.small,
                        config.variant == HeadVariant::mlp, training,
                        derive_seed(seed, kSmallBranchTag));
    });
  }
  const std::vector<Tensor> all = out.logits();
  out.fused_logits = mean_logits(all);
  out.fused = softmax(out.fused_logits);
  return out;
}

PMP_PRECISION_END
}  // namespace pmp
