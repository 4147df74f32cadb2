#include "pmp/model.hpp"

#include <random>

namespace pmp {
PMP_PRECISION_BEGIN

void validate_model(const ModelConfig& config) {
  validate_backbone(config.backbone);
  if (config.head.channels != config.backbone.output_channels()) {
    throw ConfigError("head channels " + std::to_string(config.head.channels) +
                      " differ from backbone output channels " +
                      std::to_string(config.backbone.output_channels()));
  }
  const std::size_t side = config.backbone.output_side();
  validate_head(config.head, side, side);
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  validate_model(config_);
  std::mt19937_64 rng(seed);
  backbone_ = make_backbone_params(config_.backbone, rng);
  head_ = make_head_params(config_.head, rng);
}

ParameterRefs Model::parameters() {
  ParameterRefs refs;
  append_parameters(refs, "backbone", backbone_);
  append_parameters(refs, "head", head_);
  return refs;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->numel();
  return n;
}

Model Model::bind() const {
  Model copy = *this;
  for (auto& p : copy.parameters()) *p.tensor = p.tensor->leaf_copy(true);
  return copy;
}

ModelOutputs Model::forward(const Tensor& image, bool training, std::uint64_t seed) const {
  ModelOutputs out;
  out.features = backbone_forward(image, config_.backbone, backbone_, training, seed);
  out.head = head_forward(out.features, config_.head, head_, training, seed);
  return out;
}

Tensor model_loss(const ModelOutputs& outputs, std::size_t target) {
  const std::vector<Tensor> logits = outputs.head.logits();
  return joint_loss(target, logits);
}

PMP_PRECISION_END
}  // namespace pmp
