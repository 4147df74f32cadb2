#pragma once

#include <cstdint>

#include "pmp/backbone.hpp"
#include "pmp/head.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

struct ModelConfig {
  BackboneConfig backbone;
  HeadConfig head;
};

/// Throws ConfigError on any divisibility or neighbour-count violation.
void validate_model(const ModelConfig& config);

struct ModelOutputs {
  FeatureMap features;
  HeadOutputs head;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const BackboneParams& backbone() const { return backbone_; }
  const HeadParams& head() const { return head_; }

  /// Every learnable tensor, in a fixed order.
  ParameterRefs parameters();
  std::size_t parameter_count();

  /// Copy whose parameters are fresh leaves with private gradient buffers,
  /// so one forward/backward can run without touching this model's tensors.
  Model bind() const;

  ModelOutputs forward(const Tensor& image, bool training, std::uint64_t seed) const;

 private:
  ModelConfig config_;
  BackboneParams backbone_;
  HeadParams head_;
};

/// Mean cross-entropy over the logit vectors present for the head variant.
Tensor model_loss(const ModelOutputs& outputs, std::size_t target);

PMP_PRECISION_END
}  // namespace pmp
