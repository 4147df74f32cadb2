#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pmp/data.hpp"
#include "pmp/metrics.hpp"
#include "pmp/model.hpp"

namespace pmp {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter, mirroring parameter shapes.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

AdamState make_adam_state(const ParameterRefs& params, AdamConfig config = {});

/// One bias-corrected Adam update of every parameter in place.
void adam_step(const ParameterRefs& params, std::span<const std::vector<float>> grads,
               AdamState& state, double lr);

struct CosineSchedule {
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  std::size_t epochs = 30;
};

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / epochs)) / 2.
double cosine_lr(std::size_t epoch, const CosineSchedule& schedule);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  bool augment = true;       // random flips per sample and epoch
  double val_fraction = 0;   // held out of the training split for best-checkpoint retention
};

struct EpochResult {
  double mean_loss = 0;
  std::size_t steps = 0;
};

/// Shuffles `indices` with `seed`, then takes one Adam step per batch of the
/// summed per-sample joint loss divided by the batch size.
EpochResult train_epoch(Model& model, const Dataset& data, std::span<const std::size_t> indices,
                        std::size_t batch_size, AdamState& state, double lr, std::uint64_t seed,
                        bool augment = false);

struct EvalResult {
  ConfusionMatrix confusion;
  double mean_loss = 0;
  std::vector<std::size_t> predictions;
};

/// Eval-mode pass; predictions are the argmax of the fused probabilities.
EvalResult evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> indices);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  std::optional<double> val_accuracy;
};

struct TrainOutcome {
  std::vector<EpochLog> log;
  std::optional<std::size_t> best_epoch;
  AdamState optimizer;  // state after the last epoch
};

using EpochCallback = std::function<void(const EpochLog&, Model&, const AdamState&)>;

/// Full schedule: cosine learning rate over `epochs`, optional validation
/// with best-accuracy retention (the model ends holding the best weights).
TrainOutcome train_model(Model& model, const Dataset& data, std::span<const std::size_t> train,
                         std::span<const std::size_t> validation, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});

/// Directory with checkpoint.tsv plus PMT1 files for parameters and, when
/// given, the Adam moments. Written to a temporary directory and swapped in.
void save_checkpoint(const std::filesystem::path& dir, Model& model, const AdamState* adam);
/// Loads into a model built with the same configuration.
void load_checkpoint(const std::filesystem::path& dir, Model& model, AdamState* adam);

/// Copies parameter values (not gradients).
std::vector<std::vector<float>> snapshot(Model& model);
void restore(Model& model, const std::vector<std::vector<float>>& values);

}  // namespace pmp
