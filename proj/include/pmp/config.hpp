#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pmp/model.hpp"
#include "pmp/train.hpp"

namespace pmp {

struct DataConfig {
  std::filesystem::path path;          // existing dataset directory; empty means generate
  std::size_t per_class = 125;         // used when `counts` is empty
  std::vector<std::size_t> counts;     // per-class sample counts
  double noise = 0.05;
  std::optional<std::uint64_t> seed;   // defaults to the global seed
  std::size_t balance_target = 0;      // 0 disables class balancing
};

struct CamConfig {
  bool upsample = false;  // bilinear upsampling to image resolution
  std::size_t images = 20;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  bool train_seed_set = false;
  DataConfig data;
  CamConfig cam;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  std::uint64_t data_seed() const { return data.seed.value_or(seed); }
  std::uint64_t train_seed() const { return train_seed_set ? train.seed : seed; }
};

/// Parses a JSON document. Nested objects and dotted keys are equivalent
/// ({"small": {"k": 4}} is "small.k"); unknown keys raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every constraint that can be checked without data: divisibility, k
/// against derived patch counts (naming the branch), schedule and split sizes.
void validate_config(const ExperimentConfig& config);

/// Flattened dotted keys accepted by parse_config.
const std::vector<std::string>& config_keys();

}  // namespace pmp
