#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include "pmp/config.hpp"
#include "pmp/data.hpp"
#include "pmp/metrics.hpp"

namespace pmp {

struct PreparedData {
  Dataset data;
  SplitPlan plan;
};

/// Loads data.path, or generates (and optionally balances) the synthetic
/// dataset, then assigns stratified folds.
PreparedData prepare_data(const ExperimentConfig& config);

struct FoldRun {
  std::size_t fold = 0;
  ConfusionMatrix confusion;
  MetricsRow metrics;
  std::vector<EpochLog> log;
};

/// Trains a fresh model on every fold but `fold` and evaluates on `fold`.
/// With a checkpoint directory, the checkpoint is refreshed after every
/// epoch and holds the retained weights at the end.
FoldRun train_fold(const ExperimentConfig& config, const PreparedData& data, std::size_t fold,
                   const std::filesystem::path& checkpoint, std::ostream& log);

/// Folds selected by --fold, or all of them.
std::vector<std::size_t> selected_folds(const ExperimentConfig& config, std::optional<std::size_t> fold);

/// Subcommands. Each writes under config.output_dir and returns an exit status.
int run_gen(const ExperimentConfig& config, std::ostream& log);
int run_train(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log);
int run_eval(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log);
int run_cam(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log);
int run_ablate(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log);

}  // namespace pmp
