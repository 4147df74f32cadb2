#include "pmp/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>

#include "pmp/errors.hpp"
#include "pmp/gradcam.hpp"
#include "pmp/random.hpp"
#include "pmp/train.hpp"

namespace pmp {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kInitTag = 0x696e6974;
constexpr std::uint64_t kShuffleTag = 0x73687566;
constexpr std::uint64_t kValidationTag = 0x76616c;

std::string fold_name(std::size_t fold) { return "fold" + std::to_string(fold); }

fs::path checkpoint_dir(const ExperimentConfig& config, std::size_t fold) {
  return config.output_dir / "checkpoints" / fold_name(fold);
}

// Stratified hold-out of `fraction` of each class from the training indices.
void split_validation(const Dataset& data, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& validation, double fraction, std::size_t classes,
                      std::uint64_t seed) {
  if (fraction <= 0) return;
  std::vector<std::size_t> order = train;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> per_class(classes, 0), taken(classes, 0);
  for (std::size_t i : order) ++per_class.at(data[i].label);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const std::size_t c = data[i].label;
    const auto quota = static_cast<std::size_t>(fraction * static_cast<double>(per_class[c]));
    if (taken[c] < quota) {
      validation.push_back(i);
      ++taken[c];
    } else {
      kept.push_back(i);
    }
  }
  std::sort(kept.begin(), kept.end());
  std::sort(validation.begin(), validation.end());
  train = std::move(kept);
}

Model load_fold_model(const ExperimentConfig& config, std::size_t fold) {
  Model model(config.model, 0);
  load_checkpoint(checkpoint_dir(config, fold), model, nullptr);
  return model;
}

void write_train_log(const fs::path& path, const std::vector<FoldRun>& runs) {
  std::ofstream out(path);
  out << "fold\tepoch\tlr\ttrain_loss\tval_accuracy\n";
  out << std::setprecision(8);
  for (const FoldRun& r : runs) {
    for (const EpochLog& e : r.log) {
      out << r.fold << '\t' << e.epoch << '\t' << e.lr << '\t' << e.train_loss << '\t';
      if (e.val_accuracy) {
        out << *e.val_accuracy;
      } else {
        out << '-';
      }
      out << '\n';
    }
  }
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  const std::size_t classes = config.model.head.num_classes;
  PreparedData out;
  if (!config.data.path.empty()) {
    LoadedDataset loaded = load_dataset(config.data.path);
    out.data = std::move(loaded.data);
    for (const Sample& s : out.data) {
      if (s.label >= classes) {
        throw ConfigError("dataset: sample " + s.id + " has label " + std::to_string(s.label) +
                          " but head.num_classes is " + std::to_string(classes));
      }
    }
    if (loaded.plan && loaded.plan->folds == config.train.folds) {
      out.plan = *loaded.plan;
      return out;
    }
  } else {
    const SyntheticSpec spec =
        SyntheticSpec::multiscale_lesions(config.model.backbone.side, config.data.noise, config.data_seed());
    std::vector<std::size_t> counts = config.data.counts;
    if (counts.empty()) counts.assign(classes, config.data.per_class);
    out.data = generate_synthetic(spec, counts);
    if (config.data.balance_target > 0) {
      out.data = balance_resample(out.data, classes, config.data.balance_target, config.data_seed());
    }
  }
  out.plan = kfold_split(out.data, classes, config.train.folds, config.data_seed());
  return out;
}

std::vector<std::size_t> selected_folds(const ExperimentConfig& config, std::optional<std::size_t> fold) {
  if (fold) {
    if (*fold >= config.train.folds) {
      throw ConfigError("--fold " + std::to_string(*fold) + " out of range for " +
                        std::to_string(config.train.folds) + " folds");
    }
    return {*fold};
  }
  std::vector<std::size_t> all(config.train.folds);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

FoldRun train_fold(const ExperimentConfig& config, const PreparedData& prepared, std::size_t fold,
                   const fs::path& checkpoint, std::ostream& log) {
  const std::uint64_t seed = config.train_seed();
  std::vector<std::size_t> train = prepared.plan.complement(fold);
  std::vector<std::size_t> validation;
  split_validation(prepared.data, train, validation, config.train.val_fraction,
                   config.model.head.num_classes, derive_seed(seed, kValidationTag + fold));
  const std::vector<std::size_t> test = prepared.plan.members(fold);

  Model model(config.model, derive_seed(derive_seed(seed, kInitTag), fold));
  TrainConfig tc = config.train;
  tc.seed = derive_seed(derive_seed(seed, kShuffleTag), fold);

  FoldRun run;
  run.fold = fold;
  const TrainOutcome outcome = train_model(
      model, prepared.data, train, validation, tc,
      [&](const EpochLog& e, Model& m, const AdamState& state) {
        log << fold_name(fold) << " epoch " << e.epoch + 1 << "/" << tc.epochs << " lr " << e.lr
            << " loss " << e.train_loss;
        if (e.val_accuracy) log << " val_acc " << *e.val_accuracy;
        log << std::endl;
        if (!checkpoint.empty()) save_checkpoint(checkpoint, m, &state);
      });
  run.log = outcome.log;
  if (!checkpoint.empty()) save_checkpoint(checkpoint, model, &outcome.optimizer);

  const EvalResult eval = evaluate(model, prepared.data, test);
  run.confusion = eval.confusion;
  run.metrics = summarize(std::to_string(fold), eval.confusion);
  log << fold_name(fold) << " test accuracy " << run.metrics.accuracy << " kappa " << run.metrics.kappa
      << '\n';
  return run;
}

int run_gen(const ExperimentConfig& config, std::ostream& log) {
  validate_config(config);
  const PreparedData prepared = prepare_data(config);
  const fs::path dir = config.output_dir / "data";
  save_dataset(dir, prepared.data, prepared.plan);
  const auto counts = class_counts(prepared.data, config.model.head.num_classes);
  log << "wrote " << prepared.data.size() << " samples to " << dir.string() << " (per class:";
  for (std::size_t c : counts) log << ' ' << c;
  log << ")\n";
  return 0;
}

int run_train(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log) {
  validate_config(config);
  const PreparedData prepared = prepare_data(config);
  fs::create_directories(config.output_dir);
  std::vector<FoldRun> runs;
  std::vector<MetricsRow> rows;
  for (std::size_t f : selected_folds(config, fold)) {
    runs.push_back(train_fold(config, prepared, f, checkpoint_dir(config, f), log));
    rows.push_back(runs.back().metrics);
    write_confusion_csv(config.output_dir / ("confusion_" + fold_name(f) + ".csv"), runs.back().confusion);
  }
  write_metrics_csv(config.output_dir / "metrics.csv", rows);
  write_train_log(config.output_dir / "train_log.tsv", runs);
  log << "wrote " << (config.output_dir / "metrics.csv").string() << '\n';
  return 0;
}

int run_eval(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log) {
  validate_config(config);
  const PreparedData prepared = prepare_data(config);
  const fs::path dir = config.output_dir / "eval";
  fs::create_directories(dir);
  std::vector<MetricsRow> rows;
  for (std::size_t f : selected_folds(config, fold)) {
    const Model model = load_fold_model(config, f);
    const EvalResult eval = evaluate(model, prepared.data, prepared.plan.members(f));
    rows.push_back(summarize(std::to_string(f), eval.confusion));
    write_confusion_csv(dir / ("confusion_" + fold_name(f) + ".csv"), eval.confusion);
    log << fold_name(f) << " accuracy " << rows.back().accuracy << " loss " << eval.mean_loss << '\n';
  }
  write_metrics_csv(dir / "metrics.csv", rows);
  return 0;
}

int run_cam(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log) {
  validate_config(config);
  const PreparedData prepared = prepare_data(config);
  const std::size_t f = fold.value_or(0);
  if (f >= config.train.folds) throw ConfigError("--fold " + std::to_string(f) + " out of range");
  const Model model = load_fold_model(config, f);
  const fs::path dir = config.output_dir / "cam" / fold_name(f);
  fs::create_directories(dir);
  std::ofstream summary(dir / "heatmaps.tsv");
  summary << "id\tlabel\tpredicted\tpeak_row\tpeak_col\tfile\n";
  const std::vector<std::size_t> members = prepared.plan.members(f);
  const std::size_t count = std::min(config.cam.images, members.size());
  const EvalResult eval = evaluate(model, prepared.data, std::span(members.data(), count));
  for (std::size_t j = 0; j < count; ++j) {
    const Sample& s = prepared.data[members[j]];
    Heatmap map = grad_cam(model, s.image, s.label);
    const auto [pr, pc] = map.argmax();
    if (config.cam.upsample) map = upsample_bilinear(map, s.image.dim(0), s.image.dim(1));
    const std::string file = s.id + "_class" + std::to_string(s.label) + ".pgm";
    export_heatmap_pgm(map, dir / file);
    summary << s.id << '\t' << s.label << '\t' << eval.predictions[j] << '\t' << pr << '\t' << pc << '\t'
            << file << '\n';
  }
  log << "wrote " << count << " heatmaps to " << dir.string() << '\n';
  return 0;
}

int run_ablate(const ExperimentConfig& config, std::optional<std::size_t> fold, std::ostream& log) {
  validate_config(config);
  const PreparedData prepared = prepare_data(config);
  const fs::path root = config.output_dir / "ablate";
  fs::create_directories(root);
  std::ofstream summary(root / "ablation.csv");
  summary << "variant,accuracy,precision_macro,recall_macro,f1_macro,kappa\n";
  for (HeadVariant v : {HeadVariant::backbone_only, HeadVariant::mlp, HeadVariant::mono, HeadVariant::dual}) {
    ExperimentConfig vc = config;
    vc.model.head.variant = v;
    validate_config(vc);
    std::vector<MetricsRow> rows;
    for (std::size_t f : selected_folds(vc, fold)) {
      log << to_string(v) << ": ";
      rows.push_back(train_fold(vc, prepared, f, {}, log).metrics);
    }
    const fs::path dir = root / to_string(v);
    fs::create_directories(dir);
    write_metrics_csv(dir / "metrics.csv", rows);
    MetricsRow mean;
    for (const MetricsRow& r : rows) {
      mean.accuracy += r.accuracy / static_cast<double>(rows.size());
      mean.precision_macro += r.precision_macro / static_cast<double>(rows.size());
      mean.recall_macro += r.recall_macro / static_cast<double>(rows.size());
      mean.f1_macro += r.f1_macro / static_cast<double>(rows.size());
      mean.kappa += r.kappa / static_cast<double>(rows.size());
    }
    char line[256];
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", to_string(v).c_str(), mean.accuracy,
                  mean.precision_macro, mean.recall_macro, mean.f1_macro, mean.kappa);
    summary << line;
  }
  log << "wrote " << (root / "ablation.csv").string() << '\n';
  return 0;
}

}  // namespace pmp
