#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "gradcheck_f64.hpp"
#include "pmp/errors.hpp"
#include "pmp/experiment.hpp"

namespace {

constexpr double kGradTolerance = 1e-3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch message-passing classifier: data generation, training and analysis"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> fold;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment configuration")->required();
    cmd->add_option("--seed", seed, "global seed override");
    cmd->add_option("--out", out, "output directory override");
    cmd->add_option("--fold", fold, "restrict to one fold");
  };
  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic dataset");
  CLI::App* train = app.add_subcommand("train", "k-fold training, checkpoints and metrics.csv");
  CLI::App* eval = app.add_subcommand("eval", "evaluate saved checkpoints");
  CLI::App* cam = app.add_subcommand("cam", "Grad-CAM heatmaps for one fold's test images");
  CLI::App* ablate = app.add_subcommand("ablate", "train every head variant");
  for (CLI::App* cmd : {gen, train, eval, cam, ablate}) add_common(cmd);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the head");
  std::uint64_t check_seed = 0;
  gradcheck->add_option("--seed", check_seed, "instance seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gradcheck->parsed()) {
      const auto r = pmp::cli::run_head_gradcheck(check_seed);
      std::cout << "max_relative_error " << r.max_relative_error << " over " << r.elements
                << " elements (worst " << r.worst_parameter << "[" << r.worst_index << "])\n";
      return r.max_relative_error <= kGradTolerance ? 0 : 1;
    }
    pmp::ExperimentConfig config = pmp::load_config(config_path);
    if (seed) config.seed = *seed;
    if (out) config.output_dir = *out;
    if (gen->parsed()) return pmp::run_gen(config, std::cout);
    if (train->parsed()) return pmp::run_train(config, fold, std::cout);
    if (eval->parsed()) return pmp::run_eval(config, fold, std::cout);
    if (cam->parsed()) return pmp::run_cam(config, fold, std::cout);
    if (ablate->parsed()) return pmp::run_ablate(config, fold, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
