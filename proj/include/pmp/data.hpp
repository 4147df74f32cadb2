#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmp/tensor.hpp"

namespace pmp {

enum class Placement { center, periphery, global };
enum class IntensityProfile { flat, gaussian };

/// How lesions of one class are drawn.
struct LesionClass {
  std::string name;
  std::size_t count_min = 0;
  std::size_t count_max = 0;
  double radius_min = 1;
  double radius_max = 1;
  Placement placement = Placement::global;
  IntensityProfile profile = IntensityProfile::flat;
  std::array<double, 3> color{1.0, 0.9, 0.5};
  double opacity = 0.8;
};

struct SyntheticSpec {
  std::size_t side = 128;
  std::vector<LesionClass> classes;
  double noise = 0.05;
  std::uint64_t seed = 0;

  /// Four classes: lesion-free, small scattered lesions, a single large
  /// region, and a few medium central lesions.
  static SyntheticSpec multiscale_lesions(std::size_t side, double noise, std::uint64_t seed);
};

void validate_spec(const SyntheticSpec& spec);

/// Ground-truth lesion geometry in pixel coordinates.
struct Lesion {
  double row = 0;
  double col = 0;
  double radius = 0;
};

struct Sample {
  std::string id;
  std::size_t label = 0;
  std::string provenance;  // "generated" or "augmented:<source id>:<mode>"
  Tensor image;            // [S x S x 3], values in [0, 1]
  std::vector<Lesion> lesions;
};

using Dataset = std::vector<Sample>;

/// counts[c] samples of class c, ids "s000000" onwards in class-major order.
/// Sample i is drawn from derive_seed(spec.seed, i) alone.
Dataset generate_synthetic(const SyntheticSpec& spec, std::span<const std::size_t> counts);

/// Draws one image of the given class; `index` selects the random stream.
Sample generate_sample(const SyntheticSpec& spec, std::size_t label, std::uint64_t index);

enum class FlipMode { none, hflip, vflip };

FlipMode parse_flip_mode(const std::string& s);
std::string to_string(FlipMode m);

/// Label-preserving flip. The seed is unused by flips; it is kept so that
/// randomised augmentations share the signature.
Sample augment(const Sample& sample, FlipMode mode, std::uint64_t seed = 0);

/// Exactly `target` samples per class: under-full classes keep every
/// original and are topped up with flipped copies, over-full classes are
/// subsampled. Throws when a class has no samples.
Dataset balance_resample(const Dataset& data, std::size_t classes, std::size_t target,
                         std::uint64_t seed);

struct SplitPlan {
  std::size_t folds = 0;
  std::vector<std::size_t> fold_of;  // per sample position in the dataset

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Stratified k-fold assignment: per-class fold counts differ by at most one.
SplitPlan kfold_split(const Dataset& data, std::size_t classes, std::size_t k, std::uint64_t seed);

std::vector<std::size_t> class_counts(const Dataset& data, std::size_t classes);

/// Writes img_<id>.pmt files plus manifest.tsv (id, label, provenance, fold).
void save_dataset(const std::filesystem::path& dir, const Dataset& data,
                  const std::optional<SplitPlan>& plan);

struct LoadedDataset {
  Dataset data;
  std::optional<SplitPlan> plan;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace pmp
