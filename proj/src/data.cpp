#include "pmp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "pmp/errors.hpp"
#include "pmp/parallel.hpp"
#include "pmp/random.hpp"
#include "pmp/tensor_io.hpp"

namespace pmp {

namespace {

constexpr std::array<double, 3> kBackground{0.55, 0.27, 0.14};

std::string sample_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(index));
  return buf;
}

Lesion place_lesion(const SyntheticSpec& spec, const LesionClass& cls, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = static_cast<double>(spec.side);
  const double r = cls.radius_min + (cls.radius_max - cls.radius_min) * unit(rng);
  const double margin = r + 1.0;
  const double c = side / 2.0;
  Lesion l{c, c, r};
  switch (cls.placement) {
    case Placement::global:
      l.row = margin + (side - 2 * margin) * unit(rng);
      l.col = margin + (side - 2 * margin) * unit(rng);
      break;
    case Placement::center:
    case Placement::periphery: {
      const bool centre = cls.placement == Placement::center;
      const double lo = centre ? 0.0 : 0.28 * side;
      const double hi = std::min(centre ? 0.22 * side : 0.45 * side, c - margin);
      const double rad = lo + (std::max(hi, lo) - lo) * std::sqrt(unit(rng));
      const double ang = 2.0 * std::numbers::pi * unit(rng);
      l.row = std::clamp(c + rad * std::sin(ang), margin, side - margin);
      l.col = std::clamp(c + rad * std::cos(ang), margin, side - margin);
      break;
    }
  }
  return l;
}

double lesion_alpha(const Lesion& l, IntensityProfile profile, double row, double col) {
  const double d = std::hypot(row - l.row, col - l.col);
  if (profile == IntensityProfile::gaussian) {
    const double s = l.radius / 1.5;
    return d > 3 * s ? 0.0 : std::exp(-d * d / (2 * s * s));
  }
  return std::clamp(l.radius + 0.5 - d, 0.0, 1.0);
}

std::vector<std::size_t> shuffled(std::vector<std::size_t> v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

}  // namespace

SyntheticSpec SyntheticSpec::multiscale_lesions(std::size_t side, double noise, std::uint64_t seed) {
  const double u = static_cast<double>(side) / 128.0;
  SyntheticSpec spec;
  spec.side = side;
  spec.noise = noise;
  spec.seed = seed;
  LesionClass normal{"normal", 0, 0, 1, 1};
  LesionClass scattered{"scattered", 6, 10, 1.8 * u, 3.2 * u};
  scattered.placement = Placement::global;
  LesionClass large{"large", 1, 1, 11 * u, 16 * u};
  large.placement = Placement::global;
  LesionClass central{"central", 2, 4, 4.5 * u, 7 * u};
  central.placement = Placement::center;
  central.color = {0.35, 0.04, 0.04};
  spec.classes = {normal, scattered, large, central};
  return spec;
}

void validate_spec(const SyntheticSpec& spec) {
  if (spec.side < 8) throw ConfigError("synthetic spec: side too small");
  if (spec.classes.size() < 2) throw ConfigError("synthetic spec: need at least two classes");
  if (spec.noise < 0) throw ConfigError("synthetic spec: negative noise level");
  for (const auto& c : spec.classes) {
    if (c.radius_min <= 0 || c.radius_max < c.radius_min ||
        2 * (c.radius_max + 1) >= static_cast<double>(spec.side)) {
      throw ConfigError("synthetic spec: class '" + c.name + "' has an invalid radius range");
    }
    if (c.count_max < c.count_min) {
      throw ConfigError("synthetic spec: class '" + c.name + "' has count_max < count_min");
    }
  }
  for (std::size_t i = 0; i < spec.classes.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.classes.size(); ++j) {
      const auto& a = spec.classes[i];
      const auto& b = spec.classes[j];
      if (a.count_min == b.count_min && a.count_max == b.count_max &&
          a.radius_min == b.radius_min && a.radius_max == b.radius_max &&
          a.placement == b.placement && a.profile == b.profile && a.color == b.color) {
        throw ConfigError("synthetic spec: classes '" + a.name + "' and '" + b.name +
                          "' are indistinguishable");
      }
    }
  }
}

Sample generate_sample(const SyntheticSpec& spec, std::size_t label, std::uint64_t index) {
  if (label >= spec.classes.size()) throw IndexError("generate_sample: label out of range");
  const LesionClass& cls = spec.classes[label];
  std::mt19937_64 rng(derive_seed(spec.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Sample s;
  s.id = sample_id(index);
  s.label = label;
  s.provenance = "generated";
  const std::size_t count =
      cls.count_min + static_cast<std::size_t>(unit(rng) * static_cast<double>(cls.count_max - cls.count_min + 1));
  for (std::size_t i = 0; i < std::min(count, cls.count_max); ++i)
    s.lesions.push_back(place_lesion(spec, cls, rng));

  // Smooth illumination gradient plus a radial falloff.
  const double gx = 0.15 * (unit(rng) - 0.5), gy = 0.15 * (unit(rng) - 0.5);
  const double brightness = 0.85 + 0.3 * unit(rng);
  const std::size_t n = spec.side;
  const double half = static_cast<double>(n) / 2.0;
  std::vector<float> px(n * n * 3);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double y = (static_cast<double>(r) - half) / half;
      const double x = (static_cast<double>(c) - half) / half;
      const double light = brightness * (1.0 - 0.25 * (x * x + y * y)) + gx * x + gy * y;
      std::array<double, 3> rgb{};
      for (int ch = 0; ch < 3; ++ch) rgb[ch] = kBackground[ch] * light;
      for (const Lesion& l : s.lesions) {
        const double a = cls.opacity * lesion_alpha(l, cls.profile, static_cast<double>(r),
                                                    static_cast<double>(c));
        if (a <= 0) continue;
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = (1 - a) * rgb[ch] + a * cls.color[ch] * light;
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double v = rgb[ch] + spec.noise * gauss(rng);
        px[(r * n + c) * 3 + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  s.image = Tensor({n, n, 3}, std::move(px));
  return s;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::span<const std::size_t> counts) {
  validate_spec(spec);
  if (counts.size() != spec.classes.size()) {
    throw ConfigError("generate_synthetic: " + std::to_string(counts.size()) + " counts for " +
                      std::to_string(spec.classes.size()) + " classes");
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw ConfigError("generate_synthetic: at least two classes need samples");
  }
  Dataset data;
  std::vector<std::size_t> labels;
  for (std::size_t label = 0; label < counts.size(); ++label) labels.insert(labels.end(), counts[label], label);
  data.resize(labels.size());
  parallel_for(labels.size(), worker_count(),
               [&](std::size_t i) { data[i] = generate_sample(spec, labels[i], i); });
  return data;
}

FlipMode parse_flip_mode(const std::string& s) {
  if (s == "none") return FlipMode::none;
  if (s == "hflip") return FlipMode::hflip;
  if (s == "vflip") return FlipMode::vflip;
  throw ConfigError("unknown augmentation mode '" + s + "' (expected hflip, vflip or none)");
}

std::string to_string(FlipMode m) {
  switch (m) {
    case FlipMode::none: return "none";
    case FlipMode::hflip: return "hflip";
    case FlipMode::vflip: return "vflip";
  }
  return "none";
}

Sample augment(const Sample& sample, FlipMode mode, std::uint64_t /*seed*/) {
  Sample out = sample;
  if (mode == FlipMode::none) {
    out.image = sample.image.detached();
    return out;
  }
  const std::size_t h = sample.image.dim(0), w = sample.image.dim(1), ch = sample.image.dim(2);
  const auto src = sample.image.values();
  std::vector<float> dst(src.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t sr = mode == FlipMode::vflip ? h - 1 - r : r;
      const std::size_t sc = mode == FlipMode::hflip ? w - 1 - c : c;
      std::copy_n(src.data() + (sr * w + sc) * ch, ch, dst.data() + (r * w + c) * ch);
    }
  }
  out.image = Tensor(sample.image.shape(), std::move(dst));
  for (Lesion& l : out.lesions) {
    if (mode == FlipMode::hflip) l.col = static_cast<double>(w - 1) - l.col;
    if (mode == FlipMode::vflip) l.row = static_cast<double>(h - 1) - l.row;
  }
  return out;
}

std::vector<std::size_t> class_counts(const Dataset& data, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : data) {
    if (s.label >= classes) throw IndexError("sample " + s.id + " has label out of range");
    ++counts[s.label];
  }
  return counts;
}

Dataset balance_resample(const Dataset& data, std::size_t classes, std::size_t target,
                         std::uint64_t seed) {
  if (target == 0) throw ConfigError("balance_resample: target must be positive");
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label >= classes) throw IndexError("sample " + data[i].id + " has label out of range");
    members[data[i].label].push_back(i);
  }
  Dataset out;
  out.reserve(classes * target);
  constexpr std::array<FlipMode, 2> kModes{FlipMode::hflip, FlipMode::vflip};
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& m = members[c];
    if (m.empty()) throw ConfigError("balance_resample: class " + std::to_string(c) + " is empty");
    const auto order = shuffled(m, derive_seed(seed, c));
    if (m.size() >= target) {
      std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target));
      std::sort(keep.begin(), keep.end());
      for (std::size_t i : keep) out.push_back(data[i]);
      continue;
    }
    for (std::size_t i : m) out.push_back(data[i]);
    for (std::size_t j = 0; j < target - m.size(); ++j) {
      const Sample& src = data[order[j % m.size()]];
      const FlipMode mode = kModes[(j / m.size()) % kModes.size()];
      Sample aug = augment(src, mode);
      aug.id = src.id + "_a" + std::to_string(j);
      aug.provenance = "augmented:" + src.id + ":" + to_string(mode);
      out.push_back(std::move(aug));
    }
  }
  return out;
}

std::vector<std::size_t> SplitPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> SplitPlan::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

SplitPlan kfold_split(const Dataset& data, std::size_t classes, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: need k >= 2");
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label >= classes) throw IndexError("sample " + data[i].id + " has label out of range");
    members[data[i].label].push_back(i);
  }
  SplitPlan plan{k, std::vector<std::size_t>(data.size(), 0)};
  std::size_t offset = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (members[c].empty()) continue;
    if (members[c].size() < k) {
      throw ConfigError("kfold_split: class " + std::to_string(c) + " has " +
                        std::to_string(members[c].size()) + " samples, fewer than k=" +
                        std::to_string(k));
    }
    const auto order = shuffled(members[c], derive_seed(seed, c));
    for (std::size_t j = 0; j < order.size(); ++j) plan.fold_of[order[j]] = (offset + j) % k;
    offset = (offset + order.size()) % k;
  }
  return plan;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data,
                  const std::optional<SplitPlan>& plan) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw Error("cannot write " + (dir / "manifest.tsv").string());
  manifest << "id\tlabel\tprovenance\tfold\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data[i];
    save_tensor(dir / ("img_" + s.id + ".pmt"), s.image);
    manifest << s.id << '\t' << s.label << '\t' << s.provenance << '\t';
    if (plan) {
      manifest << plan->fold_of[i];
    } else {
      manifest << '-';
    }
    manifest << '\n';
  }
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw ParseError("cannot open " + (dir / "manifest.tsv").string());
  std::string line;
  if (!std::getline(manifest, line) || line != "id\tlabel\tprovenance\tfold") {
    throw ParseError("manifest.tsv: unexpected header");
  }
  LoadedDataset out;
  std::vector<std::size_t> folds;
  bool has_folds = true;
  std::size_t max_fold = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, label, provenance, fold;
    if (!std::getline(row, id, '\t') || !std::getline(row, label, '\t') ||
        !std::getline(row, provenance, '\t') || !std::getline(row, fold)) {
      throw ParseError("manifest.tsv: malformed row '" + line + "'");
    }
    Sample s;
    s.id = id;
    s.label = std::stoul(label);
    s.provenance = provenance;
    s.image = load_tensor(dir / ("img_" + id + ".pmt"));
    out.data.push_back(std::move(s));
    if (fold == "-") {
      has_folds = false;
    } else {
      folds.push_back(std::stoul(fold));
      max_fold = std::max(max_fold, folds.back());
    }
  }
  if (has_folds && !out.data.empty()) out.plan = SplitPlan{max_fold + 1, std::move(folds)};
  return out;
}

}  // namespace pmp
