#include "pmp/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pmp/errors.hpp"

namespace pmp {

namespace {

using nlohmann::json;

void flatten(const json& node, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else if (!out.emplace(key, *it).second) {
      throw ConfigError("config: key '" + key + "' given twice");
    }
  }
}

std::size_t as_size(const std::string& key, const json& v) {
  if (!v.is_number_unsigned()) throw ConfigError("config: " + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) throw ConfigError("config: " + key + " must be a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) throw ConfigError("config: " + key + " must be true or false");
  return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) throw ConfigError("config: " + key + " must be a string");
  return v.get<std::string>();
}

std::array<double, 3> as_triple(const std::string& key, const json& v) {
  if (!v.is_array() || v.size() != 3) throw ConfigError("config: " + key + " must be an array of 3 numbers");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = as_double(key, v[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = as_size(k, v); }},
      {"output_dir", [](auto& c, auto& k, auto& v) { c.output_dir = as_string(k, v); }},
      {"backbone.side", [](auto& c, auto& k, auto& v) { c.model.backbone.side = as_size(k, v); }},
      {"backbone.base_channels",
       [](auto& c, auto& k, auto& v) { c.model.backbone.base_channels = as_size(k, v); }},
      {"backbone.window", [](auto& c, auto& k, auto& v) { c.model.backbone.window = as_size(k, v); }},
      {"backbone.blocks_per_stage",
       [](auto& c, auto& k, auto& v) { c.model.backbone.blocks_per_stage = as_size(k, v); }},
      {"backbone.heads", [](auto& c, auto& k, auto& v) { c.model.backbone.heads = as_size(k, v); }},
      {"backbone.mlp_ratio", [](auto& c, auto& k, auto& v) { c.model.backbone.mlp_ratio = as_size(k, v); }},
      {"backbone.pixel_mean",
       [](auto& c, auto& k, auto& v) { c.model.backbone.pixel_mean = as_triple(k, v); }},
      {"backbone.pixel_std", [](auto& c, auto& k, auto& v) { c.model.backbone.pixel_std = as_triple(k, v); }},
      {"small.patch_size", [](auto& c, auto& k, auto& v) { c.model.head.small.patch_size = as_size(k, v); }},
      {"small.k", [](auto& c, auto& k, auto& v) { c.model.head.small.k = as_size(k, v); }},
      {"small.n", [](auto& c, auto& k, auto& v) { c.model.head.small.n_modules = as_size(k, v); }},
      {"large.patch_size", [](auto& c, auto& k, auto& v) { c.model.head.large.patch_size = as_size(k, v); }},
      {"large.k", [](auto& c, auto& k, auto& v) { c.model.head.large.k = as_size(k, v); }},
      {"large.n", [](auto& c, auto& k, auto& v) { c.model.head.large.n_modules = as_size(k, v); }},
      {"head.variant",
       [](auto& c, auto& k, auto& v) { c.model.head.variant = parse_head_variant(as_string(k, v)); }},
      {"head.num_classes", [](auto& c, auto& k, auto& v) { c.model.head.num_classes = as_size(k, v); }},
      {"head.width", [](auto& c, auto& k, auto& v) { c.model.head.branch_width = as_size(k, v); }},
      {"head.dropout",
       [](auto& c, auto& k, auto& v) { c.model.head.dropout_rate = static_cast<float>(as_double(k, v)); }},
      {"head.leaky_slope",
       [](auto& c, auto& k, auto& v) { c.model.head.leaky_slope = static_cast<float>(as_double(k, v)); }},
      {"head.graph",
       [](auto& c, auto& k, auto& v) {
         const std::string s = as_string(k, v);
         if (s == "dynamic") {
           c.model.head.graph_mode = GraphMode::dynamic;
         } else if (s == "fixed") {
           c.model.head.graph_mode = GraphMode::fixed;
         } else {
           throw ConfigError("config: head.graph must be 'dynamic' or 'fixed', got '" + s + "'");
         }
       }},
      // h(p_i, p_j - p_i) reads the concatenation [p_i, p_j - p_i]; no other form is implemented.
      {"head.edge_input",
       [](auto&, auto& k, auto& v) {
         const std::string s = as_string(k, v);
         if (s != "concat") throw ConfigError("config: head.edge_input supports only 'concat', got '" + s + "'");
       }},
      {"train.epochs", [](auto& c, auto& k, auto& v) { c.train.epochs = as_size(k, v); }},
      {"train.batch_size", [](auto& c, auto& k, auto& v) { c.train.batch_size = as_size(k, v); }},
      {"train.lr_max", [](auto& c, auto& k, auto& v) { c.train.lr_max = as_double(k, v); }},
      {"train.lr_min", [](auto& c, auto& k, auto& v) { c.train.lr_min = as_double(k, v); }},
      {"train.seed",
       [](auto& c, auto& k, auto& v) {
         c.train.seed = as_size(k, v);
         c.train_seed_set = true;
       }},
      {"train.folds", [](auto& c, auto& k, auto& v) { c.train.folds = as_size(k, v); }},
      {"train.augment", [](auto& c, auto& k, auto& v) { c.train.augment = as_bool(k, v); }},
      {"train.val_fraction", [](auto& c, auto& k, auto& v) { c.train.val_fraction = as_double(k, v); }},
      {"data.path", [](auto& c, auto& k, auto& v) { c.data.path = as_string(k, v); }},
      {"data.per_class", [](auto& c, auto& k, auto& v) { c.data.per_class = as_size(k, v); }},
      {"data.counts",
       [](auto& c, auto& k, auto& v) {
         if (!v.is_array()) throw ConfigError("config: " + k + " must be an array of integers");
         c.data.counts.clear();
         for (const auto& e : v) c.data.counts.push_back(as_size(k, e));
       }},
      {"data.noise", [](auto& c, auto& k, auto& v) { c.data.noise = as_double(k, v); }},
      {"data.seed", [](auto& c, auto& k, auto& v) { c.data.seed = as_size(k, v); }},
      {"data.balance_target", [](auto& c, auto& k, auto& v) { c.data.balance_target = as_size(k, v); }},
      {"cam.upsample", [](auto& c, auto& k, auto& v) { c.cam.upsample = as_bool(k, v); }},
      {"cam.images", [](auto& c, auto& k, auto& v) { c.cam.images = as_size(k, v); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  std::map<std::string, json> flat;
  flatten(doc, "", flat);

  ExperimentConfig config;
  // The feature-map width follows the backbone unless overridden below.
  bool channels_set = false;
  for (const auto& [key, value] : flat) {
    if (key == "head.channels") {
      config.model.head.channels = as_size(key, value);
      channels_set = true;
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(config, key, value);
  }
  if (!channels_set) config.model.head.channels = config.model.backbone.output_channels();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& config) {
  validate_model(config.model);
  const TrainConfig& t = config.train;
  if (t.epochs == 0) throw ConfigError("config: train.epochs must be positive");
  if (t.batch_size == 0) throw ConfigError("config: train.batch_size must be positive");
  if (!(t.lr_min >= 0 && t.lr_min <= t.lr_max)) {
    throw ConfigError("config: need 0 <= train.lr_min <= train.lr_max");
  }
  if (t.folds < 2) throw ConfigError("config: train.folds must be at least 2");
  if (!(t.val_fraction >= 0 && t.val_fraction < 1)) {
    throw ConfigError("config: train.val_fraction must lie in [0, 1)");
  }
  const HeadConfig& h = config.model.head;
  if (!(h.dropout_rate >= 0 && h.dropout_rate < 1)) throw ConfigError("config: head.dropout must lie in [0, 1)");
  if (!(h.leaky_slope >= 0 && h.leaky_slope < 1)) {
    throw ConfigError("config: head.leaky_slope must lie in [0, 1)");
  }
  if (config.data.noise < 0) throw ConfigError("config: data.noise must be non-negative");
  if (config.data.path.empty()) {
    const std::size_t classes = config.data.counts.empty() ? h.num_classes : config.data.counts.size();
    if (classes != h.num_classes) {
      throw ConfigError("config: data.counts lists " + std::to_string(classes) +
                        " classes but head.num_classes is " + std::to_string(h.num_classes));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t n = config.data.counts.empty() ? config.data.per_class : config.data.counts[c];
      const std::size_t effective = config.data.balance_target ? config.data.balance_target : n;
      if (n == 0 || effective < t.folds) {
        throw ConfigError("config: class " + std::to_string(c) + " has " + std::to_string(effective) +
                          " samples, fewer than train.folds = " + std::to_string(t.folds));
      }
    }
  }
}

}  // namespace pmp
