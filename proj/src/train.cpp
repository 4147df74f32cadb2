#include "pmp/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "pmp/errors.hpp"
#include "pmp/parallel.hpp"
#include "pmp/random.hpp"
#include "pmp/tensor_io.hpp"

namespace pmp {

namespace {

constexpr std::uint64_t kForwardTag = 0x66776400;
constexpr std::uint64_t kFlipTag = 0x666c6970;

Tensor flip_image(const Tensor& image, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return image;
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::vector<Real> out(image.numel());
  const auto& in = image.values();
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t sr = vertical ? h - 1 - r : r;
    for (std::size_t col = 0; col < w; ++col) {
      const std::size_t sc = horizontal ? w - 1 - col : col;
      for (std::size_t ch = 0; ch < c; ++ch) out[(r * w + col) * c + ch] = in[(sr * w + sc) * c + ch];
    }
  }
  return Tensor(image.shape(), std::move(out));
}

std::size_t argmax(std::span<const Real> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Model frozen(const Model& model) {
  Model copy = model;
  for (auto& p : copy.parameters()) *p.tensor = p.tensor->leaf_copy(false);
  return copy;
}

}  // namespace

AdamState make_adam_state(const ParameterRefs& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor->numel(), 0.0f);
    s.v.emplace_back(p.tensor->numel(), 0.0f);
  }
  return s;
}

void adam_step(const ParameterRefs& params, std::span<const std::vector<float>> grads,
               AdamState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  if (!(lr >= 0)) throw ParameterError("adam_step: learning rate must be non-negative");
  ++state.step;
  const double b1 = state.config.beta1, b2 = state.config.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].tensor->mutable_values();
    const auto& g = grads[p];
    if (g.size() != values.size() || state.m[p].size() != values.size()) {
      throw DimensionError("adam_step: size mismatch for " + params[p].name);
    }
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(b1 * m[i] + (1 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1 - b2) * gi * gi);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] = static_cast<float>(values[i] - lr * mhat / (std::sqrt(vhat) + state.config.eps));
    }
  }
}

double cosine_lr(std::size_t epoch, const CosineSchedule& schedule) {
  if (schedule.epochs == 0) throw ConfigError("cosine_lr: epochs must be positive");
  if (epoch > schedule.epochs) {
    throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) + " beyond schedule of " +
                      std::to_string(schedule.epochs));
  }
  const double t = static_cast<double>(epoch) / static_cast<double>(schedule.epochs);
  return schedule.lr_min +
         (schedule.lr_max - schedule.lr_min) * (1 + std::cos(std::numbers::pi * t)) / 2;
}

EpochResult train_epoch(Model& model, const Dataset& data, std::span<const std::size_t> indices,
                        std::size_t batch_size, AdamState& state, double lr, std::uint64_t seed,
                        bool augment) {
  if (batch_size == 0) throw ConfigError("train_epoch: batch size must be positive");
  if (indices.empty()) throw UsageError("train_epoch: empty split");
  for (std::size_t i : indices) {
    if (i >= data.size()) throw IndexError("train_epoch: sample index out of range");
  }
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  ParameterRefs params = model.parameters();
  if (state.m.empty()) state = make_adam_state(params, state.config);
  const std::size_t workers = worker_count();

  EpochResult result;
  double loss_sum = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    std::vector<std::vector<std::vector<float>>> sample_grads(count);
    std::vector<double> losses(count);
    const Real inv = Real(1) / static_cast<Real>(count);

    parallel_for(count, workers, [&](std::size_t j) {
      const std::size_t pos = start + j;
      const Sample& sample = data[order[pos]];
      Tensor image = sample.image;
      if (augment) {
        const double u = counter_uniform(derive_seed(seed, kFlipTag), pos);
        const int mode = static_cast<int>(u * 4);
        image = flip_image(image, mode & 1, mode & 2);
      }
      Model local = model.bind();
      const ModelOutputs out = local.forward(image, true, derive_seed(derive_seed(seed, kForwardTag), pos));
      const Tensor loss = model_loss(out, sample.label);
      losses[j] = loss.item();
      scale(loss, inv).backward();
      auto& g = sample_grads[j];
      for (const auto& p : local.parameters()) {
        if (p.tensor->has_grad()) {
          const auto gr = p.tensor->grad();
          g.emplace_back(gr.begin(), gr.end());
        } else {
          g.emplace_back(p.tensor->numel(), 0.0f);
        }
      }
    });

    // Summed in sample order so the update does not depend on worker count.
    std::vector<std::vector<float>> grads = std::move(sample_grads[0]);
    for (std::size_t j = 1; j < count; ++j) {
      for (std::size_t p = 0; p < grads.size(); ++p) {
        auto& dst = grads[p];
        const auto& src = sample_grads[j][p];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    adam_step(params, grads, state, lr);
    for (double l : losses) loss_sum += l;
    ++result.steps;
  }
  result.mean_loss = order.empty() ? 0 : loss_sum / static_cast<double>(order.size());
  return result;
}

EvalResult evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("evaluate: empty split");
  const Model fixed = frozen(model);
  const std::size_t classes = model.config().head.num_classes;
  std::vector<std::size_t> preds(indices.size());
  std::vector<double> losses(indices.size());
  parallel_for(indices.size(), worker_count(), [&](std::size_t j) {
    const Sample& sample = data.at(indices[j]);
    const ModelOutputs out = fixed.forward(sample.image, false, 0);
    preds[j] = argmax(out.head.fused.values());
    losses[j] = model_loss(out, sample.label).item();
  });
  EvalResult r{ConfusionMatrix(classes), 0, preds};
  for (std::size_t j = 0; j < indices.size(); ++j) {
    r.confusion.add(data[indices[j]].label, preds[j]);
    r.mean_loss += losses[j];
  }
  if (!indices.empty()) r.mean_loss /= static_cast<double>(indices.size());
  return r;
}

std::vector<std::vector<float>> snapshot(Model& model) {
  std::vector<std::vector<float>> out;
  for (const auto& p : model.parameters()) {
    const auto v = p.tensor->values();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

void restore(Model& model, const std::vector<std::vector<float>>& values) {
  ParameterRefs params = model.parameters();
  if (params.size() != values.size()) throw DimensionError("restore: parameter count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto dst = params[p].tensor->mutable_values();
    if (dst.size() != values[p].size()) throw DimensionError("restore: size mismatch for " + params[p].name);
    std::copy(values[p].begin(), values[p].end(), dst.begin());
  }
}

TrainOutcome train_model(Model& model, const Dataset& data, std::span<const std::size_t> train,
                         std::span<const std::size_t> validation, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  if (config.epochs == 0) throw ConfigError("train: epochs must be positive");
  AdamState state = make_adam_state(model.parameters());
  const CosineSchedule schedule{config.lr_max, config.lr_min, config.epochs};
  TrainOutcome outcome;
  double best_acc = -1;
  std::vector<std::vector<float>> best;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochLog log;
    log.epoch = e;
    log.lr = cosine_lr(e, schedule);
    log.train_loss = train_epoch(model, data, train, config.batch_size, state, log.lr,
                                 derive_seed(config.seed, e), config.augment)
                         .mean_loss;
    if (!validation.empty()) {
      const double acc = accuracy(evaluate(model, data, validation).confusion);
      log.val_accuracy = acc;
      if (acc > best_acc) {
        best_acc = acc;
        best = snapshot(model);
        outcome.best_epoch = e;
      }
    }
    outcome.log.push_back(log);
    if (on_epoch) on_epoch(log, model, state);
  }
  if (!best.empty()) restore(model, best);
  outcome.optimizer = std::move(state);
  return outcome;
}

void save_checkpoint(const std::filesystem::path& dir, Model& model, const AdamState* adam) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".tmp";
  const fs::path old = dir.string() + ".old";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  std::ostringstream manifest;
  manifest << "kind\tname\tfile\n";
  const ParameterRefs params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string file = "param_" + std::to_string(p) + ".pmt";
    save_tensor(tmp / file, *params[p].tensor);
    manifest << "param\t" << params[p].name << '\t' << file << '\n';
    if (adam) {
      const Shape& shape = params[p].tensor->shape();
      save_tensor(tmp / ("adam_m_" + std::to_string(p) + ".pmt"), Tensor(shape, adam->m.at(p)));
      save_tensor(tmp / ("adam_v_" + std::to_string(p) + ".pmt"), Tensor(shape, adam->v.at(p)));
    }
  }
  if (adam) manifest << "adam_step\t" << adam->step << "\t-\n";
  {
    std::ofstream out(tmp / "checkpoint.tsv");
    out << manifest.str();
    if (!out) throw Error("checkpoint: cannot write " + (tmp / "checkpoint.tsv").string());
  }
  // The previous checkpoint stays on disk until the new one is complete.
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

void load_checkpoint(const std::filesystem::path& dir, Model& model, AdamState* adam) {
  std::ifstream in(dir / "checkpoint.tsv");
  if (!in) throw ParseError("checkpoint: cannot open " + (dir / "checkpoint.tsv").string());
  ParameterRefs params = model.parameters();
  std::string line;
  std::getline(in, line);
  std::size_t index = 0;
  std::optional<std::uint64_t> step;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string kind, name, file;
    std::getline(row, kind, '\t');
    std::getline(row, name, '\t');
    std::getline(row, file, '\t');
    if (kind == "adam_step") {
      step = std::stoull(name);
      continue;
    }
    if (kind != "param") throw ParseError("checkpoint: unknown entry '" + kind + "'");
    if (index >= params.size() || params[index].name != name) {
      throw ParseError("checkpoint: parameter '" + name + "' does not match the model layout");
    }
    const Tensor t = load_tensor(dir / file);
    if (t.shape() != params[index].tensor->shape()) {
      throw ParseError("checkpoint: shape mismatch for " + name + ": " + shape_string(t.shape()) +
                       " vs " + shape_string(params[index].tensor->shape()));
    }
    auto dst = params[index].tensor->mutable_values();
    std::copy(t.values().begin(), t.values().end(), dst.begin());
    ++index;
  }
  if (index != params.size()) {
    throw ParseError("checkpoint: " + std::to_string(index) + " parameters stored, model has " +
                     std::to_string(params.size()));
  }
  if (adam) {
    if (!step) throw ParseError("checkpoint: no optimizer state stored");
    *adam = make_adam_state(params, adam->config);
    adam->step = *step;
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Tensor m = load_tensor(dir / ("adam_m_" + std::to_string(p) + ".pmt"));
      const Tensor v = load_tensor(dir / ("adam_v_" + std::to_string(p) + ".pmt"));
      adam->m[p].assign(m.values().begin(), m.values().end());
      adam->v[p].assign(v.values().begin(), v.values().end());
    }
  }
}

}  // namespace pmp
