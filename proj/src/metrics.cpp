#include "pmp/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pmp/errors.hpp"

namespace pmp {

namespace {

double safe_ratio(double num, double den) { return den == 0 ? 0.0 : num / den; }

void require_samples(const ConfusionMatrix& cm, const char* metric) {
  if (cm.total() == 0) throw UndefinedMetricError(std::string(metric) + ": empty confusion matrix");
}

std::string format_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f", r.fold.c_str(), r.accuracy,
                r.precision_macro, r.recall_macro, r.f1_macro, r.kappa);
  return buf;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
  if (counts_.size() != classes_ * classes_) {
    throw DimensionError("confusion matrix needs " + std::to_string(classes_ * classes_) +
                         " counts, got " + std::to_string(counts_.size()));
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= classes_ || predicted >= classes_) {
    throw IndexError("confusion matrix: class index out of range");
  }
  counts_[truth * classes_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += (*this)(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_; ++j) s += (*this)(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_; ++i) s += (*this)(i, predicted);
  return s;
}

double accuracy(const ConfusionMatrix& cm) {
  require_samples(cm, "accuracy");
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

ClassScores precision_recall_f1(const ConfusionMatrix& cm) {
  require_samples(cm, "precision_recall_f1");
  const std::size_t c = cm.classes();
  ClassScores s;
  s.precision.resize(c);
  s.recall.resize(c);
  s.f1.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double tp = static_cast<double>(cm(i, i));
    s.precision[i] = safe_ratio(tp, static_cast<double>(cm.column_sum(i)));
    s.recall[i] = safe_ratio(tp, static_cast<double>(cm.row_sum(i)));
    s.f1[i] = safe_ratio(2.0 * s.precision[i] * s.recall[i], s.precision[i] + s.recall[i]);
    s.precision_macro += s.precision[i];
    s.recall_macro += s.recall[i];
    s.f1_macro += s.f1[i];
  }
  s.precision_macro /= static_cast<double>(c);
  s.recall_macro /= static_cast<double>(c);
  s.f1_macro /= static_cast<double>(c);
  return s;
}

double expected_agreement(const ConfusionMatrix& cm) {
  require_samples(cm, "kappa");
  const double n = static_cast<double>(cm.total());
  double pe = 0;
  for (std::size_t i = 0; i < cm.classes(); ++i)
    pe += static_cast<double>(cm.row_sum(i)) * static_cast<double>(cm.column_sum(i));
  return pe / (n * n);
}

double kappa(const ConfusionMatrix& cm) {
  const double pe = expected_agreement(cm);
  if (pe >= 1.0) {
    throw UndefinedMetricError("kappa: expected agreement is 1 (all mass on one class pair)");
  }
  return (accuracy(cm) - pe) / (1.0 - pe);
}

MetricsRow summarize(const std::string& fold, const ConfusionMatrix& cm) {
  const ClassScores s = precision_recall_f1(cm);
  MetricsRow r;
  r.fold = fold;
  r.accuracy = accuracy(cm);
  r.precision_macro = s.precision_macro;
  r.recall_macro = s.recall_macro;
  r.f1_macro = s.f1_macro;
  // A fold whose predictions and labels all sit in one class has no defined
  // kappa; report 0 rather than aborting the whole report.
  try {
    r.kappa = kappa(cm);
  } catch (const UndefinedMetricError&) {
    r.kappa = 0;
  }
  return r;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& folds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << "fold,accuracy,precision_macro,recall_macro,f1_macro,kappa\n";
  for (const auto& r : folds) os << format_row(r) << '\n';

  MetricsRow mean{"mean"}, sd{"std"};
  const double n = static_cast<double>(folds.size());
  auto field = [](MetricsRow& r, int i) -> double& {
    switch (i) {
      case 0: return r.accuracy;
      case 1: return r.precision_macro;
      case 2: return r.recall_macro;
      case 3: return r.f1_macro;
      default: return r.kappa;
    }
  };
  for (int i = 0; i < 5; ++i) {
    double m = 0;
    for (auto r : folds) m += field(r, i);
    m = folds.empty() ? 0 : m / n;
    double v = 0;
    for (auto r : folds) v += (field(r, i) - m) * (field(r, i) - m);
    field(mean, i) = m;
    field(sd, i) = folds.size() > 1 ? std::sqrt(v / (n - 1)) : 0.0;
  }
  os << format_row(mean) << '\n' << format_row(sd) << '\n';
  if (!os) throw Error("failed writing " + path.string());
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    for (std::size_t j = 0; j < cm.classes(); ++j) os << (j ? "," : "") << cm(i, j);
    os << '\n';
  }
}

}  // namespace pmp
