#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pmp {

/// C x C counts indexed [true][predicted].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0);
  ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts);

  std::size_t classes() const { return classes_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t column_sum(std::size_t predicted) const;
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct ClassScores {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double precision_macro = 0;
  double recall_macro = 0;
  double f1_macro = 0;
};

double accuracy(const ConfusionMatrix& cm);
/// Per-class and macro-averaged scores; 0/0 evaluates to 0.
ClassScores precision_recall_f1(const ConfusionMatrix& cm);
double expected_agreement(const ConfusionMatrix& cm);
/// Cohen's kappa. Throws UndefinedMetricError when expected agreement is 1.
double kappa(const ConfusionMatrix& cm);

struct MetricsRow {
  std::string fold;
  double accuracy = 0;
  double precision_macro = 0;
  double recall_macro = 0;
  double f1_macro = 0;
  double kappa = 0;
};

MetricsRow summarize(const std::string& fold, const ConfusionMatrix& cm);

/// Per-fold rows followed by `mean` and `std` (sample standard deviation).
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& folds);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);

}  // namespace pmp
