#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "har/error.hpp"
#include "har/tensor.hpp"

namespace har {

/// Integer count matrix; rows index the true class, columns the prediction.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<long long> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n)
      : n_classes(n), counts(static_cast<std::size_t>(n) * n, 0) {
    if (n < 1) throw ContractError("ConfusionMatrix: need at least one class");
  }

  long long& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * n_classes + pred];
  }
  long long at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * n_classes + pred];
  }
  long long total() const {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
  }
  long long row_sum(int truth) const {
    long long t = 0;
    for (int p = 0; p < n_classes; ++p) t += at(truth, p);
    return t;
  }
  long long col_sum(int pred) const {
    long long t = 0;
    for (int r = 0; r < n_classes; ++r) t += at(r, pred);
    return t;
  }
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  ConfusionMatrix confusion;
  long long n_windows = 0;
};

/// Cross-fold aggregate. Pooled numbers come from the element-wise sum of
/// fold confusions; mean/std are population statistics over fold metrics.
struct CvAggregate {
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_macro_f1 = 0.0, std_macro_f1 = 0.0;
  ConfusionMatrix pooled;
  MetricsReport pooled_metrics;
};

/// Lowest-index argmax of one logits row.
int argmax_row(const Tensor& logits, int row);

ConfusionMatrix confusion(const std::vector<int>& predictions,
                          const std::vector<int>& labels, int n_classes);

/// Accuracy, precision/recall/F1 per class (0/0 -> 0) and macro F1 averaged
/// over all classes, absent ones included.
MetricsReport metrics(const ConfusionMatrix& cm);

CvAggregate aggregate_cv(const std::vector<MetricsReport>& fold_reports);

/// Self-contained SVG heatmap (row-normalized colors, count annotations,
/// axis labels) plus the raw matrix as CSV next to it.
void render_confusion(const ConfusionMatrix& cm,
                      const std::vector<std::string>& class_names,
                      const std::filesystem::path& svg_path);

/// Reads a matrix written by render_confusion's CSV side file.
ConfusionMatrix read_confusion_csv(const std::filesystem::path& csv_path);

}  // namespace har
