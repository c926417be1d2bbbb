#include "har/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace har {

int argmax_row(const Tensor& logits, int row) {
  int best = 0;
  for (int j = 1; j < logits.cols(); ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return best;
}

ConfusionMatrix confusion(const std::vector<int>& predictions,
                          const std::vector<int>& labels, int n_classes) {
  if (predictions.size() != labels.size())
    throw ContractError("confusion: predictions and labels differ in length");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw LabelError("confusion: label " + std::to_string(labels[i]) + " out of range");
    if (predictions[i] < 0 || predictions[i] >= n_classes)
      throw LabelError("confusion: prediction " + std::to_string(predictions[i]) +
                       " out of range");
    ++cm.at(labels[i], predictions[i]);
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  if (total <= 0) throw ContractError("metrics: empty confusion matrix");

  MetricsReport report;
  report.confusion = cm;
  report.n_windows = total;

  long long trace = 0;
  for (int c = 0; c < cm.n_classes; ++c) trace += cm.at(c, c);
  report.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  for (int c = 0; c < cm.n_classes; ++c) {
    const long long tp = cm.at(c, c);
    const long long col = cm.col_sum(c);
    const long long row = cm.row_sum(c);
    const double precision = col > 0 ? static_cast<double>(tp) / col : 0.0;
    const double recall = row > 0 ? static_cast<double>(tp) / row : 0.0;
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    report.per_class_precision.push_back(precision);
    report.per_class_recall.push_back(recall);
    report.per_class_f1.push_back(f1);
    report.macro_f1 += f1;
  }
  report.macro_f1 /= cm.n_classes;
  return report;
}

CvAggregate aggregate_cv(const std::vector<MetricsReport>& fold_reports) {
  if (fold_reports.empty()) throw ContractError("aggregate_cv: no fold reports");

  CvAggregate agg;
  const double k = static_cast<double>(fold_reports.size());
  for (const MetricsReport& r : fold_reports) {
    agg.mean_accuracy += r.accuracy;
    agg.mean_macro_f1 += r.macro_f1;
  }
  agg.mean_accuracy /= k;
  agg.mean_macro_f1 /= k;
  for (const MetricsReport& r : fold_reports) {
    agg.std_accuracy += (r.accuracy - agg.mean_accuracy) * (r.accuracy - agg.mean_accuracy);
    agg.std_macro_f1 += (r.macro_f1 - agg.mean_macro_f1) * (r.macro_f1 - agg.mean_macro_f1);
  }
  agg.std_accuracy = std::sqrt(agg.std_accuracy / k);
  agg.std_macro_f1 = std::sqrt(agg.std_macro_f1 / k);

  agg.pooled = ConfusionMatrix(fold_reports.front().confusion.n_classes);
  for (const MetricsReport& r : fold_reports) {
    if (r.confusion.n_classes != agg.pooled.n_classes)
      throw ContractError("aggregate_cv: fold confusion sizes differ");
    for (std::size_t i = 0; i < agg.pooled.counts.size(); ++i)
      agg.pooled.counts[i] += r.confusion.counts[i];
  }
  agg.pooled_metrics = metrics(agg.pooled);
  return agg;
}

namespace {

void heat_color(double frac, int& r, int& g, int& b) {
  // White to deep blue.
  r = static_cast<int>(std::lround(255.0 - frac * (255.0 - 8.0)));
  g = static_cast<int>(std::lround(255.0 - frac * (255.0 - 48.0)));
  b = static_cast<int>(std::lround(255.0 - frac * (255.0 - 107.0)));
}

}  // namespace

void render_confusion(const ConfusionMatrix& cm,
                      const std::vector<std::string>& class_names,
                      const std::filesystem::path& svg_path) {
  if (static_cast<int>(class_names.size()) != cm.n_classes)
    throw ContractError("render_confusion: class name count mismatch");

  const int cell = 52;
  const int left = 110, top = 70, right = 20, bottom = 90;
  const int n = cm.n_classes;
  const int width = left + n * cell + right;
  const int height = top + n * cell + bottom;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
  svg << "  <rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << left + n * cell / 2 << "\" y=\"24\" font-size=\"15\" "
      << "text-anchor=\"middle\">Confusion matrix (rows: true, columns: predicted)"
      << "</text>\n";

  for (int t = 0; t < n; ++t) {
    const long long row_total = cm.row_sum(t);
    for (int p = 0; p < n; ++p) {
      const double frac =
          row_total > 0 ? static_cast<double>(cm.at(t, p)) / row_total : 0.0;
      int r, g, b;
      heat_color(frac, r, g, b);
      const int x = left + p * cell;
      const int y = top + t * cell;
      svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << r << ',' << g << ',' << b
          << ")\" stroke=\"#cccccc\"/>\n";
      svg << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 5
          << "\" font-size=\"13\" text-anchor=\"middle\" fill=\""
          << (frac > 0.5 ? "white" : "black") << "\">" << cm.at(t, p) << "</text>\n";
    }
  }
  for (int i = 0; i < n; ++i) {
    svg << "  <text x=\"" << left - 8 << "\" y=\"" << top + i * cell + cell / 2 + 5
        << "\" font-size=\"13\" text-anchor=\"end\">" << class_names[i] << "</text>\n";
    svg << "  <text x=\"" << left + i * cell + cell / 2 << "\" y=\""
        << top + n * cell + 18 << "\" font-size=\"13\" text-anchor=\"middle\">"
        << class_names[i] << "</text>\n";
  }
  svg << "  <text x=\"" << 20 << "\" y=\"" << top + n * cell / 2
      << "\" font-size=\"14\" transform=\"rotate(-90 20 " << top + n * cell / 2
      << ")\" text-anchor=\"middle\">true</text>\n";
  svg << "  <text x=\"" << left + n * cell / 2 << "\" y=\"" << top + n * cell + 48
      << "\" font-size=\"14\" text-anchor=\"middle\">predicted</text>\n";
  svg << "</svg>\n";

  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw IoError("render_confusion: cannot write " + svg_path.string());
  out << svg.str();

  std::filesystem::path csv_path = svg_path;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("render_confusion: cannot write " + csv_path.string());
  for (int t = 0; t < n; ++t) {
    for (int p = 0; p < n; ++p) csv << (p ? "," : "") << cm.at(t, p);
    csv << '\n';
  }
}

ConfusionMatrix read_confusion_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("read_confusion_csv: cannot open " + csv_path.string());
  std::vector<std::vector<long long>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<long long> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stoll(cell));
    rows.push_back(std::move(row));
  }
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (int t = 0; t < cm.n_classes; ++t) {
    if (static_cast<int>(rows[t].size()) != cm.n_classes)
      throw DataError("read_confusion_csv: ragged matrix in " + csv_path.string());
    for (int p = 0; p < cm.n_classes; ++p) cm.at(t, p) = rows[t][p];
  }
  return cm;
}

}  // namespace har
