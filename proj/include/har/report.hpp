#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "har/config.hpp"
#include "har/train.hpp"

namespace har {

struct PairOutcome {
  ArchKind kind = ArchKind::kDnn;
  Modality modality = Modality::kImu;
  CVReport report;
  bool all_failed = false;
};

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);

/// Emits one architecture-modality directory: cvreport.json, pooled
/// confusion heatmap + CSV, and per-fold metrics/history/confusion files.
void write_cv_report_dir(const CVReport& report,
                         const std::vector<std::string>& class_names,
                         const std::filesystem::path& dir,
                         bool save_checkpoints = false);

/// rows = architectures, columns = modalities, cells = mean macro-F1 +/- std.
void write_comparison_csv(const std::vector<PairOutcome>& pairs,
                          const std::vector<Modality>& modality_order,
                          const std::filesystem::path& path);

/// Rebuilds comparison.csv and the pooled heatmaps from the cvreport.json
/// files under an existing output tree. Returns the pair directories seen.
std::vector<std::string> regenerate_reports(const std::filesystem::path& dir);

}  // namespace har
