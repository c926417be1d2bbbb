#pragma once

#include "har/config.hpp"
#include "har/report.hpp"

namespace har {

struct SweepOutcome {
  std::vector<PairOutcome> pairs;
  std::filesystem::path output_dir;
  bool any_pair_all_failed = false;
};

/// Loads CSVs from data_dir or falls back to the synthetic generator.
Dataset acquire_dataset(const RunConfig& cfg, Modality modality);

/// The full experiment: every requested architecture against every
/// modality, cross-validated and written under cfg.output_dir:
///   <arch>_<modality>/{cvreport.json, pooled_confusion.{svg,csv}, fold<k>/...}
///   comparison.csv, foldplan_<modality>.json
SweepOutcome run_sweep(const RunConfig& cfg);

}  // namespace har
