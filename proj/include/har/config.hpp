#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/dataset.hpp"
#include "har/features.hpp"
#include "har/model.hpp"
#include "har/train.hpp"

namespace har {

/// One requested model: architecture plus raw width overrides. Input
/// geometry and class count come from the data at run time.
struct ModelEntry {
  ArchKind kind = ArchKind::kDnn;
  nlohmann::json overrides;  // subset of ModelSpec fields
};

/// Everything one experiment sweep needs, loadable from a single JSON file
/// with full defaulting. Unknown keys are rejected.
struct RunConfig {
  FeatureConfig features;
  SynthConfig synth;
  std::string data_dir;  // empty: use the synthetic generator
  std::vector<Modality> modalities = {Modality::kImu, Modality::kVideo};
  std::vector<ModelEntry> models;  // empty: all six architectures
  TrainConfig train;
  int fold_k = 4;
  int fold_n_val = 2;
  std::uint64_t fold_seed = 123;
  std::string output_dir = "reports";
  int jobs = 0;  // 0: one worker per core, capped at the fold count
  bool save_checkpoints = false;

  std::vector<ModelEntry> effective_models() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Resolves a ModelEntry against the data geometry: family defaults, then
/// the harness dropout default, then the entry's explicit overrides.
ModelSpec finalize_model_spec(const ModelEntry& entry, int input_width,
                              int input_channels, int n_classes,
                              double default_dropout);

}  // namespace har
