#include "har/config.hpp"

#include <fstream>
#include <set>

namespace har {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

FeatureConfig parse_features(const json& j) {
  check_keys(j, {"window_seconds", "sample_rate_hz", "stride_fraction", "fft_enabled"},
             "features");
  FeatureConfig fc;
  get_to(j, "window_seconds", fc.window_seconds, "features");
  get_to(j, "sample_rate_hz", fc.sample_rate_hz, "features");
  get_to(j, "stride_fraction", fc.stride_fraction, "features");
  get_to(j, "fft_enabled", fc.fft_enabled, "features");
  fc.validate();
  return fc;
}

SynthConfig parse_synth(const json& j) {
  check_keys(j,
             {"n_subjects", "n_activities", "channels", "trials", "duration_seconds",
              "imu_rate_hz", "video_rate_hz", "imu_noise_deg", "video_noise_deg",
              "video_jitter_prob", "phase_spread_rad", "offset_spread_deg",
              "base_freq_hz", "base_amp_deg", "seed"},
             "synth");
  SynthConfig sc;
  get_to(j, "n_subjects", sc.n_subjects, "synth");
  get_to(j, "n_activities", sc.n_activities, "synth");
  get_to(j, "channels", sc.channels, "synth");
  get_to(j, "trials", sc.trials, "synth");
  get_to(j, "duration_seconds", sc.duration_seconds, "synth");
  get_to(j, "imu_rate_hz", sc.imu_rate_hz, "synth");
  get_to(j, "video_rate_hz", sc.video_rate_hz, "synth");
  get_to(j, "imu_noise_deg", sc.imu_noise_deg, "synth");
  get_to(j, "video_noise_deg", sc.video_noise_deg, "synth");
  get_to(j, "video_jitter_prob", sc.video_jitter_prob, "synth");
  get_to(j, "phase_spread_rad", sc.phase_spread_rad, "synth");
  get_to(j, "offset_spread_deg", sc.offset_spread_deg, "synth");
  get_to(j, "base_freq_hz", sc.base_freq_hz, "synth");
  get_to(j, "base_amp_deg", sc.base_amp_deg, "synth");
  get_to(j, "seed", sc.seed, "synth");
  SynthConfig checked = sc;
  checked.finalize();  // surfaces invariant violations at load time
  return sc;
}

TrainConfig parse_train(const json& j) {
  check_keys(j,
             {"batch_size", "lr", "beta1", "beta2", "epsilon", "weight_decay",
              "dropout", "max_epochs", "patience", "min_delta", "seed"},
             "train");
  TrainConfig tc;
  get_to(j, "batch_size", tc.batch_size, "train");
  get_to(j, "lr", tc.adam.lr, "train");
  get_to(j, "beta1", tc.adam.beta1, "train");
  get_to(j, "beta2", tc.adam.beta2, "train");
  get_to(j, "epsilon", tc.adam.epsilon, "train");
  get_to(j, "weight_decay", tc.weight_decay, "train");
  get_to(j, "dropout", tc.dropout, "train");
  get_to(j, "max_epochs", tc.max_epochs, "train");
  get_to(j, "patience", tc.patience, "train");
  get_to(j, "min_delta", tc.min_delta, "train");
  get_to(j, "seed", tc.seed, "train");
  tc.validate();
  return tc;
}

const std::set<std::string> kModelKeys = {
    "kind",        "dropout",        "dense_widths",   "conv_channels",
    "conv_kernels", "cnn_dense_width", "lstm_widths",    "encoder_widths",
    "decoder_widths", "recon_weight"};

ModelEntry parse_model(const json& j, const std::string& where) {
  ModelEntry entry;
  if (j.is_string()) {
    entry.kind = arch_from_token(j.get<std::string>());
    entry.overrides = json::object();
    return entry;
  }
  check_keys(j, kModelKeys, where);
  if (!j.contains("kind")) throw ConfigError(where + ": 'kind' is required");
  entry.kind = arch_from_token(j.at("kind").get<std::string>());
  entry.overrides = j;
  entry.overrides.erase("kind");
  return entry;
}

}  // namespace

std::vector<ModelEntry> RunConfig::effective_models() const {
  if (!models.empty()) return models;
  std::vector<ModelEntry> all;
  for (ArchKind k : all_arch_kinds())
    all.push_back(ModelEntry{k, nlohmann::json::object()});
  return all;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"features", "synth", "data_dir", "modalities", "models", "train",
              "folds", "output_dir", "jobs", "save_checkpoints"},
             "config");
  RunConfig cfg;
  if (j.contains("features")) cfg.features = parse_features(j.at("features"));
  if (j.contains("synth")) cfg.synth = parse_synth(j.at("synth"));
  get_to(j, "data_dir", cfg.data_dir, "config");
  if (j.contains("modalities")) {
    cfg.modalities.clear();
    for (const auto& m : j.at("modalities"))
      cfg.modalities.push_back(modality_from_string(m.get<std::string>()));
    if (cfg.modalities.empty()) throw ConfigError("config.modalities: empty list");
  }
  if (j.contains("models")) {
    int idx = 0;
    for (const auto& m : j.at("models"))
      cfg.models.push_back(parse_model(m, "models[" + std::to_string(idx++) + "]"));
    if (cfg.models.empty()) throw ConfigError("config.models: empty list");
  }
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (j.contains("folds")) {
    check_keys(j.at("folds"), {"k", "n_val", "seed"}, "folds");
    get_to(j.at("folds"), "k", cfg.fold_k, "folds");
    get_to(j.at("folds"), "n_val", cfg.fold_n_val, "folds");
    get_to(j.at("folds"), "seed", cfg.fold_seed, "folds");
    if (cfg.fold_k < 2) throw ConfigError("folds.k: must be at least 2");
    if (cfg.fold_n_val < 1) throw ConfigError("folds.n_val: must be at least 1");
  }
  get_to(j, "output_dir", cfg.output_dir, "config");
  get_to(j, "jobs", cfg.jobs, "config");
  get_to(j, "save_checkpoints", cfg.save_checkpoints, "config");
  if (cfg.jobs < 0) throw ConfigError("config.jobs: must be >= 0");
  if (cfg.output_dir.empty()) throw ConfigError("config.output_dir: must not be empty");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

ModelSpec finalize_model_spec(const ModelEntry& entry, int input_width,
                              int input_channels, int n_classes,
                              double default_dropout) {
  ModelSpec spec = default_spec(entry.kind, input_width, input_channels, n_classes);
  spec.dropout = default_dropout;
  const nlohmann::json& o = entry.overrides;
  try {
    if (o.contains("dropout")) spec.dropout = o.at("dropout").get<double>();
    if (o.contains("dense_widths"))
      spec.dense_widths = o.at("dense_widths").get<std::vector<int>>();
    if (o.contains("conv_channels"))
      spec.conv_channels = o.at("conv_channels").get<std::vector<int>>();
    if (o.contains("conv_kernels"))
      spec.conv_kernels = o.at("conv_kernels").get<std::vector<int>>();
    if (o.contains("cnn_dense_width"))
      spec.cnn_dense_width = o.at("cnn_dense_width").get<int>();
    if (o.contains("lstm_widths"))
      spec.lstm_widths = o.at("lstm_widths").get<std::vector<int>>();
    if (o.contains("encoder_widths"))
      spec.encoder_widths = o.at("encoder_widths").get<std::vector<int>>();
    if (o.contains("decoder_widths"))
      spec.decoder_widths = o.at("decoder_widths").get<std::vector<int>>();
    if (o.contains("recon_weight")) spec.recon_weight = o.at("recon_weight").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model override for ") + arch_token(entry.kind) +
                      ": " + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace har
