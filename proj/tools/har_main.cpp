#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "har/checkpoint.hpp"
#include "har/gradcheck.hpp"
#include "har/sweep.hpp"

namespace fs = std::filesystem;
using namespace har;

namespace {

// Exit codes: 0 ok, 2 config, 3 data/io, 4 numeric, 5 failed checks.
constexpr int kOk = 0;
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kNumericExit = 4;
constexpr int kCheckExit = 5;

struct CommonFlags {
  std::string config_path;
  std::string output_dir;
  std::string data_dir;
  std::vector<std::string> archs;
  std::vector<std::string> modalities;
  std::int64_t train_seed = -1;
  int max_epochs = -1;
  int jobs = -1;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
  if (!flags.output_dir.empty()) cfg.output_dir = flags.output_dir;
  if (!flags.data_dir.empty()) cfg.data_dir = flags.data_dir;
  if (!flags.archs.empty()) {
    cfg.models.clear();
    for (const std::string& a : flags.archs)
      cfg.models.push_back(ModelEntry{arch_from_token(a), nlohmann::json::object()});
  }
  if (!flags.modalities.empty()) {
    cfg.modalities.clear();
    for (const std::string& m : flags.modalities)
      cfg.modalities.push_back(modality_from_string(m));
  }
  if (flags.train_seed >= 0)
    cfg.train.seed = static_cast<std::uint64_t>(flags.train_seed);
  if (flags.max_epochs > 0) cfg.train.max_epochs = flags.max_epochs;
  if (flags.jobs >= 0) cfg.jobs = flags.jobs;
  return cfg;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool with_data = true) {
  cmd->add_option("-c,--config", flags.config_path, "JSON run configuration file");
  cmd->add_option("-o,--out", flags.output_dir, "Output directory (overrides config)");
  if (with_data) {
    cmd->add_option("--data-dir", flags.data_dir,
                    "Directory of joint-angle CSVs (overrides config; default: synthetic)");
    cmd->add_option("--arch", flags.archs,
                    "Restrict to these architectures (dnn cnn cnn_lstm lstm_cnn lstm lstm_ae)");
    cmd->add_option("--modality", flags.modalities, "Restrict to imu and/or video");
    cmd->add_option("--seed", flags.train_seed, "Training seed (overrides config)");
    cmd->add_option("--max-epochs", flags.max_epochs, "Epoch cap (overrides config)");
    cmd->add_option("-j,--jobs", flags.jobs, "Fold worker count (0 = one per core)");
  }
}

int cmd_synth(const CommonFlags& flags, const std::string& out_dir, bool force) {
  RunConfig cfg = resolve_config(flags);
  fs::path dir = out_dir;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force)
      throw IoError("output directory " + dir.string() +
                    " is not empty (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);

  for (Modality m : cfg.modalities) {
    Dataset ds = synth_generate(cfg.synth, m);
    write_csv_dir(ds, dir);
    std::printf("%s: %d subjects x %d activities x %d trials -> %zu files at %.0f Hz\n",
                to_string(m), cfg.synth.n_subjects, cfg.synth.n_activities,
                cfg.synth.trials, ds.sequences.size(),
                m == Modality::kImu ? cfg.synth.imu_rate_hz : cfg.synth.video_rate_hz);
  }
  std::printf("wrote %s\n", dir.string().c_str());
  return kOk;
}

int cmd_ingest(const CommonFlags& flags, const std::string& dir,
               const std::string& modality) {
  RunConfig cfg = resolve_config(flags);
  Dataset ds = load_csv_dir(dir, modality_from_string(modality), cfg.synth.n_activities);
  std::printf("recordings: %zu\n", ds.sequences.size());
  std::printf("subjects:   %zu\n", ds.roster.size());
  std::printf("channels:   %zu\n", ds.channel_names.size());
  if (!ds.sequences.empty()) {
    double min_rate = ds.sequences[0].sample_rate_hz, max_rate = min_rate;
    long long windows = 0;
    for (const auto& seq : ds.sequences) {
      min_rate = std::min(min_rate, seq.sample_rate_hz);
      max_rate = std::max(max_rate, seq.sample_rate_hz);
    }
    windows = static_cast<long long>(prepare_windows(ds, cfg.features).size());
    std::printf("rates:      %.9g..%.9g Hz\n", min_rate, max_rate);
    std::printf("windows:    %lld at %d samples\n", windows,
                cfg.features.window_samples());
  }
  return kOk;
}

int cmd_train(const CommonFlags& flags, const std::string& arch,
              const std::string& modality) {
  RunConfig cfg = resolve_config(flags);
  const Modality mod = modality_from_string(modality);
  const ArchKind kind = arch_from_token(arch);

  Dataset ds = acquire_dataset(cfg, mod);
  if (ds.sequences.empty()) throw DataError("no recordings available");
  std::vector<FeatureWindow> windows = prepare_windows(ds, cfg.features);
  FoldPlan plan = make_folds(ds.roster, cfg.fold_k, cfg.fold_n_val, cfg.fold_seed);

  ModelSpec spec = finalize_model_spec(
      ModelEntry{kind, nlohmann::json::object()}, windows.front().features.rows(),
      windows.front().features.cols(), ds.n_activities(), cfg.train.dropout);

  std::printf("training %s on %s fold 0: %lld parameters\n", arch_display(kind),
              to_string(mod), build(spec, 0).param_count());
  FoldResult result =
      run_fold(windows, plan.folds[0], spec, cfg.train, cfg.train.seed, ds.n_activities());

  fs::path out = fs::path(cfg.output_dir) /
                 ("single_" + std::string(arch_token(kind)) + "_" + to_string(mod));
  fs::create_directories(out);
  write_history_csv(result.history, out / "history.csv");
  write_metrics_json(result.test_metrics, out / "metrics.json");
  render_confusion(result.test_metrics.confusion, ds.activity_names,
                   out / "confusion.svg");
  save_checkpoint(result.model, out / "model.ckpt");
  std::printf("test accuracy %.4f macro-F1 %.4f (%s, best epoch %d)\n",
              result.test_metrics.accuracy, result.test_metrics.macro_f1,
              result.history.stop_reason.c_str(), result.history.best_epoch);
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

int cmd_crossval(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  SweepOutcome outcome = run_sweep(cfg);

  std::ifstream table(outcome.output_dir / "comparison.csv");
  std::string line;
  while (std::getline(table, line)) std::printf("%s\n", line.c_str());
  std::printf("wrote %s\n", outcome.output_dir.string().c_str());
  if (outcome.any_pair_all_failed) {
    std::fprintf(stderr, "error: at least one architecture/modality pair had every fold fail\n");
    return kCheckExit;
  }
  return kOk;
}

int cmd_gradcheck(int seeds) {
  GradCheckReport report = run_gradcheck(seeds);
  for (const GradCheckLine& line : report.lines)
    std::printf("%-22s max rel err %.3e  %s\n", line.name.c_str(), line.max_rel_error,
                line.pass ? "PASS" : "FAIL");
  std::printf("%-22s %s\n", "fault-injection",
              report.fault_injection_detected ? "detected (PASS)" : "missed (FAIL)");
  if (!report.all_pass) {
    std::fprintf(stderr, "gradcheck failed\n");
    return kCheckExit;
  }
  return kOk;
}

int cmd_report(const std::string& from) {
  std::vector<std::string> pairs = regenerate_reports(from);
  for (const std::string& p : pairs) std::printf("rebuilt %s\n", p.c_str());
  std::printf("wrote %s\n", (fs::path(from) / "comparison.csv").string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint-angle activity recognition harness"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* synth = app.add_subcommand("synth", "Write a synthetic joint-angle CSV dataset");
  std::string synth_out = "data";
  bool synth_force = false;
  add_common_flags(synth, flags, false);
  synth->add_option("--out-data", synth_out, "Dataset output directory")->required();
  synth->add_flag("--force", synth_force, "Overwrite a non-empty output directory");

  auto* ingest = app.add_subcommand("ingest", "Validate and summarize a CSV dataset");
  std::string ingest_dir, ingest_modality = "imu";
  add_common_flags(ingest, flags, false);
  ingest->add_option("--dir", ingest_dir, "CSV directory")->required();
  ingest->add_option("--modality", ingest_modality, "imu or video");

  auto* train = app.add_subcommand("train", "Train one architecture on fold 0");
  std::string train_arch = "lstm_ae", train_modality = "imu";
  add_common_flags(train, flags);
  train->add_option("--train-arch", train_arch, "Architecture token");
  train->add_option("--train-modality", train_modality, "imu or video");

  auto* crossval = app.add_subcommand(
      "crossval", "Cross-validate every requested architecture and modality");
  add_common_flags(crossval, flags);

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Verify every op and architecture against finite differences");
  int gc_seeds = 10;
  gradcheck->add_option("--seeds", gc_seeds, "Random draws per check");

  auto* report = app.add_subcommand("report", "Regenerate tables and heatmaps");
  std::string report_from;
  report->add_option("--from", report_from, "Existing output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigExit;
  }

  try {
    if (synth->parsed()) return cmd_synth(flags, synth_out, synth_force);
    if (ingest->parsed()) return cmd_ingest(flags, ingest_dir, ingest_modality);
    if (train->parsed()) return cmd_train(flags, train_arch, train_modality);
    if (crossval->parsed()) return cmd_crossval(flags);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seeds);
    if (report->parsed()) return cmd_report(report_from);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumericExit;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataExit;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kDataExit;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return kDataExit;
  }
  return kOk;
}
