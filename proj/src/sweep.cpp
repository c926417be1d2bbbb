#include "har/sweep.hpp"

#include <cstdio>
#include <thread>

namespace fs = std::filesystem;

namespace har {

Dataset acquire_dataset(const RunConfig& cfg, Modality modality) {
  if (!cfg.data_dir.empty())
    return load_csv_dir(cfg.data_dir, modality, cfg.synth.n_activities);
  return synth_generate(cfg.synth, modality);
}

SweepOutcome run_sweep(const RunConfig& cfg) {
  SweepOutcome outcome;
  outcome.output_dir = cfg.output_dir;
  fs::create_directories(outcome.output_dir);

  int jobs = cfg.jobs;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());

  struct ModalityData {
    Modality modality;
    Dataset dataset;
    std::vector<FeatureWindow> windows;
    FoldPlan plan;
  };
  std::vector<ModalityData> per_modality;
  for (Modality m : cfg.modalities) {
    ModalityData md;
    md.modality = m;
    md.dataset = acquire_dataset(cfg, m);
    if (md.dataset.sequences.empty())
      throw DataError(std::string("no ") + to_string(m) + " recordings available");
    md.windows = prepare_windows(md.dataset, cfg.features);
    if (md.windows.empty())
      throw DataError(std::string(to_string(m)) +
                      ": recordings are shorter than one window");
    md.plan = make_folds(md.dataset.roster, cfg.fold_k, cfg.fold_n_val, cfg.fold_seed);
    write_fold_plan(md.plan, outcome.output_dir /
                                 ("foldplan_" + std::string(to_string(m)) + ".json"));
    per_modality.push_back(std::move(md));
  }

  for (const ModelEntry& entry : cfg.effective_models()) {
    for (const ModalityData& md : per_modality) {
      const int W = md.windows.front().features.rows();
      const int C = md.windows.front().features.cols();
      ModelSpec spec = finalize_model_spec(entry, W, C, md.dataset.n_activities(),
                                           cfg.train.dropout);

      PairOutcome pair;
      pair.kind = entry.kind;
      pair.modality = md.modality;
      std::fprintf(stderr, "crossval %s / %s: %lld parameters, %zu windows\n",
                   arch_display(entry.kind), to_string(md.modality),
                   build(spec, 0).param_count(), md.windows.size());
      pair.report = run_crossval_on_windows(md.windows, spec, cfg.train, md.plan,
                                            md.dataset.n_activities(), jobs);
      pair.all_failed =
          pair.report.n_failed == static_cast<int>(pair.report.folds.size());
      if (pair.all_failed) outcome.any_pair_all_failed = true;

      const fs::path pair_dir =
          outcome.output_dir /
          (std::string(arch_token(entry.kind)) + "_" + to_string(md.modality));
      write_cv_report_dir(pair.report, md.dataset.activity_names, pair_dir,
                          cfg.save_checkpoints);
      for (std::size_t f = 0; f < pair.report.folds.size(); ++f)
        if (pair.report.folds[f].failed)
          std::fprintf(stderr, "  fold %zu failed: %s\n", f,
                       pair.report.folds[f].error.c_str());
        else
          std::fprintf(stderr, "  fold %zu: acc %.4f macro-F1 %.4f (%s at epoch %d)\n", f,
                       pair.report.folds[f].test_metrics.accuracy,
                       pair.report.folds[f].test_metrics.macro_f1,
                       pair.report.folds[f].history.stop_reason.c_str(),
                       pair.report.folds[f].history.best_epoch);
      outcome.pairs.push_back(std::move(pair));
    }
  }

  write_comparison_csv(outcome.pairs, cfg.modalities,
                       outcome.output_dir / "comparison.csv");
  return outcome;
}

}  // namespace har
