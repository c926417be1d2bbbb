#include "har/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "har/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace har {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

ordered_json confusion_to_json(const ConfusionMatrix& cm) {
  ordered_json rows = ordered_json::array();
  for (int t = 0; t < cm.n_classes; ++t) {
    ordered_json row = ordered_json::array();
    for (int p = 0; p < cm.n_classes; ++p) row.push_back(cm.at(t, p));
    rows.push_back(std::move(row));
  }
  return rows;
}

ConfusionMatrix confusion_from_json(const nlohmann::json& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (int t = 0; t < cm.n_classes; ++t)
    for (int p = 0; p < cm.n_classes; ++p) cm.at(t, p) = rows[t][p].get<long long>();
  return cm;
}

ordered_json metrics_to_json(const MetricsReport& r) {
  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["per_class_f1"] = r.per_class_f1;
  j["per_class_precision"] = r.per_class_precision;
  j["per_class_recall"] = r.per_class_recall;
  j["n_windows"] = r.n_windows;
  j["confusion"] = confusion_to_json(r.confusion);
  return j;
}

ordered_json train_config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["weight_decay"] = c.weight_decay;
  j["dropout"] = c.dropout;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["min_delta"] = c.min_delta;
  j["seed"] = c.seed;
  return j;
}

void dump_to(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_history_csv(const TrainHistory& history, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_macro_f1,train_accuracy\n";
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochRecord& r = history.epochs[e];
    out << e + 1 << ',' << fmt("%.17g", r.train_loss) << ',' << fmt("%.17g", r.val_loss)
        << ',' << fmt("%.17g", r.val_macro_f1) << ',' << fmt("%.17g", r.train_accuracy)
        << '\n';
  }
}

void write_metrics_json(const MetricsReport& report, const fs::path& path) {
  dump_to(metrics_to_json(report), path);
}

void write_cv_report_dir(const CVReport& report,
                         const std::vector<std::string>& class_names,
                         const fs::path& dir, bool save_checkpoints) {
  fs::create_directories(dir);

  ordered_json j;
  j["arch"] = arch_token(report.spec.kind);
  j["spec"] = spec_to_json(report.spec);
  j["train"] = train_config_to_json(report.config);
  j["n_failed"] = report.n_failed;
  j["folds"] = ordered_json::array();
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    const FoldResult& fr = report.folds[f];
    ordered_json fj;
    fj["failed"] = fr.failed;
    if (fr.failed) {
      fj["error"] = fr.error;
    } else {
      fj["best_epoch"] = fr.history.best_epoch;
      fj["epochs"] = fr.history.epochs.size();
      fj["stop_reason"] = fr.history.stop_reason;
      fj["metrics"] = metrics_to_json(fr.test_metrics);
    }
    j["folds"].push_back(std::move(fj));
  }
  if (report.n_failed < static_cast<int>(report.folds.size())) {
    ordered_json agg;
    agg["mean_accuracy"] = report.aggregate.mean_accuracy;
    agg["std_accuracy"] = report.aggregate.std_accuracy;
    agg["mean_macro_f1"] = report.aggregate.mean_macro_f1;
    agg["std_macro_f1"] = report.aggregate.std_macro_f1;
    agg["pooled"] = metrics_to_json(report.aggregate.pooled_metrics);
    j["aggregate"] = std::move(agg);
  }
  j["class_names"] = class_names;
  dump_to(j, dir / "cvreport.json");

  if (report.n_failed < static_cast<int>(report.folds.size()))
    render_confusion(report.aggregate.pooled, class_names, dir / "pooled_confusion.svg");

  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    const FoldResult& fr = report.folds[f];
    if (fr.failed) continue;
    const fs::path fold_dir = dir / ("fold" + std::to_string(f));
    fs::create_directories(fold_dir);
    write_metrics_json(fr.test_metrics, fold_dir / "metrics.json");
    write_history_csv(fr.history, fold_dir / "history.csv");
    render_confusion(fr.test_metrics.confusion, class_names, fold_dir / "confusion.svg");
    if (save_checkpoints) save_checkpoint(fr.model, fold_dir / "model.ckpt");
  }
}

void write_comparison_csv(const std::vector<PairOutcome>& pairs,
                          const std::vector<Modality>& modality_order,
                          const fs::path& path) {
  // Preserve first-seen architecture order.
  std::vector<ArchKind> arch_order;
  for (const PairOutcome& p : pairs)
    if (std::find(arch_order.begin(), arch_order.end(), p.kind) == arch_order.end())
      arch_order.push_back(p.kind);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "architecture";
  for (Modality m : modality_order) out << ',' << to_string(m);
  out << '\n';
  for (ArchKind kind : arch_order) {
    out << arch_display(kind);
    for (Modality m : modality_order) {
      const PairOutcome* hit = nullptr;
      for (const PairOutcome& p : pairs)
        if (p.kind == kind && p.modality == m) hit = &p;
      out << ',';
      if (hit == nullptr || hit->all_failed)
        out << "n/a";
      else
        out << fmt("%.4f", hit->report.aggregate.mean_macro_f1) << "±"
            << fmt("%.4f", hit->report.aggregate.std_macro_f1);
    }
    out << '\n';
  }
}

std::vector<std::string> regenerate_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("report: not a directory: " + dir.string());

  std::vector<fs::path> pair_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "cvreport.json"))
      pair_dirs.push_back(entry.path());
  std::sort(pair_dirs.begin(), pair_dirs.end());
  if (pair_dirs.empty())
    throw DataError("report: no cvreport.json found under " + dir.string());

  std::vector<PairOutcome> pairs;
  std::vector<Modality> modalities;
  std::vector<std::string> seen;
  for (const fs::path& pd : pair_dirs) {
    std::ifstream in(pd / "cvreport.json");
    nlohmann::json j;
    in >> j;
    PairOutcome pair;
    pair.kind = arch_from_token(j.at("arch").get<std::string>());
    const std::string stem = pd.filename().string();
    const std::string mod_token = stem.substr(stem.rfind('_') + 1);
    pair.modality = modality_from_string(mod_token);
    pair.all_failed = !j.contains("aggregate");

    std::vector<std::string> class_names =
        j.at("class_names").get<std::vector<std::string>>();
    if (!pair.all_failed) {
      const auto& agg = j.at("aggregate");
      pair.report.aggregate.mean_macro_f1 = agg.at("mean_macro_f1").get<double>();
      pair.report.aggregate.std_macro_f1 = agg.at("std_macro_f1").get<double>();
      pair.report.aggregate.mean_accuracy = agg.at("mean_accuracy").get<double>();
      pair.report.aggregate.std_accuracy = agg.at("std_accuracy").get<double>();
      ConfusionMatrix pooled = confusion_from_json(agg.at("pooled").at("confusion"));
      render_confusion(pooled, class_names, pd / "pooled_confusion.svg");
    }
    if (std::find(modalities.begin(), modalities.end(), pair.modality) ==
        modalities.end())
      modalities.push_back(pair.modality);
    pairs.push_back(std::move(pair));
    seen.push_back(stem);
  }
  std::sort(modalities.begin(), modalities.end());
  write_comparison_csv(pairs, modalities, dir / "comparison.csv");
  return seen;
}

}  // namespace har
