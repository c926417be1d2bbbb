#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "har/dataset.hpp"
#include "har/features.hpp"
#include "har/metrics.hpp"
#include "har/model.hpp"

namespace har {

/// A subject from a test set leaked into train or validation.
class LeakageError : public Error {
 public:
  using Error::Error;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int batch_size = 20;
  AdamHyper adam;
  double weight_decay = 1e-4;  // decoupled
  double dropout = 0.2;        // default stamped into specs by the harness
  int max_epochs = 200;
  int patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 42;

  // Harness knobs beyond the core protocol. Tracking train accuracy costs an
  // extra eval pass per epoch, so it is off by default; stop_at_train_accuracy
  // (<= 0 disables) ends training once that accuracy is reached.
  bool track_train_accuracy = false;
  double stop_at_train_accuracy = -1.0;

  void validate() const;
};

/// First/second-moment state per parameter, aligned with Model::params.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long t = 0;  // completed steps
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
  double train_accuracy = -1.0;  // -1 when not tracked
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;  // epoch e is epochs[e-1]
  int best_epoch = 0;               // 1-based, minimum val loss, ties earliest
  std::string stop_reason;          // early_stop | max_epochs | train_accuracy
};

struct FoldResult {
  MetricsReport test_metrics;
  TrainHistory history;
  Model model;
  bool failed = false;
  std::string error;
};

struct CVReport {
  ModelSpec spec;
  TrainConfig config;
  std::vector<FoldResult> folds;
  CvAggregate aggregate;  // over succeeded folds
  int n_failed = 0;
};

/// One Adam update with decoupled weight decay:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * mhat/(sqrt(vhat)+eps) - lr * wd * theta
/// t is the 1-based step index used for bias correction. Non-finite
/// gradients raise NumericError naming the parameter.
void adam_step(std::deque<Parameter>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamHyper& hyper, double weight_decay,
               long long t);

/// True once the validation loss has not improved by more than min_delta
/// (strictly) for `patience` consecutive epochs.
bool should_stop(const TrainHistory& history, int patience, double min_delta);

/// Deterministic eval-mode pass: mean loss and argmax predictions.
std::pair<double, std::vector<int>> evaluate(Model& model,
                                             const std::vector<FeatureWindow>& windows,
                                             int batch_size);

/// Trains in place with seeded epoch shuffling and early stopping; the model
/// ends at its best-validation-loss weights.
TrainHistory train_one(Model& model, const std::vector<FeatureWindow>& train_windows,
                       const std::vector<FeatureWindow>& val_windows,
                       const TrainConfig& cfg);

/// Windowing of a whole dataset at the configured rate, in canonical order
/// (subject, activity, trial, window index).
std::vector<FeatureWindow> prepare_windows(const Dataset& ds, const FeatureConfig& fc);

/// One fold end to end: split by subject, fit normalization on the training
/// split only, train, score the test subjects. Seeded as cfg.seed+fold_index.
FoldResult run_fold(const std::vector<FeatureWindow>& windows, const FoldPlan::Fold& fold,
                    const ModelSpec& spec, const TrainConfig& cfg,
                    std::uint64_t fold_seed, int n_classes);

/// Full subject-wise cross-validation. Folds are independent jobs; `jobs`
/// bounds the worker pool and has no effect on the results.
CVReport run_crossval(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                      const FoldPlan& plan, const FeatureConfig& fc, int jobs = 1);

/// Same protocol on pre-built windows; lets a sweep share one expensive
/// feature pass across architectures.
CVReport run_crossval_on_windows(const std::vector<FeatureWindow>& windows,
                                 const ModelSpec& spec, const TrainConfig& cfg,
                                 const FoldPlan& plan, int n_classes, int jobs = 1);

}  // namespace har
