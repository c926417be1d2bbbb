#include "har/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

namespace har {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be >= 1");
  if (adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1)
    throw ContractError("TrainConfig: betas must lie in [0,1)");
  if (adam.lr <= 0) throw ContractError("TrainConfig: learning rate must be positive");
  if (adam.epsilon <= 0) throw ContractError("TrainConfig: epsilon must be positive");
  if (weight_decay < 0) throw ContractError("TrainConfig: weight_decay must be >= 0");
  if (max_epochs < 1) throw ContractError("TrainConfig: max_epochs must be >= 1");
  if (patience < 1) throw ContractError("TrainConfig: patience must be >= 1");
  if (min_delta < 0) throw ContractError("TrainConfig: min_delta must be >= 0");
  if (dropout < 0 || dropout >= 1) throw ContractError("TrainConfig: dropout must lie in [0,1)");
}

void adam_step(std::deque<Parameter>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamHyper& hyper, double weight_decay,
               long long t) {
  if (t < 1) throw ContractError("adam_step: step index starts at 1");
  if (grads.size() != params.size())
    throw ContractError("adam_step: gradient list does not match parameters");
  if (state.m.empty()) {
    for (const Parameter& p : params) {
      state.m.push_back(Tensor::zeros(p.value.shape));
      state.v.push_back(Tensor::zeros(p.value.shape));
    }
  }

  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const Tensor& g = grads[i];
    if (!g.same_shape(p.value))
      throw ContractError("adam_step: gradient shape mismatch at " + p.name);
    if (!all_finite(g))
      throw NumericError("adam_step: non-finite gradient for parameter " + p.name);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double gk = g.data[k];
      m.data[k] = hyper.beta1 * m.data[k] + (1.0 - hyper.beta1) * gk;
      v.data[k] = hyper.beta2 * v.data[k] + (1.0 - hyper.beta2) * gk * gk;
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      p.value.data[k] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.epsilon) +
                         hyper.lr * weight_decay * p.value.data[k];
    }
  }
  state.t = t;
}

bool should_stop(const TrainHistory& history, int patience, double min_delta) {
  if (history.epochs.empty())
    throw ContractError("should_stop: at least one epoch required");
  double best = history.epochs.front().val_loss;
  int stale = 0;
  for (std::size_t e = 1; e < history.epochs.size(); ++e) {
    const double loss = history.epochs[e].val_loss;
    if (best - loss > min_delta) {  // strictly better than min_delta
      best = loss;
      stale = 0;
    } else {
      ++stale;
    }
  }
  return stale >= patience;
}

namespace {

struct Batch {
  Tensor features;
  std::vector<int> labels;
};

Batch gather_batch(const std::vector<FeatureWindow>& windows,
                   const std::vector<int>& order, std::size_t begin, std::size_t end) {
  const Tensor& first = windows[order[begin]].features;
  const int W = first.rows(), C = first.cols();
  Batch batch;
  batch.features = Tensor::zeros({static_cast<int>(end - begin), W, C});
  double* dst = batch.features.data.data();
  for (std::size_t i = begin; i < end; ++i) {
    const FeatureWindow& w = windows[order[i]];
    if (w.features.rows() != W || w.features.cols() != C)
      throw DimensionError("gather_batch: inconsistent window shapes");
    std::copy(w.features.data.begin(), w.features.data.end(),
              dst + (i - begin) * static_cast<std::size_t>(W) * C);
    batch.labels.push_back(w.label);
  }
  return batch;
}

std::set<std::string> subject_set(const std::vector<FeatureWindow>& windows) {
  std::set<std::string> out;
  for (const FeatureWindow& w : windows) out.insert(w.subject_id);
  return out;
}

}  // namespace

std::pair<double, std::vector<int>> evaluate(Model& model,
                                             const std::vector<FeatureWindow>& windows,
                                             int batch_size) {
  if (windows.empty()) throw ContractError("evaluate: no windows");
  double loss_sum = 0.0;
  std::vector<int> preds;
  preds.reserve(windows.size());
  std::vector<int> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (std::size_t start = 0; start < windows.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(windows.size(), start + batch_size);
    Batch batch = gather_batch(windows, order, start, stop);
    Tape tape;
    ModelOutput out = model.forward(tape, batch.features, false);
    Var loss = model_loss(tape, model, out, batch.labels);
    loss_sum += tape.val(loss).item() * static_cast<double>(stop - start);
    const Tensor& logits = tape.val(out.logits);
    for (int r = 0; r < logits.rows(); ++r) preds.push_back(argmax_row(logits, r));
  }
  return {loss_sum / static_cast<double>(windows.size()), preds};
}

TrainHistory train_one(Model& model, const std::vector<FeatureWindow>& train_windows,
                       const std::vector<FeatureWindow>& val_windows,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (train_windows.empty() || val_windows.empty())
    throw ContractError("train_one: empty train or validation split");
  {
    std::set<std::string> train_subjects = subject_set(train_windows);
    for (const std::string& s : subject_set(val_windows))
      if (train_subjects.count(s))
        throw LeakageError("train_one: subject " + s + " appears in train and validation");
  }

  Rng rng(cfg.seed);
  AdamState adam_state;
  TrainHistory history;
  double best_loss = 0.0;
  std::vector<Tensor> best_values = model.snapshot_values();
  long long step = 0;

  std::vector<int> order(train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<int> val_labels;
  for (const FeatureWindow& w : val_windows) val_labels.push_back(w.label);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Batch batch = gather_batch(train_windows, order, start, stop);

      Tape tape;
      tape.dropout_rng = &rng;
      ModelOutput out = model.forward(tape, batch.features, true);
      Var loss = model_loss(tape, model, out, batch.labels);
      tape.backward(loss);
      train_loss += tape.val(loss).item() * static_cast<double>(stop - start);

      std::vector<Tensor> grads;
      grads.reserve(model.params.size());
      for (Parameter& p : model.params) grads.push_back(tape.param_grad(p));
      adam_step(model.params, grads, adam_state, cfg.adam, cfg.weight_decay, ++step);
    }

    EpochRecord rec;
    rec.train_loss = train_loss / static_cast<double>(train_windows.size());
    auto [val_loss, val_preds] = evaluate(model, val_windows, cfg.batch_size);
    rec.val_loss = val_loss;
    rec.val_macro_f1 =
        metrics(confusion(val_preds, val_labels, model.spec.n_classes)).macro_f1;

    if (cfg.track_train_accuracy) {
      auto [tl, train_preds] = evaluate(model, train_windows, cfg.batch_size);
      (void)tl;
      long long correct = 0;
      for (std::size_t i = 0; i < train_preds.size(); ++i)
        if (train_preds[i] == train_windows[i].label) ++correct;
      rec.train_accuracy =
          static_cast<double>(correct) / static_cast<double>(train_windows.size());
    }
    history.epochs.push_back(rec);

    if (history.best_epoch == 0 || rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      history.best_epoch = epoch;
      best_values = model.snapshot_values();
    }

    if (cfg.stop_at_train_accuracy > 0.0 && cfg.track_train_accuracy &&
        rec.train_accuracy >= cfg.stop_at_train_accuracy) {
      history.stop_reason = "train_accuracy";
      break;
    }
    if (should_stop(history, cfg.patience, cfg.min_delta)) {
      history.stop_reason = "early_stop";
      break;
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
  model.restore_values(best_values);
  return history;
}

std::vector<FeatureWindow> prepare_windows(const Dataset& ds, const FeatureConfig& fc) {
  fc.validate();
  std::vector<const JointAngleSequence*> seqs;
  for (const JointAngleSequence& s : ds.sequences) seqs.push_back(&s);
  // Canonical order makes everything downstream independent of load order.
  std::sort(seqs.begin(), seqs.end(),
            [](const JointAngleSequence* a, const JointAngleSequence* b) {
              return std::tie(a->subject_id, a->activity, a->trial) <
                     std::tie(b->subject_id, b->activity, b->trial);
            });
  std::vector<FeatureWindow> windows;
  for (const JointAngleSequence* seq : seqs) {
    JointAngleSequence at_rate = std::abs(seq->sample_rate_hz - fc.sample_rate_hz) <= 1e-9
                                     ? *seq
                                     : resample(*seq, fc.sample_rate_hz);
    std::vector<FeatureWindow> w = make_windows(at_rate, fc);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()),
                   std::make_move_iterator(w.end()));
  }
  return windows;
}

FoldResult run_fold(const std::vector<FeatureWindow>& windows, const FoldPlan::Fold& fold,
                    const ModelSpec& spec, const TrainConfig& cfg,
                    std::uint64_t fold_seed, int n_classes) {
  const std::set<std::string> test_set(fold.test.begin(), fold.test.end());
  const std::set<std::string> val_set(fold.val.begin(), fold.val.end());
  const std::set<std::string> train_set(fold.train.begin(), fold.train.end());

  std::vector<FeatureWindow> train, val, test;
  for (const FeatureWindow& w : windows) {
    if (train_set.count(w.subject_id))
      train.push_back(w);
    else if (val_set.count(w.subject_id))
      val.push_back(w);
    else if (test_set.count(w.subject_id))
      test.push_back(w);
  }
  if (train.empty() || val.empty() || test.empty())
    throw ContractError("run_fold: a split has no windows");

  // Normalization sees training-fold windows only.
  NormStats stats = fit_norm(train);
  for (auto* group : {&train, &val, &test})
    for (FeatureWindow& w : *group) w = apply_norm(w, stats);

  FoldResult result;
  TrainConfig fold_cfg = cfg;
  fold_cfg.seed = fold_seed;
  result.model = build(spec, fold_seed);
  result.history = train_one(result.model, train, val, fold_cfg);

  std::vector<int> labels;
  for (const FeatureWindow& w : test) labels.push_back(w.label);
  auto [loss, preds] = evaluate(result.model, test, cfg.batch_size);
  (void)loss;
  result.test_metrics = metrics(confusion(preds, labels, n_classes));
  return result;
}

CVReport run_crossval(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                      const FoldPlan& plan, const FeatureConfig& fc, int jobs) {
  {
    std::set<std::string> roster(ds.roster.begin(), ds.roster.end());
    for (const auto& fold : plan.folds)
      for (const auto* group : {&fold.test, &fold.val, &fold.train})
        for (const std::string& s : *group)
          if (!roster.count(s))
            throw ContractError("run_crossval: fold subject " + s +
                                " missing from the dataset roster");
  }
  return run_crossval_on_windows(prepare_windows(ds, fc), spec, cfg, plan,
                                 ds.n_activities(), jobs);
}

CVReport run_crossval_on_windows(const std::vector<FeatureWindow>& windows,
                                 const ModelSpec& spec, const TrainConfig& cfg,
                                 const FoldPlan& plan, int n_classes, int jobs) {
  cfg.validate();
  spec.validate();
  if (plan.folds.empty()) throw ContractError("run_crossval: empty fold plan");

  CVReport report;
  report.spec = spec;
  report.config = cfg;
  report.folds.resize(plan.folds.size());

  // Folds are independent; seed-per-fold makes scheduling irrelevant.
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t f = next.fetch_add(1);
      if (f >= plan.folds.size()) return;
      FoldResult& slot = report.folds[f];
      try {
        slot = run_fold(windows, plan.folds[f], spec, cfg,
                        cfg.seed + static_cast<std::uint64_t>(f), n_classes);
      } catch (const std::exception& e) {
        slot.failed = true;
        slot.error = e.what();
      }
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(plan.folds.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<MetricsReport> ok;
  for (const FoldResult& fr : report.folds) {
    if (fr.failed)
      ++report.n_failed;
    else
      ok.push_back(fr.test_metrics);
  }
  if (!ok.empty()) report.aggregate = aggregate_cv(ok);
  return report;
}

}  // namespace har
