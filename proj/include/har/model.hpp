#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "har/autodiff.hpp"

namespace har {

enum class ArchKind { kDnn, kCnn, kCnnLstm, kLstmCnn, kLstm, kLstmAe };

std::vector<ArchKind> all_arch_kinds();
/// Config token, e.g. "cnn_lstm".
const char* arch_token(ArchKind k);
/// Table label, e.g. "CNN-LSTM".
const char* arch_display(ArchKind k);
ArchKind arch_from_token(const std::string& token);

/// Architecture plus every width knob. Family defaults follow default_spec();
/// only the fields a family uses matter for it.
struct ModelSpec {
  ArchKind kind = ArchKind::kDnn;
  int input_width = 100;    // W, samples per window
  int input_channels = 28;  // feature columns
  int n_classes = 8;
  double dropout = 0.2;

  std::vector<int> dense_widths = {256, 128, 64};  // DNN trunk
  std::vector<int> conv_channels = {64, 128};
  std::vector<int> conv_kernels = {5, 3};
  int cnn_dense_width = 64;
  std::vector<int> lstm_widths = {128, 128};

  std::vector<int> encoder_widths = {160, 112, 64};  // last entry = latent
  std::vector<int> decoder_widths = {112, 160, 160};
  double recon_weight = 1.0;  // lambda on the reconstruction term

  void validate() const;
  int latent_size() const { return encoder_widths.back(); }
};

/// Family defaults for the given input geometry.
ModelSpec default_spec(ArchKind kind, int input_width = 100, int input_channels = 28,
                       int n_classes = 8);

struct ModelOutput {
  Var logits;
  Var reconstruction;  // valid only for LSTM_AE
  Var input_leaf;      // the batch as recorded on the tape
  bool has_reconstruction() const { return reconstruction.valid(); }
};

/// An instantiated network: spec + parameters in declaration order.
/// Parameters live in a deque so references stay stable as layers register.
class Model {
 public:
  ModelSpec spec;
  std::deque<Parameter> params;

  /// Runs the forward program. batch is {B,W,C} (or {W,C} for one window).
  /// training enables dropout, which draws from tape.dropout_rng.
  ModelOutput forward(Tape& tape, const Tensor& batch, bool training = false);

  long long param_count() const;

  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& values);
};

/// Instantiates a model with seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
/// initialization. Topology problems surface here as errors.
Model build(const ModelSpec& spec, std::uint64_t init_seed);

/// Training objective: cross entropy, plus lambda * mse(reconstruction,
/// input) for the autoencoder.
Var model_loss(Tape& tape, const Model& model, const ModelOutput& out,
               const std::vector<int>& labels);

/// Finite-difference check of d(loss)/d(theta) for every parameter.
/// Dropout is disabled. Returns the max relative error.
double grad_check_model(Model& model, const Tensor& batch,
                        const std::vector<int>& labels, double eps);

}  // namespace har
