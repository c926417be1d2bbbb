#pragma once

#include <string>
#include <vector>

#include "har/tensor.hpp"
#include "har/types.hpp"

namespace har {

/// Windowing and feature parameters. The canonical rate is 50 Hz, which makes
/// the 2-second window 100 samples wide for every modality.
struct FeatureConfig {
  double window_seconds = 2.0;
  double sample_rate_hz = 50.0;
  double stride_fraction = 0.5;  // in (0, 1]
  bool fft_enabled = true;

  int window_samples() const;
  int stride_samples() const;
  void validate() const;
};

/// One classifier input: raw angle columns [0,J) followed by 2D-DFT
/// magnitude columns [J,2J) when fft_enabled.
struct FeatureWindow {
  Tensor features;  // {W, 2J} or {W, J}
  int label = -1;
  std::string subject_id;
  Modality modality = Modality::kImu;
  int trial = 0;
  int window_index = 0;
};

/// Per-column standardization statistics, fitted on training folds only.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at epsilon
  static constexpr double kEpsilon = 1e-8;
};

/// Linear interpolation onto a uniform grid at target_hz spanning the
/// original duration. Requires at least two samples.
JointAngleSequence resample(const JointAngleSequence& seq, double target_hz);

/// Sliding windows of W samples with the configured stride. Sequences shorter
/// than one window yield an empty list. The sequence must already be at
/// cfg.sample_rate_hz.
std::vector<Tensor> segment(const JointAngleSequence& seq, const FeatureConfig& cfg);

/// Magnitude of the full-resolution 2D DFT of a {W,J} window. Computed by
/// row-column decomposition; Hermitian redundancy is kept so the spectral
/// block has the same shape as the raw block.
Tensor dft2_magnitude(const Tensor& window);

/// [raw | dft2_magnitude(raw)] -> {W,2J}; raw only when fft is disabled.
Tensor assemble(const Tensor& window, const FeatureConfig& cfg);

/// Segments a sequence and stamps each assembled window with its metadata.
std::vector<FeatureWindow> make_windows(const JointAngleSequence& seq,
                                        const FeatureConfig& cfg);

/// Column means and population standard deviations over every row of every
/// window. Throws on an empty training set.
NormStats fit_norm(const std::vector<FeatureWindow>& train_windows);

/// Per-column z-score with the epsilon-floored std.
FeatureWindow apply_norm(const FeatureWindow& w, const NormStats& stats);

}  // namespace har
