#include "har/features.hpp"

#include <cmath>
#include <complex>

namespace har {

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(window_seconds * sample_rate_hz));
}

int FeatureConfig::stride_samples() const {
  return std::max(1, static_cast<int>(std::lround(window_samples() * stride_fraction)));
}

void FeatureConfig::validate() const {
  if (sample_rate_hz <= 0.0) throw ContractError("FeatureConfig: sample rate must be positive");
  if (stride_fraction <= 0.0 || stride_fraction > 1.0)
    throw ContractError("FeatureConfig: stride_fraction must lie in (0,1]");
  if (window_samples() < 2) throw ContractError("FeatureConfig: window must span at least 2 samples");
}

JointAngleSequence resample(const JointAngleSequence& seq, double target_hz) {
  if (target_hz <= 0.0) throw ContractError("resample: target rate must be positive");
  if (seq.samples() < 2)
    throw ContractError("resample: sequence '" + seq.subject_id +
                        "' has fewer than 2 samples");
  check_finite(seq.angles, "resample input");

  const int T = seq.samples();
  const int J = seq.channels();
  const double duration = (T - 1) / seq.sample_rate_hz;
  const int To = static_cast<int>(std::floor(duration * target_hz)) + 1;
  const double ratio = seq.sample_rate_hz / target_hz;  // source samples per target step

  JointAngleSequence out = seq;
  out.sample_rate_hz = target_hz;
  out.angles = Tensor::zeros({To, J});
  for (int i = 0; i < To; ++i) {
    double pos = i * ratio;
    int i0 = static_cast<int>(std::floor(pos));
    if (i0 > T - 2) i0 = T - 2;
    const double frac = pos - i0;
    for (int j = 0; j < J; ++j)
      out.angles.at(i, j) =
          (1.0 - frac) * seq.angles.at(i0, j) + frac * seq.angles.at(i0 + 1, j);
  }
  return out;
}

std::vector<Tensor> segment(const JointAngleSequence& seq, const FeatureConfig& cfg) {
  cfg.validate();
  if (std::abs(seq.sample_rate_hz - cfg.sample_rate_hz) > 1e-9)
    throw ContractError("segment: sequence rate " + std::to_string(seq.sample_rate_hz) +
                        " differs from configured " + std::to_string(cfg.sample_rate_hz) +
                        "; resample first");
  const int W = cfg.window_samples();
  const int S = cfg.stride_samples();
  const int T = seq.samples();
  const int J = seq.channels();

  std::vector<Tensor> windows;
  if (T < W) return windows;  // too short: zero windows, not an error
  const int count = (T - W) / S + 1;
  windows.reserve(count);
  for (int w = 0; w < count; ++w) {
    Tensor win = Tensor::zeros({W, J});
    const int start = w * S;
    for (int t = 0; t < W; ++t)
      for (int j = 0; j < J; ++j) win.at(t, j) = seq.angles.at(start + t, j);
    windows.push_back(std::move(win));
  }
  return windows;
}

Tensor dft2_magnitude(const Tensor& window) {
  if (window.rank() != 2) throw DimensionError("dft2_magnitude: expected {W,J} matrix");
  check_finite(window, "dft2_magnitude input");
  const int W = window.rows();
  const int J = window.cols();
  using cd = std::complex<double>;

  std::vector<cd> tw_t(W), tw_j(J);
  for (int k = 0; k < W; ++k) tw_t[k] = std::polar(1.0, -2.0 * M_PI * k / W);
  for (int k = 0; k < J; ++k) tw_j[k] = std::polar(1.0, -2.0 * M_PI * k / J);

  // Time-axis pass: G[u][j] = sum_t x[t,j] * e^{-2pi i u t / W}
  std::vector<cd> g(static_cast<std::size_t>(W) * J);
  for (int u = 0; u < W; ++u)
    for (int t = 0; t < W; ++t) {
      const cd tw = tw_t[(static_cast<long long>(u) * t) % W];
      for (int j = 0; j < J; ++j)
        g[static_cast<std::size_t>(u) * J + j] += window.at(t, j) * tw;
    }

  // Channel-axis pass and magnitude.
  Tensor out = Tensor::zeros({W, J});
  for (int u = 0; u < W; ++u)
    for (int v = 0; v < J; ++v) {
      cd acc = 0.0;
      for (int j = 0; j < J; ++j)
        acc += g[static_cast<std::size_t>(u) * J + j] * tw_j[(static_cast<long long>(v) * j) % J];
      out.at(u, v) = std::abs(acc);
    }
  return out;
}

Tensor assemble(const Tensor& window, const FeatureConfig& cfg) {
  check_finite(window, "assemble input");
  if (!cfg.fft_enabled) return window;
  const int W = window.rows();
  const int J = window.cols();
  const Tensor mag = dft2_magnitude(window);
  Tensor out = Tensor::zeros({W, 2 * J});
  for (int t = 0; t < W; ++t)
    for (int j = 0; j < J; ++j) {
      out.at(t, j) = window.at(t, j);
      out.at(t, J + j) = mag.at(t, j);
    }
  return out;
}

std::vector<FeatureWindow> make_windows(const JointAngleSequence& seq,
                                        const FeatureConfig& cfg) {
  std::vector<FeatureWindow> out;
  std::vector<Tensor> raw = segment(seq, cfg);
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    FeatureWindow fw;
    fw.features = assemble(raw[i], cfg);
    fw.label = seq.activity;
    fw.subject_id = seq.subject_id;
    fw.modality = seq.modality;
    fw.trial = seq.trial;
    fw.window_index = static_cast<int>(i);
    out.push_back(std::move(fw));
  }
  return out;
}

NormStats fit_norm(const std::vector<FeatureWindow>& train_windows) {
  if (train_windows.empty()) throw ContractError("fit_norm: empty training set");
  const int C = train_windows.front().features.cols();
  NormStats stats;
  stats.mean.assign(C, 0.0);
  stats.stddev.assign(C, 0.0);

  long long n = 0;
  for (const FeatureWindow& w : train_windows) {
    if (w.features.cols() != C)
      throw DimensionError("fit_norm: inconsistent feature widths");
    const int W = w.features.rows();
    for (int t = 0; t < W; ++t)
      for (int c = 0; c < C; ++c) stats.mean[c] += w.features.at(t, c);
    n += W;
  }
  for (int c = 0; c < C; ++c) stats.mean[c] /= n;

  for (const FeatureWindow& w : train_windows) {
    const int W = w.features.rows();
    for (int t = 0; t < W; ++t)
      for (int c = 0; c < C; ++c) {
        const double d = w.features.at(t, c) - stats.mean[c];
        stats.stddev[c] += d * d;
      }
  }
  for (int c = 0; c < C; ++c)
    stats.stddev[c] = std::max(std::sqrt(stats.stddev[c] / n), NormStats::kEpsilon);
  return stats;
}

FeatureWindow apply_norm(const FeatureWindow& w, const NormStats& stats) {
  if (w.features.cols() != static_cast<int>(stats.mean.size()))
    throw DimensionError("apply_norm: stats were fitted for a different feature width");
  FeatureWindow out = w;
  const int W = w.features.rows();
  const int C = w.features.cols();
  for (int t = 0; t < W; ++t)
    for (int c = 0; c < C; ++c)
      out.features.at(t, c) = (w.features.at(t, c) - stats.mean[c]) / stats.stddev[c];
  return out;
}

}  // namespace har
