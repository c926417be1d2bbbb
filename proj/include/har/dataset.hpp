#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "har/types.hpp"

namespace har {

struct ActivityLabel {
  int index = -1;
  std::string name;
};

/// All recordings of one modality plus the subject roster.
struct Dataset {
  std::vector<JointAngleSequence> sequences;
  std::vector<std::string> roster;          // sorted unique subject ids
  std::vector<std::string> activity_names;  // size = number of classes
  std::vector<std::string> channel_names;
  Modality modality = Modality::kImu;

  int n_activities() const { return static_cast<int>(activity_names.size()); }
};

/// Subject-wise cross-validation plan. Test groups partition the roster;
/// within each fold test/val/train are disjoint and cover it.
struct FoldPlan {
  struct Fold {
    std::vector<std::string> test;
    std::vector<std::string> val;
    std::vector<std::string> train;
  };
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

/// Synthetic stand-in for a recorded dataset. Per activity a, subject s,
/// channel j the clean signal is
///   amp[a,j] * sin(2*pi*freq[a]*t + phase[s,j]) + offset[s,j]
/// with modality-dependent gaussian noise on top; the video modality also
/// evaluates a fraction of samples at jittered instants.
struct SynthConfig {
  int n_subjects = 16;
  int n_activities = 8;
  int channels = 14;
  int trials = 2;
  double duration_seconds = 6.0;
  double imu_rate_hz = 50.0;
  double video_rate_hz = 30.0;
  double imu_noise_deg = 1.0;
  double video_noise_deg = 3.0;
  double video_jitter_prob = 0.2;
  double phase_spread_rad = 6.283185307179586;  // subject-to-subject variation
  double offset_spread_deg = 5.0;
  std::vector<double> base_freq_hz;   // per activity; defaulted when empty
  std::vector<double> base_amp_deg;   // per activity; defaulted when empty
  std::uint64_t seed = 42;

  /// Fills empty frequency/amplitude tables and checks the invariants.
  void finalize();
};

/// Deterministic synthetic dataset for one modality.
Dataset synth_generate(const SynthConfig& cfg, Modality modality = Modality::kImu);

/// Loads every CSV recording of `modality` from a directory. File name
/// pattern: S<subject>_A<activity>_T<trial>_<modality>.csv; layout: header
/// `time,<ch...>`, one row per sample, time in seconds. Files of the other
/// modality are skipped.
Dataset load_csv_dir(const std::filesystem::path& dir, Modality modality,
                     int n_activities = 8);

/// Writes the canonical CSV form (one file per recording, %.17g values).
/// Reloading reproduces the angle matrices bit-exactly.
void write_csv_dir(const Dataset& ds, const std::filesystem::path& dir);

/// Seeded subject-wise k-fold split with n_val validation subjects per fold
/// drawn from the non-test remainder.
FoldPlan make_folds(const std::vector<std::string>& roster, int k, int n_val,
                    std::uint64_t seed);

/// Audit copy of the plan as JSON.
void write_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);

/// Stable sub-seed derivation (splitmix64 chaining).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace har
