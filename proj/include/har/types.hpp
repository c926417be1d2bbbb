#pragma once

#include <string>

#include "har/error.hpp"
#include "har/tensor.hpp"

namespace har {

/// Acquisition route of a joint-angle recording.
enum class Modality { kImu, kVideo };

inline const char* to_string(Modality m) {
  return m == Modality::kImu ? "imu" : "video";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "imu") return Modality::kImu;
  if (s == "video") return Modality::kVideo;
  throw DataError("unknown modality token: " + s);
}

/// One recording: a subject performing one activity, sampled uniformly.
struct JointAngleSequence {
  std::string subject_id;
  Modality modality = Modality::kImu;
  int activity = -1;  // index into the dataset's label set
  int trial = 0;
  double sample_rate_hz = 0.0;
  Tensor angles;  // {T, J}, degrees

  int samples() const { return angles.shape.empty() ? 0 : angles.shape[0]; }
  int channels() const { return angles.rank() == 2 ? angles.shape[1] : 0; }
};

}  // namespace har
