#pragma once

#include <string>
#include <vector>

namespace har {

struct GradCheckLine {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckLine> lines;
  bool all_pass = false;
  bool fault_injection_detected = false;  // sanity check of the detector itself
};

/// Finite-difference verification of every primitive op and every
/// architecture at toy widths, `seeds` random draws each (eps = 1e-5,
/// threshold 1e-4), plus a corrupted-gradient self-test.
GradCheckReport run_gradcheck(int seeds = 10);

}  // namespace har
