#include "har/tensor.hpp"

#include <cmath>

namespace har {

bool all_finite(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.data) acc += x;
  return std::isfinite(acc);
}

void check_finite(const Tensor& t, const char* where) {
  if (!all_finite(t))
    throw NumericError(std::string("non-finite value produced by ") + where);
}

}  // namespace har
