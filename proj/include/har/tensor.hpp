#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "har/error.hpp"

namespace har {

/// Dense row-major tensor of doubles. Rank 0..3 is what the engine uses:
/// scalars {1}, vectors {n}, matrices {r,c}, batched sequences {b,t,c}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<long long>(data.size()) != numel_of(shape))
      throw DimensionError("Tensor: data length does not match shape");
  }

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d <= 0) throw DimensionError("Tensor: shape entries must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  long long numel() const { return static_cast<long long>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const {
    require_rank(2, "rows");
    return shape[0];
  }
  int cols() const {
    require_rank(2, "cols");
    return shape[1];
  }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  double& at3(int b, int t, int c) {
    return data[(static_cast<std::size_t>(b) * shape[1] + t) * shape[2] + c];
  }
  double at3(int b, int t, int c) const {
    return data[(static_cast<std::size_t>(b) * shape[1] + t) * shape[2] + c];
  }

  double item() const {
    if (numel() != 1) throw ContractError("Tensor::item: tensor is not scalar");
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

 private:
  void require_rank(int r, const char* what) const {
    if (rank() != r)
      throw DimensionError(std::string("Tensor::") + what + ": expected rank " +
                           std::to_string(r) + ", got " + shape_str());
  }
};

/// True when every element is finite. Uses a plain sum: any NaN or overflow
/// poisons the accumulator, which one std::isfinite call then detects.
bool all_finite(const Tensor& t);

/// Throws NumericError naming `where` if the tensor holds NaN/Inf.
void check_finite(const Tensor& t, const char* where);

}  // namespace har
