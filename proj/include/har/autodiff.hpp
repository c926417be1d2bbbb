#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "har/rng.hpp"
#include "har/tensor.hpp"

namespace har {

/// A named, trainable tensor owned by a model. Lives outside any tape;
/// forward passes inject it as a leaf node.
struct Parameter {
  std::string name;
  Tensor value;
};

enum class OpKind {
  kLeaf,
  kParam,
  kTimeSlice,
  kStackTime,
  kFlatten,
  kMatMul,
  kAdd,
  kAddBias,
  kMul,
  kScale,
  kSigmoid,
  kTanh,
  kRelu,
  kSliceCols,
  kConv1d,
  kMaxPool2,
  kGlobalAvgPool,
  kDropout,
  kSoftmax,
  kCrossEntropy,
  kMse,
  kSumAll,
};

const char* op_name(OpKind k);

/// One recorded operation. `ins` index earlier nodes, so the record order is
/// already topological and backward is a single reverse sweep.
struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<int> ins;
  Tensor out;
  Tensor grad;             // allocated by backward()
  std::vector<int> iaux;   // targets / argmax / slice bounds / stride+pad / t
  double daux = 0.0;       // scale factor or dropout rate
  Tensor aux;              // dropout mask or saved softmax
  const Parameter* param = nullptr;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Append-only computation graph. One tape per forward pass; values are
/// immutable once recorded. Not thread-safe; use one tape per thread.
class Tape {
 public:
  bool training = false;    // enables dropout
  Rng* dropout_rng = nullptr;

  Var leaf(Tensor t);
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[check(v)].out; }
  const Tensor& grad_of(Var v) const { return nodes_[check(v)].grad; }

  /// Gradient of the last backward() root w.r.t. `p`; zeros if the parameter
  /// never entered this tape or is disconnected from the root.
  Tensor param_grad(const Parameter& p) const;

  /// Reverse-mode sweep from a scalar root. Recomputes every node gradient
  /// from scratch, so repeated calls give identical results.
  void backward(Var root);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Op construction plumbing (used by har::ops).
  Var push(Node n);
  const Node& node(int id) const { return nodes_[id]; }

 private:
  int check(Var v) const;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_cache_;
};

namespace ops {

/// C[m,n] = A[m,k] * B[k,n]. Gradient: dA = dC*B^T, dB = A^T*dC.
Var matmul(Tape& t, Var a, Var b);
/// Elementwise sum, identical shapes.
Var add(Tape& t, Var a, Var b);
/// Adds a vector over the last axis of a rank-2 or rank-3 tensor.
Var add_bias(Tape& t, Var m, Var bias);
/// Elementwise product, identical shapes.
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var relu(Tape& t, Var a);
/// Column block [c0, c1) of a rank-2 tensor.
Var slice_cols(Tape& t, Var a, int c0, int c1);
/// x[{B,T,C}] -> step t as {B,C}.
Var time_slice(Tape& t, Var x, int step);
/// W tensors {B,C} -> {B,W,C}.
Var stack_time(Tape& t, const std::vector<Var>& steps);
/// {B,T,C} -> {B,T*C} (row-major copy).
Var flatten(Tape& t, Var x);
/// Cross-correlation over the time axis. input {T,C} or {B,T,C},
/// kernels {K,C,w}; output {T',K} resp. {B,T',K} with
/// T' = floor((T + 2*padding - w) / stride) + 1.
Var conv1d(Tape& t, Var input, Var kernels, int stride, int padding);
/// Width-2 stride-2 max pooling over time; odd trailing element dropped.
Var max_pool2(Tape& t, Var x);
/// Mean over the time axis: {B,T,K} -> {B,K} (or {T,K} -> {1,K}).
Var global_avg_pool(Tape& t, Var x);
/// Inverted dropout. Identity when the tape is not in training mode.
Var dropout(Tape& t, Var a, double rate);
/// Row-wise softmax of a rank-2 tensor.
Var softmax(Tape& t, Var logits);
/// Mean negative log softmax probability of the target class per row.
/// Log-sum-exp stabilized; targets must lie in [0, cols).
Var cross_entropy(Tape& t, Var logits, const std::vector<int>& targets);
/// Mean squared difference, identical shapes.
Var mse(Tape& t, Var a, Var b);
Var sum_all(Tape& t, Var a);

}  // namespace ops

/// Packed LSTM layer weights. Gate blocks along the 4H axis are laid out
/// [input, forget, cell-candidate, output]; the checkpoint format relies on
/// this order. wx {I,4H}, wh {H,4H}, b {4H}.
struct LstmWeights {
  Var wx, wh, b;
};

/// One LSTM step on row-batches: x {B,I}, h,c {B,H} -> (h', c').
/// Composed from primitive ops, so gradients come out of the tape for free.
std::pair<Var, Var> lstm_cell(Tape& t, Var x, Var h, Var c, const LstmWeights& w);

/// A differentiable program: builds a scalar root from leaf vars (one per
/// input tensor, same order).
using TensorProgram = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Central-difference check of reverse-mode gradients for every input with
/// requires_grad set. Returns the max relative error, using
/// max(|analytic|, |numeric|, 1e-8) as the denominator.
double grad_check(const TensorProgram& program, const std::vector<Tensor>& inputs,
                  double eps);

}  // namespace har
