#include "har/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace har {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kParam: return "param";
    case OpKind::kTimeSlice: return "time_slice";
    case OpKind::kStackTime: return "stack_time";
    case OpKind::kFlatten: return "flatten";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kMaxPool2: return "max_pool2";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kDropout: return "dropout";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kMse: return "mse";
    case OpKind::kSumAll: return "sum_all";
  }
  return "?";
}

int Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("Tape: variable does not belong to this tape");
  return v.id;
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.out = std::move(t);
  check_finite(n.out, "leaf");
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  auto it = param_cache_.find(&p);
  if (it != param_cache_.end()) return Var{it->second};
  Node n;
  n.kind = OpKind::kParam;
  n.out = p.value;
  n.param = &p;
  check_finite(n.out, "param");
  Var v = push(std::move(n));
  param_cache_.emplace(&p, v.id);
  return v;
}

Tensor Tape::param_grad(const Parameter& p) const {
  auto it = param_cache_.find(&p);
  if (it == param_cache_.end() || nodes_[it->second].grad.data.empty())
    return Tensor::zeros(p.value.shape);
  return nodes_[it->second].grad;
}

void Tape::clear() {
  nodes_.clear();
  param_cache_.clear();
}

namespace {

// C[m,n] += A[m,k] * B[k,n]. k-major order: each B row is streamed exactly
// once while the m*n output stays cache-resident (batch sizes keep it small).
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int kk = 0; kk < k; ++kk) {
    const double* brow = b + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[static_cast<std::size_t>(i) * k + kk];
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dB[k,n] += A^T[k,m] * dC[m,n]; same k-major pattern with each dB row
// accumulated while hot.
void gemm_acc_at(const double* a, const double* dc, double* db, int m, int k, int n) {
  for (int kk = 0; kk < k; ++kk) {
    double* dbrow = db + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[static_cast<std::size_t>(i) * k + kk];
      const double* dcrow = dc + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B^T. Transposing B first turns the per-coordinate dot
// products into the saxpy form above; the scratch is reused per thread.
void gemm_acc_bt(const double* dc, const double* b, double* da, int m, int k, int n) {
  thread_local std::vector<double> bt;
  bt.resize(static_cast<std::size_t>(k) * n);
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < n; ++j)
      bt[static_cast<std::size_t>(j) * k + kk] = b[static_cast<std::size_t>(kk) * n + j];
  gemm_acc(dc, bt.data(), da, m, n, k);
}

// Treats rank-2 {T,C} as {1,T,C}.
void dims3(const Tensor& t, int& b, int& tt, int& c) {
  if (t.rank() == 3) {
    b = t.shape[0];
    tt = t.shape[1];
    c = t.shape[2];
  } else if (t.rank() == 2) {
    b = 1;
    tt = t.shape[0];
    c = t.shape[1];
  } else {
    throw DimensionError("expected rank-2 or rank-3 tensor, got " + t.shape_str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

}  // namespace

namespace ops {

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw DimensionError("matmul: incompatible shapes " + A.shape_str() + " x " +
                         B.shape_str());
  Node n;
  n.kind = OpKind::kMatMul;
  n.ins = {a.id, b.id};
  n.out = Tensor::zeros({A.rows(), B.cols()});
  gemm_acc(A.data.data(), B.data.data(), n.out.data.data(), A.rows(), A.cols(),
           B.cols());
  check_finite(n.out, "matmul");
  return t.push(std::move(n));
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "add");
  Node n;
  n.kind = OpKind::kAdd;
  n.ins = {a.id, b.id};
  n.out = A;
  for (std::size_t i = 0; i < n.out.data.size(); ++i) n.out.data[i] += B.data[i];
  check_finite(n.out, "add");
  return t.push(std::move(n));
}

Var add_bias(Tape& t, Var m, Var bias) {
  const Tensor& M = t.val(m);
  const Tensor& b = t.val(bias);
  int B, T, C;
  dims3(M, B, T, C);
  if (b.rank() != 1 || b.shape[0] != C)
    throw DimensionError("add_bias: bias " + b.shape_str() + " does not match last axis of " +
                         M.shape_str());
  Node n;
  n.kind = OpKind::kAddBias;
  n.ins = {m.id, bias.id};
  n.out = M;
  double* p = n.out.data.data();
  for (int r = 0; r < B * T; ++r)
    for (int j = 0; j < C; ++j) p[static_cast<std::size_t>(r) * C + j] += b.data[j];
  check_finite(n.out, "add_bias");
  return t.push(std::move(n));
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "mul");
  Node n;
  n.kind = OpKind::kMul;
  n.ins = {a.id, b.id};
  n.out = A;
  for (std::size_t i = 0; i < n.out.data.size(); ++i) n.out.data[i] *= B.data[i];
  check_finite(n.out, "mul");
  return t.push(std::move(n));
}

Var scale(Tape& t, Var a, double s) {
  Node n;
  n.kind = OpKind::kScale;
  n.ins = {a.id};
  n.daux = s;
  n.out = t.val(a);
  for (double& x : n.out.data) x *= s;
  check_finite(n.out, "scale");
  return t.push(std::move(n));
}

Var sigmoid(Tape& t, Var a) {
  Node n;
  n.kind = OpKind::kSigmoid;
  n.ins = {a.id};
  n.out = t.val(a);
  for (double& x : n.out.data) x = 1.0 / (1.0 + std::exp(-x));
  check_finite(n.out, "sigmoid");
  return t.push(std::move(n));
}

Var tanh(Tape& t, Var a) {
  Node n;
  n.kind = OpKind::kTanh;
  n.ins = {a.id};
  n.out = t.val(a);
  for (double& x : n.out.data) x = std::tanh(x);
  check_finite(n.out, "tanh");
  return t.push(std::move(n));
}

Var relu(Tape& t, Var a) {
  Node n;
  n.kind = OpKind::kRelu;
  n.ins = {a.id};
  n.out = t.val(a);
  for (double& x : n.out.data) x = x > 0.0 ? x : 0.0;
  check_finite(n.out, "relu");
  return t.push(std::move(n));
}

Var slice_cols(Tape& t, Var a, int c0, int c1) {
  const Tensor& A = t.val(a);
  if (A.rank() != 2 || c0 < 0 || c1 > A.cols() || c0 >= c1)
    throw DimensionError("slice_cols: bad column range");
  Node n;
  n.kind = OpKind::kSliceCols;
  n.ins = {a.id};
  n.iaux = {c0, c1};
  n.out = Tensor::zeros({A.rows(), c1 - c0});
  for (int i = 0; i < A.rows(); ++i)
    for (int j = c0; j < c1; ++j) n.out.at(i, j - c0) = A.at(i, j);
  return t.push(std::move(n));
}

Var time_slice(Tape& t, Var x, int step) {
  const Tensor& X = t.val(x);
  if (X.rank() != 3) throw DimensionError("time_slice: expected rank-3 input");
  const int B = X.shape[0], T = X.shape[1], C = X.shape[2];
  if (step < 0 || step >= T) throw DimensionError("time_slice: step out of range");
  Node n;
  n.kind = OpKind::kTimeSlice;
  n.ins = {x.id};
  n.iaux = {step};
  n.out = Tensor::zeros({B, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) n.out.at(b, c) = X.at3(b, step, c);
  return t.push(std::move(n));
}

Var stack_time(Tape& t, const std::vector<Var>& steps) {
  if (steps.empty()) throw ContractError("stack_time: no steps");
  const Tensor& first = t.val(steps[0]);
  if (first.rank() != 2) throw DimensionError("stack_time: steps must be rank-2");
  const int B = first.rows(), C = first.cols();
  Node n;
  n.kind = OpKind::kStackTime;
  n.out = Tensor::zeros({B, static_cast<int>(steps.size()), C});
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const Tensor& S = t.val(steps[s]);
    require_same_shape(first, S, "stack_time");
    n.ins.push_back(steps[s].id);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) n.out.at3(b, static_cast<int>(s), c) = S.at(b, c);
  }
  return t.push(std::move(n));
}

Var flatten(Tape& t, Var x) {
  const Tensor& X = t.val(x);
  if (X.rank() != 3) throw DimensionError("flatten: expected rank-3 input");
  Node n;
  n.kind = OpKind::kFlatten;
  n.ins = {x.id};
  n.out = Tensor({X.shape[0], X.shape[1] * X.shape[2]}, X.data);
  return t.push(std::move(n));
}

Var conv1d(Tape& t, Var input, Var kernels, int stride, int padding) {
  const Tensor& X = t.val(input);
  const Tensor& W = t.val(kernels);
  if (W.rank() != 3) throw DimensionError("conv1d: kernels must be {K,C,w}");
  if (stride < 1) throw ContractError("conv1d: stride must be >= 1");
  if (padding < 0) throw ContractError("conv1d: padding must be >= 0");
  int B, T, C;
  dims3(X, B, T, C);
  const int K = W.shape[0], w = W.shape[2];
  if (W.shape[1] != C)
    throw DimensionError("conv1d: kernel channels " + std::to_string(W.shape[1]) +
                         " do not match input channels " + std::to_string(C));
  if (w > T + 2 * padding)
    throw DimensionError("conv1d: kernel wider than padded input");
  const int To = (T + 2 * padding - w) / stride + 1;

  Node n;
  n.kind = OpKind::kConv1d;
  n.ins = {input.id, kernels.id};
  n.iaux = {stride, padding};
  n.out = X.rank() == 3 ? Tensor::zeros({B, To, K}) : Tensor::zeros({To, K});
  double* out = n.out.data.data();
  const double* x = X.data.data();
  const double* kw = W.data.data();
  for (int b = 0; b < B; ++b) {
    const double* xb = x + static_cast<std::size_t>(b) * T * C;
    double* ob = out + static_cast<std::size_t>(b) * To * K;
    for (int to = 0; to < To; ++to) {
      const int t0 = to * stride - padding;
      for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        const double* kk = kw + static_cast<std::size_t>(k) * C * w;
        for (int dw = 0; dw < w; ++dw) {
          const int ti = t0 + dw;
          if (ti < 0 || ti >= T) continue;
          const double* xrow = xb + static_cast<std::size_t>(ti) * C;
          for (int c = 0; c < C; ++c) acc += xrow[c] * kk[static_cast<std::size_t>(c) * w + dw];
        }
        ob[static_cast<std::size_t>(to) * K + k] = acc;
      }
    }
  }
  check_finite(n.out, "conv1d");
  return t.push(std::move(n));
}

Var max_pool2(Tape& t, Var x) {
  const Tensor& X = t.val(x);
  int B, T, C;
  dims3(X, B, T, C);
  const int To = T / 2;
  if (To < 1) throw DimensionError("max_pool2: time axis too short");
  Node n;
  n.kind = OpKind::kMaxPool2;
  n.ins = {x.id};
  n.out = X.rank() == 3 ? Tensor::zeros({B, To, C}) : Tensor::zeros({To, C});
  n.iaux.assign(static_cast<std::size_t>(B) * To * C, 0);
  const double* in = X.data.data();
  double* out = n.out.data.data();
  for (int b = 0; b < B; ++b)
    for (int to = 0; to < To; ++to)
      for (int c = 0; c < C; ++c) {
        const std::size_t i0 = (static_cast<std::size_t>(b) * T + 2 * to) * C + c;
        const std::size_t i1 = i0 + C;
        const std::size_t o = (static_cast<std::size_t>(b) * To + to) * C + c;
        if (in[i1] > in[i0]) {  // tie -> first element
          out[o] = in[i1];
          n.iaux[o] = 1;
        } else {
          out[o] = in[i0];
        }
      }
  return t.push(std::move(n));
}

Var global_avg_pool(Tape& t, Var x) {
  const Tensor& X = t.val(x);
  int B, T, C;
  dims3(X, B, T, C);
  Node n;
  n.kind = OpKind::kGlobalAvgPool;
  n.ins = {x.id};
  n.out = Tensor::zeros({B, C});
  const double* in = X.data.data();
  for (int b = 0; b < B; ++b)
    for (int tt = 0; tt < T; ++tt)
      for (int c = 0; c < C; ++c)
        n.out.at(b, c) += in[(static_cast<std::size_t>(b) * T + tt) * C + c];
  for (double& v : n.out.data) v /= T;
  check_finite(n.out, "global_avg_pool");
  return t.push(std::move(n));
}

Var dropout(Tape& t, Var a, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0,1)");
  if (!t.training || rate == 0.0) return a;  // eval mode: identity
  if (t.dropout_rng == nullptr)
    throw ContractError("dropout: training tape has no RNG attached");
  Node n;
  n.kind = OpKind::kDropout;
  n.ins = {a.id};
  n.daux = rate;
  const Tensor& A = t.val(a);
  n.aux = Tensor::zeros(A.shape);
  n.out = A;
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < n.out.data.size(); ++i) {
    const double m = t.dropout_rng->uniform() < rate ? 0.0 : 1.0 / keep;
    n.aux.data[i] = m;
    n.out.data[i] *= m;
  }
  return t.push(std::move(n));
}

Var softmax(Tape& t, Var logits) {
  const Tensor& L = t.val(logits);
  if (L.rank() != 2) throw DimensionError("softmax: expected rank-2 logits");
  Node n;
  n.kind = OpKind::kSoftmax;
  n.ins = {logits.id};
  n.out = L;
  for (int i = 0; i < L.rows(); ++i) {
    double mx = n.out.at(i, 0);
    for (int j = 1; j < L.cols(); ++j) mx = std::max(mx, n.out.at(i, j));
    double z = 0.0;
    for (int j = 0; j < L.cols(); ++j) {
      n.out.at(i, j) = std::exp(n.out.at(i, j) - mx);
      z += n.out.at(i, j);
    }
    for (int j = 0; j < L.cols(); ++j) n.out.at(i, j) /= z;
  }
  check_finite(n.out, "softmax");
  return t.push(std::move(n));
}

Var cross_entropy(Tape& t, Var logits, const std::vector<int>& targets) {
  const Tensor& L = t.val(logits);
  if (L.rank() != 2) throw DimensionError("cross_entropy: expected rank-2 logits");
  const int B = L.rows(), K = L.cols();
  if (static_cast<int>(targets.size()) != B)
    throw DimensionError("cross_entropy: one target per logits row required");
  Node n;
  n.kind = OpKind::kCrossEntropy;
  n.ins = {logits.id};
  n.aux = Tensor::zeros({B, K});  // softmax saved for backward
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    const int y = targets[i];
    if (y < 0 || y >= K)
      throw LabelError("cross_entropy: target class " + std::to_string(y) +
                       " out of range [0," + std::to_string(K) + ")");
    n.iaux.push_back(y);
    double mx = L.at(i, 0);
    for (int j = 1; j < K; ++j) mx = std::max(mx, L.at(i, j));
    double z = 0.0;
    for (int j = 0; j < K; ++j) z += std::exp(L.at(i, j) - mx);
    const double logz = std::log(z) + mx;
    total += logz - L.at(i, y);
    for (int j = 0; j < K; ++j) n.aux.at(i, j) = std::exp(L.at(i, j) - logz);
  }
  n.out = Tensor::scalar(total / B);
  check_finite(n.out, "cross_entropy");
  return t.push(std::move(n));
}

Var mse(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "mse");
  Node n;
  n.kind = OpKind::kMse;
  n.ins = {a.id, b.id};
  double acc = 0.0;
  for (std::size_t i = 0; i < A.data.size(); ++i) {
    const double d = A.data[i] - B.data[i];
    acc += d * d;
  }
  n.out = Tensor::scalar(acc / static_cast<double>(A.data.size()));
  check_finite(n.out, "mse");
  return t.push(std::move(n));
}

Var sum_all(Tape& t, Var a) {
  Node n;
  n.kind = OpKind::kSumAll;
  n.ins = {a.id};
  double acc = 0.0;
  for (double x : t.val(a).data) acc += x;
  n.out = Tensor::scalar(acc);
  check_finite(n.out, "sum_all");
  return t.push(std::move(n));
}

}  // namespace ops

std::pair<Var, Var> lstm_cell(Tape& t, Var x, Var h, Var c, const LstmWeights& w) {
  const Tensor& wxv = t.val(w.wx);
  if (wxv.rank() != 2 || wxv.cols() % 4 != 0)
    throw DimensionError("lstm_cell: wx must be {I,4H}");
  const int H = wxv.cols() / 4;
  const Tensor& hv = t.val(h);
  if (hv.rank() != 2 || hv.cols() != H)
    throw DimensionError("lstm_cell: h must be {B," + std::to_string(H) + "}");
  if (!t.val(c).same_shape(hv)) throw DimensionError("lstm_cell: c must match h");

  using namespace ops;
  Var gates = add_bias(t, add(t, matmul(t, x, w.wx), matmul(t, h, w.wh)), w.b);
  Var gi = sigmoid(t, slice_cols(t, gates, 0, H));
  Var gf = sigmoid(t, slice_cols(t, gates, H, 2 * H));
  Var gg = tanh(t, slice_cols(t, gates, 2 * H, 3 * H));
  Var go = sigmoid(t, slice_cols(t, gates, 3 * H, 4 * H));
  Var c_next = add(t, mul(t, gf, c), mul(t, gi, gg));
  Var h_next = mul(t, go, tanh(t, c_next));
  return {h_next, c_next};
}

void Tape::backward(Var root) {
  const int r = check(root);
  if (nodes_[r].out.numel() != 1)
    throw ContractError("backward: root must be scalar, got " +
                        nodes_[r].out.shape_str());

  // Fresh gradients every call; earlier results never leak in.
  std::vector<char> reach(r + 1, 0);
  reach[r] = 1;
  for (int i = r; i >= 0; --i) {
    if (!reach[i]) continue;
    for (int in : nodes_[i].ins) reach[in] = 1;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (static_cast<int>(i) <= r && reach[i])
      n.grad = Tensor::zeros(n.out.shape);
    else
      n.grad = Tensor();
  }
  nodes_[r].grad.data[0] = 1.0;

  for (int id = r; id >= 0; --id) {
    if (!reach[id]) continue;
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kParam:
        break;
      case OpKind::kMatMul: {
        const Tensor& A = nodes_[n.ins[0]].out;
        const Tensor& B = nodes_[n.ins[1]].out;
        gemm_acc_bt(g.data.data(), B.data.data(), nodes_[n.ins[0]].grad.data.data(),
                    A.rows(), A.cols(), B.cols());
        gemm_acc_at(A.data.data(), g.data.data(), nodes_[n.ins[1]].grad.data.data(),
                    A.rows(), A.cols(), B.cols());
        break;
      }
      case OpKind::kAdd: {
        for (int s = 0; s < 2; ++s) {
          Tensor& d = nodes_[n.ins[s]].grad;
          for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i];
        }
        break;
      }
      case OpKind::kAddBias: {
        Tensor& dm = nodes_[n.ins[0]].grad;
        Tensor& db = nodes_[n.ins[1]].grad;
        const int C = db.shape[0];
        const int rows = static_cast<int>(g.data.size()) / C;
        for (std::size_t i = 0; i < g.data.size(); ++i) dm.data[i] += g.data[i];
        for (int rr = 0; rr < rows; ++rr)
          for (int j = 0; j < C; ++j)
            db.data[j] += g.data[static_cast<std::size_t>(rr) * C + j];
        break;
      }
      case OpKind::kMul: {
        const Tensor& A = nodes_[n.ins[0]].out;
        const Tensor& B = nodes_[n.ins[1]].out;
        Tensor& da = nodes_[n.ins[0]].grad;
        Tensor& db = nodes_[n.ins[1]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          da.data[i] += g.data[i] * B.data[i];
          db.data[i] += g.data[i] * A.data[i];
        }
        break;
      }
      case OpKind::kScale: {
        Tensor& da = nodes_[n.ins[0]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
          da.data[i] += g.data[i] * n.daux;
        break;
      }
      case OpKind::kSigmoid: {
        Tensor& da = nodes_[n.ins[0]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.out.data[i];
          da.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
      }
      case OpKind::kTanh: {
        Tensor& da = nodes_[n.ins[0]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double y = n.out.data[i];
          da.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::kRelu: {
        const Tensor& X = nodes_[n.ins[0]].out;
        Tensor& da = nodes_[n.ins[0]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (X.data[i] > 0.0) da.data[i] += g.data[i];
        break;
      }
      case OpKind::kSliceCols: {
        Tensor& da = nodes_[n.ins[0]].grad;
        const int c0 = n.iaux[0], c1 = n.iaux[1];
        for (int i = 0; i < n.out.rows(); ++i)
          for (int j = c0; j < c1; ++j) da.at(i, j) += g.at(i, j - c0);
        break;
      }
      case OpKind::kTimeSlice: {
        Tensor& dx = nodes_[n.ins[0]].grad;
        const int step = n.iaux[0];
        const int B = n.out.rows(), C = n.out.cols();
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) dx.at3(b, step, c) += g.at(b, c);
        break;
      }
      case OpKind::kStackTime: {
        const int B = n.out.shape[0], C = n.out.shape[2];
        for (std::size_t s = 0; s < n.ins.size(); ++s) {
          Tensor& ds = nodes_[n.ins[s]].grad;
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
              ds.at(b, c) += g.at3(b, static_cast<int>(s), c);
        }
        break;
      }
      case OpKind::kFlatten: {
        Tensor& dx = nodes_[n.ins[0]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dx.data[i] += g.data[i];
        break;
      }
      case OpKind::kConv1d: {
        const Tensor& X = nodes_[n.ins[0]].out;
        const Tensor& W = nodes_[n.ins[1]].out;
        Tensor& dx = nodes_[n.ins[0]].grad;
        Tensor& dk = nodes_[n.ins[1]].grad;
        int B, T, C;
        dims3(X, B, T, C);
        const int K = W.shape[0], w = W.shape[2];
        const int To = n.out.rank() == 3 ? n.out.shape[1] : n.out.shape[0];
        const int stride = n.iaux[0], padding = n.iaux[1];
        for (int b = 0; b < B; ++b) {
          const double* xb = X.data.data() + static_cast<std::size_t>(b) * T * C;
          double* dxb = dx.data.data() + static_cast<std::size_t>(b) * T * C;
          const double* gb = g.data.data() + static_cast<std::size_t>(b) * To * K;
          for (int to = 0; to < To; ++to) {
            const int t0 = to * stride - padding;
            for (int k = 0; k < K; ++k) {
              const double gv = gb[static_cast<std::size_t>(to) * K + k];
              if (gv == 0.0) continue;
              const double* kk = W.data.data() + static_cast<std::size_t>(k) * C * w;
              double* dkk = dk.data.data() + static_cast<std::size_t>(k) * C * w;
              for (int dw = 0; dw < w; ++dw) {
                const int ti = t0 + dw;
                if (ti < 0 || ti >= T) continue;
                const double* xrow = xb + static_cast<std::size_t>(ti) * C;
                double* dxrow = dxb + static_cast<std::size_t>(ti) * C;
                for (int c = 0; c < C; ++c) {
                  dxrow[c] += gv * kk[static_cast<std::size_t>(c) * w + dw];
                  dkk[static_cast<std::size_t>(c) * w + dw] += gv * xrow[c];
                }
              }
            }
          }
        }
        break;
      }
      case OpKind::kMaxPool2: {
        const Tensor& X = nodes_[n.ins[0]].out;
        Tensor& dx = nodes_[n.ins[0]].grad;
        int B, T, C;
        dims3(X, B, T, C);
        const int To = T / 2;
        for (int b = 0; b < B; ++b)
          for (int to = 0; to < To; ++to)
            for (int c = 0; c < C; ++c) {
              const std::size_t o = (static_cast<std::size_t>(b) * To + to) * C + c;
              const std::size_t i0 =
                  (static_cast<std::size_t>(b) * T + 2 * to + n.iaux[o]) * C + c;
              dx.data[i0] += g.data[o];
            }
        break;
      }
      case OpKind::kGlobalAvgPool: {
        const Tensor& X = nodes_[n.ins[0]].out;
        Tensor& dx = nodes_[n.ins[0]].grad;
        int B, T, C;
        dims3(X, B, T, C);
        for (int b = 0; b < B; ++b)
          for (int tt = 0; tt < T; ++tt)
            for (int c = 0; c < C; ++c)
              dx.data[(static_cast<std::size_t>(b) * T + tt) * C + c] +=
                  g.at(b, c) / T;
        break;
      }
      case OpKind::kDropout: {
        Tensor& da = nodes_[n.ins[0]].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
          da.data[i] += g.data[i] * n.aux.data[i];
        break;
      }
      case OpKind::kSoftmax: {
        Tensor& da = nodes_[n.ins[0]].grad;
        const int R = n.out.rows(), C = n.out.cols();
        for (int i = 0; i < R; ++i) {
          double dot = 0.0;
          for (int j = 0; j < C; ++j) dot += g.at(i, j) * n.out.at(i, j);
          for (int j = 0; j < C; ++j)
            da.at(i, j) += n.out.at(i, j) * (g.at(i, j) - dot);
        }
        break;
      }
      case OpKind::kCrossEntropy: {
        Tensor& dl = nodes_[n.ins[0]].grad;
        const double gv = g.data[0];
        const int B = n.aux.rows(), K = n.aux.cols();
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < K; ++j) {
            double d = n.aux.at(i, j);
            if (j == n.iaux[i]) d -= 1.0;
            dl.at(i, j) += gv * d / B;
          }
        break;
      }
      case OpKind::kMse: {
        const Tensor& A = nodes_[n.ins[0]].out;
        const Tensor& B = nodes_[n.ins[1]].out;
        Tensor& da = nodes_[n.ins[0]].grad;
        Tensor& db = nodes_[n.ins[1]].grad;
        const double gv = g.data[0] * 2.0 / static_cast<double>(A.data.size());
        for (std::size_t i = 0; i < A.data.size(); ++i) {
          const double d = gv * (A.data[i] - B.data[i]);
          da.data[i] += d;
          db.data[i] -= d;
        }
        break;
      }
      case OpKind::kSumAll: {
        Tensor& da = nodes_[n.ins[0]].grad;
        const double gv = g.data[0];
        for (double& x : da.data) x += gv;
        break;
      }
    }
  }
}

double grad_check(const TensorProgram& program, const std::vector<Tensor>& inputs,
                  double eps) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

  auto run = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(ins.size());
    for (const Tensor& t : ins) vars.push_back(tape.leaf(t));
    Var root = program(tape, vars);
    if (tape.val(root).numel() != 1)
      throw ContractError("grad_check: program must produce a scalar");
    return std::pair<Tape, Var>(std::move(tape), root);
  };

  auto [tape, root] = run(inputs);
  tape.backward(root);
  std::vector<Tensor> analytic;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor g = tape.grad_of(Var{static_cast<int>(i)});
    if (g.data.empty()) g = Tensor::zeros(inputs[i].shape);  // disconnected leaf
    analytic.push_back(std::move(g));
  }

  double max_rel = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad) continue;
    for (std::size_t c = 0; c < work[i].data.size(); ++c) {
      const double orig = work[i].data[c];
      double f_plus, f_minus;
      work[i].data[c] = orig + eps;
      {
        auto [tp, rp] = run(work);
        f_plus = tp.val(rp).item();
      }
      work[i].data[c] = orig - eps;
      {
        auto [tm, rm] = run(work);
        f_minus = tm.val(rm).item();
      }
      work[i].data[c] = orig;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw NumericError("grad_check: non-finite loss during finite differences");
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[i].data[c];
      const double rel =
          std::abs(numeric - a) / std::max({std::abs(numeric), std::abs(a), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace har
