#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "har/autodiff.hpp"
#include "har/rng.hpp"
#include "har/tensor.hpp"

using namespace har;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

// Test-side oracle: straightforward triple loop, independent of the engine.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::zeros({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

// Test-side oracle: direct cross-correlation, triple loop over (t', k, taps).
Tensor naive_conv1d(const Tensor& x, const Tensor& ker, int stride, int pad) {
  const int T = x.shape[0], C = x.shape[1];
  const int K = ker.shape[0], w = ker.shape[2];
  const int To = (T + 2 * pad - w) / stride + 1;
  Tensor out = Tensor::zeros({To, K});
  for (int to = 0; to < To; ++to)
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int dw = 0; dw < w; ++dw)
        for (int c = 0; c < C; ++c) {
          const int ti = to * stride - pad + dw;
          if (ti < 0 || ti >= T) continue;
          acc += x.at(ti, c) * ker.data[(static_cast<std::size_t>(k) * C + c) * w + dw];
        }
      out.at(to, k) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tape t;
  Var eye = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  Var a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = t.leaf(Tensor({2, 2}, {5, 6, 7, 8}));

  const Tensor& ia = t.val(ops::matmul(t, eye, a));
  CHECK(ia.data == std::vector<double>{1, 2, 3, 4});

  const Tensor& ab = t.val(ops::matmul(t, a, b));
  CHECK(ab.data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch raises dimension error") {
  Tape t;
  Var a = t.leaf(Tensor::zeros({2, 3}));
  Var b = t.leaf(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(ops::matmul(t, a, b), DimensionError);
}

TEST_CASE("matmul matches naive loop oracle") {
  Rng rng(11);
  for (int it = 0; it < 10; ++it) {
    Tensor a = random_tensor({5, 7}, rng);
    Tensor b = random_tensor({7, 4}, rng);
    Tape t;
    const Tensor& got = t.val(ops::matmul(t, t.leaf(a), t.leaf(b)));
    Tensor want = naive_matmul(a, b);
    for (std::size_t i = 0; i < want.data.size(); ++i)
      CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
  }
}

TEST_CASE("gradient of sum(A*B) wrt A matches finite differences") {
  Rng rng(42);
  Tensor a = random_tensor({3, 3}, rng);
  a.requires_grad = true;
  Tensor b = random_tensor({3, 3}, rng);
  const double err = grad_check(
      [](Tape& t, const std::vector<Var>& v) {
        return ops::sum_all(t, ops::matmul(t, v[0], v[1]));
      },
      {a, b}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("conv1d constant signal and impulse response") {
  Tape t;
  Var x = t.leaf(Tensor::full({5, 1}, 1.0));
  Var k = t.leaf(Tensor({1, 1, 3}, {1, 1, 1}));
  const Tensor& y = t.val(ops::conv1d(t, x, k, 1, 0));
  CHECK(y.shape == std::vector<int>{3, 1});
  CHECK(y.data == std::vector<double>{3, 3, 3});

  // Cross-correlation of a delta reverses the kernel.
  Var d = t.leaf(Tensor({5, 1}, {0, 0, 1, 0, 0}));
  Var k2 = t.leaf(Tensor({1, 1, 3}, {1, 2, 3}));
  const Tensor& y2 = t.val(ops::conv1d(t, d, k2, 1, 0));
  CHECK(y2.data == std::vector<double>{3, 2, 1});
}

TEST_CASE("conv1d matches naive triple-loop oracle") {
  Rng rng(7);
  Tensor x = random_tensor({10, 3}, rng);
  Tensor k = random_tensor({4, 3, 3}, rng);
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      Tape t;
      const Tensor& got = t.val(ops::conv1d(t, t.leaf(x), t.leaf(k), stride, pad));
      Tensor want = naive_conv1d(x, k, stride, pad);
      REQUIRE(got.shape == want.shape);
      for (std::size_t i = 0; i < want.data.size(); ++i)
        CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
    }
}

TEST_CASE("conv1d kernel wider than padded input raises") {
  Tape t;
  Var x = t.leaf(Tensor::zeros({3, 1}));
  Var k = t.leaf(Tensor::zeros({1, 1, 5}));
  CHECK_THROWS_AS(ops::conv1d(t, x, k, 1, 0), DimensionError);
}

TEST_CASE("conv1d gradients match finite differences") {
  Rng rng(19);
  Tensor x = random_tensor({8, 2}, rng);
  x.requires_grad = true;
  Tensor k = random_tensor({3, 2, 3}, rng);
  k.requires_grad = true;
  const double err = grad_check(
      [](Tape& t, const std::vector<Var>& v) {
        return ops::sum_all(t, ops::tanh(t, ops::conv1d(t, v[0], v[1], 1, 1)));
      },
      {x, k}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("lstm_cell zero weights give zero state") {
  const int I = 3, H = 4;
  Tape t;
  LstmWeights w{t.leaf(Tensor::zeros({I, 4 * H})), t.leaf(Tensor::zeros({H, 4 * H})),
                t.leaf(Tensor::zeros({4 * H}))};
  Var x = t.leaf(Tensor::zeros({1, I}));
  Var h = t.leaf(Tensor::zeros({1, H}));
  Var c = t.leaf(Tensor::zeros({1, H}));
  auto [h2, c2] = lstm_cell(t, x, h, c, w);
  for (double v : t.val(h2).data) CHECK(v == 0.0);
  for (double v : t.val(c2).data) CHECK(v == 0.0);

  // Forget-gate bias alone cannot revive a zero candidate and zero history.
  Tensor bias = Tensor::zeros({4 * H});
  for (int j = H; j < 2 * H; ++j) bias.data[j] = 1.5;
  LstmWeights wb{t.leaf(Tensor::zeros({I, 4 * H})), t.leaf(Tensor::zeros({H, 4 * H})),
                 t.leaf(bias)};
  auto [h3, c3] = lstm_cell(t, x, h, c, wb);
  for (double v : t.val(c3).data) CHECK(v == 0.0);
  for (double v : t.val(h3).data) CHECK(v == 0.0);
}

TEST_CASE("lstm_cell gradients match finite differences for every weight") {
  const int I = 3, H = 4, B = 2;
  Rng rng(23);
  Tensor wx = random_tensor({I, 4 * H}, rng, -0.5, 0.5);
  Tensor wh = random_tensor({H, 4 * H}, rng, -0.5, 0.5);
  Tensor b = random_tensor({4 * H}, rng, -0.5, 0.5);
  Tensor x = random_tensor({B, I}, rng);
  Tensor h = random_tensor({B, H}, rng, -0.5, 0.5);
  Tensor c = random_tensor({B, H}, rng, -0.5, 0.5);
  wx.requires_grad = wh.requires_grad = b.requires_grad = true;
  x.requires_grad = h.requires_grad = c.requires_grad = true;
  const double err = grad_check(
      [](Tape& t, const std::vector<Var>& v) {
        LstmWeights w{v[0], v[1], v[2]};
        auto [hn, cn] = lstm_cell(t, v[3], v[4], v[5], w);
        return ops::sum_all(t, hn);
      },
      {wx, wh, b, x, h, c}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("cross entropy of uniform logits is ln(n_classes)") {
  Tape t;
  Var logits = t.leaf(Tensor::full({1, 8}, 0.7));
  const double loss = t.val(ops::cross_entropy(t, logits, {3})).item();
  CHECK(loss == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("mse of identical tensors is zero") {
  Tape t;
  Tensor x = Tensor({2, 2}, {1, 2, 3, 4});
  CHECK(t.val(ops::mse(t, t.leaf(x), t.leaf(x))).item() == 0.0);
}

TEST_CASE("cross entropy matches naive softmax-then-log oracle") {
  Rng rng(3);
  for (int it = 0; it < 5; ++it) {
    Tensor logits = random_tensor({4, 6}, rng, -3.0, 3.0);
    std::vector<int> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(static_cast<int>(rng.below(6)));
    Tape t;
    const double got = t.val(ops::cross_entropy(t, t.leaf(logits), targets)).item();
    double want = 0.0;
    for (int i = 0; i < 4; ++i) {
      double z = 0.0;
      for (int j = 0; j < 6; ++j) z += std::exp(logits.at(i, j));
      want += -std::log(std::exp(logits.at(i, targets[i])) / z);
    }
    want /= 4.0;
    CHECK(std::abs(got - want) < 1e-12);
  }
}

TEST_CASE("cross entropy rejects out-of-range target") {
  Tape t;
  Var logits = t.leaf(Tensor::zeros({1, 4}));
  CHECK_THROWS_AS(ops::cross_entropy(t, logits, {4}), LabelError);
}

TEST_CASE("softmax rows sum to one and cross entropy is non-negative") {
  Rng rng(17);
  for (int it = 0; it < 10; ++it) {
    Tensor logits = random_tensor({5, 8}, rng, -10.0, 10.0);
    Tape t;
    const Tensor& p = t.val(ops::softmax(t, t.leaf(logits)));
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += p.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    std::vector<int> targets(5, it % 8);
    Tape t2;
    CHECK(t2.val(ops::cross_entropy(t2, t2.leaf(logits), targets)).item() >= 0.0);
  }
}

TEST_CASE("backward on sum of squares gives analytic gradient") {
  Tape t;
  Tensor x({2}, {1, 2});
  Var xv = t.leaf(x);
  Var root = ops::sum_all(t, ops::mul(t, xv, xv));
  t.backward(root);
  CHECK(t.grad_of(xv).data == std::vector<double>{2, 4});
}

TEST_CASE("unused parameter has zero gradient") {
  Parameter used{"used", Tensor({1, 2}, {1.0, 2.0})};
  Parameter unused{"unused", Tensor({1, 2}, {3.0, 4.0})};
  Tape t;
  Var u = t.param(used);
  t.param(unused);
  t.backward(ops::sum_all(t, u));
  CHECK(t.param_grad(used).data == std::vector<double>{1, 1});
  CHECK(t.param_grad(unused).data == std::vector<double>{0, 0});
}

TEST_CASE("backward rejects non-scalar root") {
  Tape t;
  Var x = t.leaf(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("backward twice yields identical gradients") {
  Rng rng(5);
  Tensor x = random_tensor({3, 3}, rng);
  Tensor w = random_tensor({3, 2}, rng);
  Tape t;
  Var xv = t.leaf(x);
  Var wv = t.leaf(w);
  Var root = ops::sum_all(t, ops::sigmoid(t, ops::matmul(t, xv, wv)));
  t.backward(root);
  const Tensor g1 = t.grad_of(wv);
  t.backward(root);
  const Tensor g2 = t.grad_of(wv);
  CHECK(g1.data == g2.data);
}

TEST_CASE("composite dense network gradients match finite differences") {
  Rng rng(31);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor w1 = random_tensor({6, 5}, rng, -0.5, 0.5);
  Tensor b1 = random_tensor({5}, rng, -0.5, 0.5);
  Tensor w2 = random_tensor({5, 3}, rng, -0.5, 0.5);
  Tensor b2 = random_tensor({3}, rng, -0.5, 0.5);
  w1.requires_grad = b1.requires_grad = w2.requires_grad = b2.requires_grad = true;
  const double err = grad_check(
      [](Tape& t, const std::vector<Var>& v) {
        Var h = ops::relu(t, ops::add_bias(t, ops::matmul(t, v[0], v[1]), v[2]));
        Var logits = ops::add_bias(t, ops::matmul(t, h, v[3]), v[4]);
        return ops::cross_entropy(t, logits, {0, 1, 2, 0});
      },
      {x, w1, b1, w2, b2}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check is near-exact for a linear function") {
  Rng rng(13);
  Tensor x = random_tensor({4}, rng);
  x.requires_grad = true;
  const double err = grad_check(
      [](Tape& t, const std::vector<Var>& v) {
        return ops::sum_all(t, ops::scale(t, v[0], 3.5));
      },
      {x}, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check rejects eps = 0") {
  Tensor x({1}, {1.0});
  x.requires_grad = true;
  CHECK_THROWS_AS(grad_check([](Tape& t, const std::vector<Var>& v) {
                    return ops::sum_all(t, v[0]);
                  },
                             {x}, 0.0),
                  ContractError);
}

TEST_CASE("every primitive op passes finite-difference checks on 10 seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng, -0.5, 0.5);
    Tensor b = random_tensor({4}, rng, -0.5, 0.5);
    Tensor x3 = random_tensor({2, 6, 3}, rng);
    Tensor k = random_tensor({2, 3, 3}, rng, -0.5, 0.5);
    x.requires_grad = w.requires_grad = b.requires_grad = true;
    x3.requires_grad = k.requires_grad = true;

    const double e1 = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          Var y = ops::add_bias(t, ops::matmul(t, v[0], v[1]), v[2]);
          Var s = ops::mul(t, ops::sigmoid(t, y), ops::tanh(t, y));
          Var r = ops::relu(t, ops::slice_cols(t, s, 1, 4));
          Var p = ops::softmax(t, r);
          return ops::mse(t, p, ops::scale(t, r, 0.25));
        },
        {x, w, b}, 1e-5);
    CHECK_MESSAGE(e1 < 1e-4, "dense op chain, seed ", seed);

    const double e2 = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          Var c = ops::conv1d(t, v[0], v[1], 1, 1);
          Var p = ops::max_pool2(t, c);
          Var g = ops::global_avg_pool(t, p);
          Var f = ops::flatten(t, ops::stack_time(t, {g, g, ops::tanh(t, g)}));
          return ops::sum_all(t, ops::mul(t, f, f));
        },
        {x3, k}, 1e-5);
    CHECK_MESSAGE(e2 < 1e-4, "conv op chain, seed ", seed);

    const double e3 = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          Var s0 = ops::time_slice(t, v[0], 0);
          Var s1 = ops::time_slice(t, v[0], 5);
          return ops::cross_entropy(t, ops::add(t, s0, s1), {0, 2});
        },
        {x3}, 1e-5);
    CHECK_MESSAGE(e3 < 1e-4, "slice op chain, seed ", seed);
  }
}

TEST_CASE("dropout is identity in eval mode and masks in train mode") {
  Rng rng(99);
  Tensor x = Tensor::full({4, 50}, 1.0);
  Tape eval_tape;
  Var xe = eval_tape.leaf(x);
  Var ye = ops::dropout(eval_tape, xe, 0.5);
  CHECK(ye.id == xe.id);  // no node recorded

  Tape train_tape;
  train_tape.training = true;
  train_tape.dropout_rng = &rng;
  Var yt = ops::dropout(train_tape, train_tape.leaf(x), 0.5);
  int zeros = 0;
  for (double v : train_tape.val(yt).data) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(2.0));  // inverted scaling by 1/(1-p)
  }
  CHECK(zeros > 50);
  CHECK(zeros < 150);
}

TEST_CASE("leaf rejects non-finite values") {
  Tape t;
  Tensor bad({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(t.leaf(bad), NumericError);
}
