#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "har/checkpoint.hpp"
#include "har/model.hpp"
#include "har/rng.hpp"

using namespace har;

namespace {

Tensor random_batch(int b, int w, int c, Rng& rng) {
  Tensor t = Tensor::zeros({b, w, c});
  for (double& x : t.data) x = rng.uniform(-1.0, 1.0);
  return t;
}

/// Small-but-complete spec for fast gradient checks.
ModelSpec toy_spec(ArchKind kind) {
  ModelSpec spec = default_spec(kind, 12, 2, 3);
  spec.dense_widths = {6, 5};
  spec.conv_channels = kind == ArchKind::kCnn ? std::vector<int>{4, 5} : std::vector<int>{4};
  spec.conv_kernels = kind == ArchKind::kCnn ? std::vector<int>{3, 2} : std::vector<int>{3};
  spec.cnn_dense_width = 5;
  spec.lstm_widths = kind == ArchKind::kLstm ? std::vector<int>{5, 4} : std::vector<int>{5};
  spec.encoder_widths = {5, 4, 3};
  spec.decoder_widths = {4, 5, 5};
  spec.dropout = 0.0;
  return spec;
}

}  // namespace

TEST_CASE("dnn parameter count matches the closed form") {
  ModelSpec spec = default_spec(ArchKind::kDnn, 100, 28, 8);
  Model m = build(spec, 1);
  const long long expected = 2800LL * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 +
                             64 * 8 + 8;
  CHECK(m.param_count() == expected);
  CHECK(expected == 758728);
}

TEST_CASE("single dense layer 4->8 with bias has 40 parameters") {
  ModelSpec spec = default_spec(ArchKind::kDnn, 2, 2, 8);
  spec.dense_widths = {8};
  Model m = build(spec, 1);
  // flatten 4 -> dense 8 -> head 8 -> 8
  CHECK(m.params[0].value.numel() + m.params[1].value.numel() == 40);
}

TEST_CASE("lstm layer parameter count matches 4*(H*(I+H)+H)") {
  ModelSpec spec = default_spec(ArchKind::kLstm, 100, 28, 8);
  spec.lstm_widths = {128};
  Model m = build(spec, 1);
  long long lstm_params = 0;
  for (const Parameter& p : m.params)
    if (p.name.rfind("lstm0.", 0) == 0) lstm_params += p.value.numel();
  CHECK(lstm_params == 4 * (128 * (28 + 128) + 128));
  CHECK(lstm_params == 80384);
}

TEST_CASE("parameter count equals the flattened parameter vector length") {
  for (ArchKind kind : all_arch_kinds()) {
    Model m = build(toy_spec(kind), 3);
    long long total = 0;
    for (const Parameter& p : m.params) total += p.value.numel();
    CHECK(m.param_count() == total);
  }
}

TEST_CASE("default lstm-ae lands in the 600k..800k budget with 6 recurrent layers") {
  ModelSpec spec = default_spec(ArchKind::kLstmAe, 100, 28, 8);
  Model m = build(spec, 1);
  CHECK(m.param_count() >= 600000);
  CHECK(m.param_count() <= 800000);
  CHECK(spec.encoder_widths.size() + spec.decoder_widths.size() == 6);
  int recurrent_layers = 0;
  for (const Parameter& p : m.params)
    if (p.name.find(".wx") != std::string::npos) ++recurrent_layers;
  CHECK(recurrent_layers == 6);
}

TEST_CASE("zero-width layer is rejected") {
  ModelSpec spec = default_spec(ArchKind::kDnn);
  spec.dense_widths = {256, 0, 64};
  CHECK_THROWS_AS(build(spec, 1), ConfigError);
}

TEST_CASE("zero weights give uniform softmax and ln(K) loss") {
  Rng rng(5);
  for (ArchKind kind : all_arch_kinds()) {
    Model m = build(toy_spec(kind), 7);
    for (Parameter& p : m.params)
      for (double& v : p.value.data) v = 0.0;
    Tensor batch = random_batch(4, 12, 2, rng);
    Tape tape;
    ModelOutput out = m.forward(tape, batch, false);
    for (double v : tape.val(out.logits).data) CHECK(v == 0.0);
    Var loss = ops::cross_entropy(tape, out.logits, {0, 1, 2, 0});
    CHECK(tape.val(loss).item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("eval-mode forward is deterministic") {
  Rng rng(6);
  Model m = build(toy_spec(ArchKind::kLstmAe), 9);
  Tensor batch = random_batch(2, 12, 2, rng);
  Tape t1, t2;
  const Tensor l1 = t1.val(m.forward(t1, batch, false).logits);
  const Tensor l2 = t2.val(m.forward(t2, batch, false).logits);
  CHECK(l1.data == l2.data);
}

TEST_CASE("rows are independent of the rest of the batch") {
  Rng rng(8);
  for (ArchKind kind : all_arch_kinds()) {
    Model m = build(toy_spec(kind), 21);
    Tensor one = random_batch(1, 12, 2, rng);
    Tensor two = Tensor::zeros({2, 12, 2});
    for (int t = 0; t < 12; ++t)
      for (int c = 0; c < 2; ++c) {
        two.at3(0, t, c) = one.at3(0, t, c);
        two.at3(1, t, c) = one.at3(0, t, c);
      }
    Tape ta, tb;
    const Tensor la = ta.val(m.forward(ta, one, false).logits);
    const Tensor lb = tb.val(m.forward(tb, two, false).logits);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(la.at(0, j) - lb.at(0, j)) < 1e-12);
      CHECK(std::abs(la.at(0, j) - lb.at(1, j)) < 1e-12);
    }
  }
}

TEST_CASE("permuting batch rows permutes logits rows identically") {
  Rng rng(12);
  Model m = build(toy_spec(ArchKind::kCnn), 4);
  Tensor batch = random_batch(3, 12, 2, rng);
  Tensor permuted = Tensor::zeros({3, 12, 2});
  const int perm[3] = {2, 0, 1};
  for (int b = 0; b < 3; ++b)
    for (int t = 0; t < 12; ++t)
      for (int c = 0; c < 2; ++c) permuted.at3(b, t, c) = batch.at3(perm[b], t, c);
  Tape ta, tb;
  const Tensor la = ta.val(m.forward(ta, batch, false).logits);
  const Tensor lb = tb.val(m.forward(tb, permuted, false).logits);
  for (int b = 0; b < 3; ++b)
    for (int j = 0; j < 3; ++j) CHECK(lb.at(b, j) == la.at(perm[b], j));
}

TEST_CASE("reconstruction is present exactly for the autoencoder") {
  Rng rng(3);
  Tensor batch = random_batch(2, 12, 2, rng);
  for (ArchKind kind : all_arch_kinds()) {
    Model m = build(toy_spec(kind), 2);
    Tape tape;
    ModelOutput out = m.forward(tape, batch, false);
    CHECK(out.has_reconstruction() == (kind == ArchKind::kLstmAe));
    if (out.has_reconstruction())
      CHECK(tape.val(out.reconstruction).shape == std::vector<int>{2, 12, 2});
  }
}

TEST_CASE("forward rejects a batch that does not match the spec") {
  Model m = build(toy_spec(ArchKind::kDnn), 2);
  Tape tape;
  CHECK_THROWS_AS(m.forward(tape, Tensor::zeros({2, 10, 2}), false), DimensionError);
}

TEST_CASE("every architecture passes a full-loss gradient check at toy widths") {
  Rng rng(14);
  for (ArchKind kind : all_arch_kinds()) {
    Model m = build(toy_spec(kind), 31);
    Tensor batch = random_batch(2, 12, 2, rng);
    const double err = grad_check_model(m, batch, {0, 2}, 1e-5);
    CHECK_MESSAGE(err < 1e-4, arch_token(kind), " grad error ", err);
  }
}

TEST_CASE("lambda 0 autoencoder reduces to an encoder-classifier") {
  ModelSpec spec = toy_spec(ArchKind::kLstmAe);
  spec.recon_weight = 0.0;
  Model m = build(spec, 11);
  Rng rng(15);
  Tensor batch = random_batch(2, 12, 2, rng);
  Tape tape;
  ModelOutput out = m.forward(tape, batch, false);
  tape.backward(model_loss(tape, m, out, {0, 1}));
  for (const Parameter& p : m.params) {
    const bool decoder_side =
        p.name.rfind("dec", 0) == 0 || p.name.rfind("proj", 0) == 0;
    const Tensor g = tape.param_grad(p);
    double norm = 0.0;
    for (double v : g.data) norm += std::abs(v);
    if (decoder_side)
      CHECK(norm == 0.0);
    else
      CHECK(norm > 0.0);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "har_model.ckpt";
  Model m = build(toy_spec(ArchKind::kLstmAe), 77);
  save_checkpoint(m, path);
  Model loaded = load_checkpoint(path);
  CHECK(loaded.spec.kind == m.spec.kind);
  REQUIRE(loaded.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(loaded.params[i].name == m.params[i].name);
    CHECK(loaded.params[i].value.data == m.params[i].value.data);
  }

  // Same logits after reload.
  Rng rng(1);
  Tensor batch = random_batch(2, 12, 2, rng);
  Tape ta, tb;
  CHECK(ta.val(m.forward(ta, batch, false).logits).data ==
        tb.val(loaded.forward(tb, batch, false).logits).data);
  fs::remove(path);
}

TEST_CASE("checkpoint rejects corrupted files") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "har_model_bad.ckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  fs::remove(path);
}
