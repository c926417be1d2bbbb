#include "har/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "har/model.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

constexpr double kEps = 1e-5;
constexpr double kThreshold = 1e-4;

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = rng.uniform(lo, hi);
  t.requires_grad = true;
  return t;
}

struct OpProbe {
  std::string name;
  std::function<double(Rng&)> run;  // one seeded check, returns max rel error
};

double check(const TensorProgram& program, std::vector<Tensor> inputs) {
  return grad_check(program, std::move(inputs), kEps);
}

std::vector<OpProbe> op_probes() {
  using namespace ops;
  std::vector<OpProbe> probes;

  probes.push_back({"matmul", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, matmul(t, v[0], v[1])));
    }, {rand_tensor({4, 5}, rng, -1, 1), rand_tensor({5, 3}, rng, -1, 1)});
  }});
  probes.push_back({"add", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, add(t, v[0], v[1])));
    }, {rand_tensor({3, 4}, rng, -1, 1), rand_tensor({3, 4}, rng, -1, 1)});
  }});
  probes.push_back({"add_bias", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, sigmoid(t, add_bias(t, v[0], v[1])));
    }, {rand_tensor({3, 4}, rng, -1, 1), rand_tensor({4}, rng, -1, 1)});
  }});
  probes.push_back({"mul", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, mul(t, v[0], v[1]));
    }, {rand_tensor({3, 4}, rng, -1, 1), rand_tensor({3, 4}, rng, -1, 1)});
  }});
  probes.push_back({"scale", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, scale(t, tanh(t, v[0]), -2.5));
    }, {rand_tensor({6}, rng, -1, 1)});
  }});
  probes.push_back({"sigmoid", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, sigmoid(t, v[0]));
    }, {rand_tensor({2, 7}, rng, -2, 2)});
  }});
  probes.push_back({"tanh", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, v[0]));
    }, {rand_tensor({2, 7}, rng, -2, 2)});
  }});
  probes.push_back({"relu", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, mul(t, relu(t, v[0]), relu(t, v[0])));
    }, {rand_tensor({3, 6}, rng, -1, 1)});
  }});
  probes.push_back({"slice_cols", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, slice_cols(t, v[0], 1, 4)));
    }, {rand_tensor({3, 5}, rng, -1, 1)});
  }});
  probes.push_back({"time_slice", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, add(t, time_slice(t, v[0], 0), time_slice(t, v[0], 3))));
    }, {rand_tensor({2, 5, 3}, rng, -1, 1)});
  }});
  probes.push_back({"stack_time", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      Var a = tanh(t, v[0]);
      return sum_all(t, mul(t, stack_time(t, {v[0], a, v[1]}),
                            stack_time(t, {v[1], v[1], a})));
    }, {rand_tensor({2, 3}, rng, -1, 1), rand_tensor({2, 3}, rng, -1, 1)});
  }});
  probes.push_back({"flatten", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, flatten(t, v[0])));
    }, {rand_tensor({2, 4, 3}, rng, -1, 1)});
  }});
  probes.push_back({"conv1d", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, conv1d(t, v[0], v[1], 2, 1)));
    }, {rand_tensor({2, 8, 3}, rng, -1, 1), rand_tensor({4, 3, 3}, rng, -1, 1)});
  }});
  probes.push_back({"max_pool2", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, max_pool2(t, v[0])));
    }, {rand_tensor({2, 6, 3}, rng, -1, 1)});
  }});
  probes.push_back({"global_avg_pool", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, tanh(t, global_avg_pool(t, v[0])));
    }, {rand_tensor({2, 6, 3}, rng, -1, 1)});
  }});
  probes.push_back({"softmax", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, mul(t, softmax(t, v[0]), v[1]));
    }, {rand_tensor({3, 5}, rng, -2, 2), rand_tensor({3, 5}, rng, -1, 1)});
  }});
  probes.push_back({"cross_entropy", [](Rng& rng) {
    std::vector<int> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(static_cast<int>(rng.below(5)));
    return check([targets](Tape& t, const std::vector<Var>& v) {
      return cross_entropy(t, v[0], targets);
    }, {rand_tensor({4, 5}, rng, -2, 2)});
  }});
  probes.push_back({"mse", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return mse(t, tanh(t, v[0]), v[1]);
    }, {rand_tensor({3, 4}, rng, -1, 1), rand_tensor({3, 4}, rng, -1, 1)});
  }});
  probes.push_back({"sum_all", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, v[0]);
    }, {rand_tensor({7}, rng, -1, 1)});
  }});
  probes.push_back({"lstm_cell", [](Rng& rng) {
    return check([](Tape& t, const std::vector<Var>& v) {
      LstmWeights w{v[0], v[1], v[2]};
      auto [h, c] = lstm_cell(t, v[3], v[4], v[5], w);
      return sum_all(t, mul(t, h, c));
    }, {rand_tensor({3, 12}, rng, -0.5, 0.5), rand_tensor({3, 12}, rng, -0.5, 0.5),
        rand_tensor({12}, rng, -0.5, 0.5), rand_tensor({2, 3}, rng, -1, 1),
        rand_tensor({2, 3}, rng, -0.5, 0.5), rand_tensor({2, 3}, rng, -0.5, 0.5)});
  }});
  probes.push_back({"linear_exactness", [](Rng& rng) {
    // Central differences are exact (up to rounding) for a linear map.
    return check([](Tape& t, const std::vector<Var>& v) {
      return sum_all(t, scale(t, v[0], 3.5));
    }, {rand_tensor({5}, rng, -1, 1)});
  }});
  return probes;
}

ModelSpec toy_arch_spec(ArchKind kind) {
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

bool fault_injection_self_test() {
  // A deliberately corrupted analytic gradient must trip the comparison;
  // proves the detector is not vacuously green.
  Rng rng(1234);
  Model m = build(toy_arch_spec(ArchKind::kDnn), 9);
  Tensor batch = Tensor::zeros({2, 12, 2});
  for (double& x : batch.data) x = rng.uniform(-1.0, 1.0);
  const std::vector<int> labels = {0, 1};

  Tape tape;
  ModelOutput out = m.forward(tape, batch, false);
  tape.backward(model_loss(tape, m, out, labels));
  Parameter& victim = m.params.front();
  Tensor grads = tape.param_grad(victim);

  // Find a coordinate that carries signal and corrupt its "rule" by 1.5x.
  std::size_t idx = 0;
  for (std::size_t i = 0; i < grads.data.size(); ++i)
    if (std::abs(grads.data[i]) > std::abs(grads.data[idx])) idx = i;
  const double corrupted = grads.data[idx] * 1.5;

  auto loss_value = [&]() {
    Tape t2;
    ModelOutput o2 = m.forward(t2, batch, false);
    return t2.val(model_loss(t2, m, o2, labels)).item();
  };
  const double orig = victim.value.data[idx];
  victim.value.data[idx] = orig + kEps;
  const double fp = loss_value();
  victim.value.data[idx] = orig - kEps;
  const double fm = loss_value();
  victim.value.data[idx] = orig;
  const double numeric = (fp - fm) / (2.0 * kEps);
  const double rel = std::abs(numeric - corrupted) /
                     std::max({std::abs(numeric), std::abs(corrupted), 1e-8});
  return rel > kThreshold;
}

}  // namespace

GradCheckReport run_gradcheck(int seeds) {
  GradCheckReport report;
  report.all_pass = true;

  for (const OpProbe& probe : op_probes()) {
    GradCheckLine line;
    line.name = "op/" + probe.name;
    for (int s = 1; s <= seeds; ++s) {
      Rng rng(static_cast<std::uint64_t>(s) * 7919 + 17);
      line.max_rel_error = std::max(line.max_rel_error, probe.run(rng));
    }
    line.pass = line.max_rel_error <
                (probe.name == "linear_exactness" ? 1e-9 : kThreshold);
    report.all_pass = report.all_pass && line.pass;
    report.lines.push_back(std::move(line));
  }

  for (ArchKind kind : all_arch_kinds()) {
    GradCheckLine line;
    line.name = std::string("arch/") + arch_token(kind);
    for (int s = 1; s <= seeds; ++s) {
      Rng rng(static_cast<std::uint64_t>(s) * 104729 + 3);
      Model m = build(toy_arch_spec(kind), static_cast<std::uint64_t>(s));
      Tensor batch = Tensor::zeros({2, 12, 2});
      for (double& x : batch.data) x = rng.uniform(-1.0, 1.0);
      std::vector<int> labels = {static_cast<int>(rng.below(3)),
                                 static_cast<int>(rng.below(3))};
      line.max_rel_error =
          std::max(line.max_rel_error, grad_check_model(m, batch, labels, kEps));
    }
    line.pass = line.max_rel_error < kThreshold;
    report.all_pass = report.all_pass && line.pass;
    report.lines.push_back(std::move(line));
  }

  report.fault_injection_detected = fault_injection_self_test();
  report.all_pass = report.all_pass && report.fault_injection_detected;
  return report;
}

}  // namespace har
