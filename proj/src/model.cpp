#include "har/model.hpp"

#include <cmath>

namespace har {

std::vector<ArchKind> all_arch_kinds() {
  return {ArchKind::kDnn,     ArchKind::kCnn,  ArchKind::kCnnLstm,
          ArchKind::kLstmCnn, ArchKind::kLstm, ArchKind::kLstmAe};
}

const char* arch_token(ArchKind k) {
  switch (k) {
    case ArchKind::kDnn: return "dnn";
    case ArchKind::kCnn: return "cnn";
    case ArchKind::kCnnLstm: return "cnn_lstm";
    case ArchKind::kLstmCnn: return "lstm_cnn";
    case ArchKind::kLstm: return "lstm";
    case ArchKind::kLstmAe: return "lstm_ae";
  }
  return "?";
}

const char* arch_display(ArchKind k) {
  switch (k) {
    case ArchKind::kDnn: return "DNN";
    case ArchKind::kCnn: return "CNN";
    case ArchKind::kCnnLstm: return "CNN-LSTM";
    case ArchKind::kLstmCnn: return "LSTM-CNN";
    case ArchKind::kLstm: return "LSTM";
    case ArchKind::kLstmAe: return "LSTM-AE";
  }
  return "?";
}

ArchKind arch_from_token(const std::string& token) {
  for (ArchKind k : all_arch_kinds())
    if (token == arch_token(k)) return k;
  throw ConfigError("unknown architecture token: " + token);
}

void ModelSpec::validate() const {
  auto positive = [](const std::vector<int>& v, const char* what) {
    if (v.empty()) throw ConfigError(std::string("ModelSpec: ") + what + " is empty");
    for (int x : v)
      if (x <= 0)
        throw ConfigError(std::string("ModelSpec: ") + what + " entries must be positive");
  };
  if (input_width < 1 || input_channels < 1)
    throw ConfigError("ModelSpec: input shape must be positive");
  if (n_classes < 2) throw ConfigError("ModelSpec: need at least 2 classes");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("ModelSpec: dropout must lie in [0,1)");
  if (recon_weight < 0.0) throw ConfigError("ModelSpec: recon_weight must be >= 0");
  switch (kind) {
    case ArchKind::kDnn:
      positive(dense_widths, "dense_widths");
      break;
    case ArchKind::kCnn:
      positive(conv_channels, "conv_channels");
      positive(conv_kernels, "conv_kernels");
      if (conv_channels.size() != conv_kernels.size())
        throw ConfigError("ModelSpec: conv_channels and conv_kernels must pair up");
      if (cnn_dense_width <= 0) throw ConfigError("ModelSpec: cnn_dense_width must be positive");
      break;
    case ArchKind::kCnnLstm:
    case ArchKind::kLstmCnn:
      positive(conv_channels, "conv_channels");
      positive(conv_kernels, "conv_kernels");
      positive(lstm_widths, "lstm_widths");
      break;
    case ArchKind::kLstm:
      positive(lstm_widths, "lstm_widths");
      break;
    case ArchKind::kLstmAe:
      positive(encoder_widths, "encoder_widths");
      positive(decoder_widths, "decoder_widths");
      break;
  }
}

ModelSpec default_spec(ArchKind kind, int input_width, int input_channels, int n_classes) {
  ModelSpec spec;
  spec.kind = kind;
  spec.input_width = input_width;
  spec.input_channels = input_channels;
  spec.n_classes = n_classes;
  switch (kind) {
    case ArchKind::kCnn:
      spec.conv_channels = {64, 128};
      spec.conv_kernels = {5, 3};
      break;
    case ArchKind::kCnnLstm:
      spec.conv_channels = {64};
      spec.conv_kernels = {5};
      spec.lstm_widths = {128};
      break;
    case ArchKind::kLstmCnn:
      spec.conv_channels = {64};
      spec.conv_kernels = {3};
      spec.lstm_widths = {128};
      break;
    case ArchKind::kLstm:
      spec.lstm_widths = {128, 128};
      break;
    default:
      break;
  }
  return spec;
}

namespace {

/// Walks the topology once per call. In creation mode it registers freshly
/// initialized parameters; afterwards it consumes them in the same order, so
/// declaration order is the single source of truth for the checkpoint layout.
struct NetBuilder {
  Model& model;
  Tape& tape;
  Rng* init_rng = nullptr;  // non-null only while building
  std::size_t cursor = 0;

  bool creating() const { return init_rng != nullptr; }

  Parameter& declare(const std::string& name, std::vector<int> shape, int fan_in) {
    if (creating()) {
      Tensor value(shape);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : value.data) v = init_rng->uniform(-bound, bound);
      model.params.push_back(Parameter{name, std::move(value)});
      return model.params.back();
    }
    if (cursor >= model.params.size())
      throw ContractError("model forward: parameter list exhausted at " + name);
    Parameter& p = model.params[cursor++];
    if (p.name != name || p.value.shape != shape)
      throw ContractError("model forward: parameter mismatch at " + name);
    return p;
  }

  Var pvar(const std::string& name, std::vector<int> shape, int fan_in) {
    return tape.param(declare(name, std::move(shape), fan_in));
  }
};

Var dense(NetBuilder& nb, Var x, int in, int out, const std::string& prefix) {
  Var w = nb.pvar(prefix + ".w", {in, out}, in);
  Var b = nb.pvar(prefix + ".b", {out}, in);
  return ops::add_bias(nb.tape, ops::matmul(nb.tape, x, w), b);
}

Var conv_block(NetBuilder& nb, Var x, int in_ch, int out_ch, int width,
               const std::string& prefix) {
  Var k = nb.pvar(prefix + ".k", {out_ch, in_ch, width}, in_ch * width);
  Var b = nb.pvar(prefix + ".b", {out_ch}, in_ch * width);
  return ops::relu(nb.tape, ops::add_bias(nb.tape, ops::conv1d(nb.tape, x, k, 1, 0), b));
}

LstmWeights lstm_weights(NetBuilder& nb, int in, int hid, const std::string& prefix) {
  return LstmWeights{nb.pvar(prefix + ".wx", {in, 4 * hid}, in),
                     nb.pvar(prefix + ".wh", {hid, 4 * hid}, hid),
                     nb.pvar(prefix + ".b", {4 * hid}, hid)};
}

struct LstmRun {
  std::vector<Var> hidden_seq;
  Var last_hidden;
};

/// Runs one LSTM layer over a step sequence.
LstmRun lstm_layer(NetBuilder& nb, const std::vector<Var>& steps, int in, int hid,
                   const std::string& prefix) {
  LstmWeights w = lstm_weights(nb, in, hid, prefix);
  Tape& t = nb.tape;
  const int batch = t.val(steps[0]).rows();
  Var h = t.leaf(Tensor::zeros({batch, hid}));
  Var c = t.leaf(Tensor::zeros({batch, hid}));
  LstmRun run;
  run.hidden_seq.reserve(steps.size());
  for (Var x : steps) {
    auto [h2, c2] = lstm_cell(t, x, h, c, w);
    h = h2;
    c = c2;
    run.hidden_seq.push_back(h);
  }
  run.last_hidden = h;
  return run;
}

std::vector<Var> slice_steps(Tape& t, Var seq3) {
  const int T = t.val(seq3).shape[1];
  std::vector<Var> steps;
  steps.reserve(T);
  for (int i = 0; i < T; ++i) steps.push_back(ops::time_slice(t, seq3, i));
  return steps;
}

ModelOutput run_network(NetBuilder& nb, const Tensor& batch, bool training) {
  const ModelSpec& spec = nb.model.spec;
  Tape& t = nb.tape;
  t.training = training;

  Tensor input = batch;
  if (input.rank() == 2) input = Tensor({1, input.shape[0], input.shape[1]}, input.data);
  if (input.rank() != 3 || input.shape[1] != spec.input_width ||
      input.shape[2] != spec.input_channels)
    throw DimensionError("model forward: batch " + batch.shape_str() +
                         " does not match spec input {W=" + std::to_string(spec.input_width) +
                         ",C=" + std::to_string(spec.input_channels) + "}");

  ModelOutput out;
  out.input_leaf = t.leaf(std::move(input));
  const int W = spec.input_width;
  const int C = spec.input_channels;

  switch (spec.kind) {
    case ArchKind::kDnn: {
      Var x = ops::flatten(t, out.input_leaf);
      int in = W * C;
      for (std::size_t i = 0; i < spec.dense_widths.size(); ++i) {
        x = ops::relu(t, dense(nb, x, in, spec.dense_widths[i], "dense" + std::to_string(i)));
        x = ops::dropout(t, x, spec.dropout);
        in = spec.dense_widths[i];
      }
      out.logits = dense(nb, x, in, spec.n_classes, "head");
      break;
    }
    case ArchKind::kCnn: {
      Var x = out.input_leaf;
      int ch = C;
      for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
        x = conv_block(nb, x, ch, spec.conv_channels[i], spec.conv_kernels[i],
                       "conv" + std::to_string(i));
        x = ops::max_pool2(t, x);
        ch = spec.conv_channels[i];
      }
      Var g = ops::global_avg_pool(t, x);
      Var hdn = ops::relu(t, dense(nb, g, ch, spec.cnn_dense_width, "dense"));
      hdn = ops::dropout(t, hdn, spec.dropout);
      out.logits = dense(nb, hdn, spec.cnn_dense_width, spec.n_classes, "head");
      break;
    }
    case ArchKind::kCnnLstm: {
      Var x = conv_block(nb, out.input_leaf, C, spec.conv_channels[0],
                         spec.conv_kernels[0], "conv0");
      x = ops::max_pool2(t, x);
      LstmRun run = lstm_layer(nb, slice_steps(t, x), spec.conv_channels[0],
                               spec.lstm_widths[0], "lstm0");
      Var h = ops::dropout(t, run.last_hidden, spec.dropout);
      out.logits = dense(nb, h, spec.lstm_widths[0], spec.n_classes, "head");
      break;
    }
    case ArchKind::kLstmCnn: {
      LstmRun run =
          lstm_layer(nb, slice_steps(t, out.input_leaf), C, spec.lstm_widths[0], "lstm0");
      Var seq = ops::stack_time(t, run.hidden_seq);
      Var x = conv_block(nb, seq, spec.lstm_widths[0], spec.conv_channels[0],
                         spec.conv_kernels[0], "conv0");
      Var g = ops::global_avg_pool(t, x);
      g = ops::dropout(t, g, spec.dropout);
      out.logits = dense(nb, g, spec.conv_channels[0], spec.n_classes, "head");
      break;
    }
    case ArchKind::kLstm: {
      std::vector<Var> steps = slice_steps(t, out.input_leaf);
      int in = C;
      LstmRun run;
      for (std::size_t i = 0; i < spec.lstm_widths.size(); ++i) {
        run = lstm_layer(nb, steps, in, spec.lstm_widths[i], "lstm" + std::to_string(i));
        steps = run.hidden_seq;
        in = spec.lstm_widths[i];
      }
      Var h = ops::dropout(t, run.last_hidden, spec.dropout);
      out.logits = dense(nb, h, in, spec.n_classes, "head");
      break;
    }
    case ArchKind::kLstmAe: {
      std::vector<Var> steps = slice_steps(t, out.input_leaf);
      int in = C;
      LstmRun run;
      for (std::size_t i = 0; i < spec.encoder_widths.size(); ++i) {
        run = lstm_layer(nb, steps, in, spec.encoder_widths[i], "enc" + std::to_string(i));
        steps = run.hidden_seq;
        in = spec.encoder_widths[i];
      }
      Var latent = run.last_hidden;

      Var h = ops::dropout(t, latent, spec.dropout);
      out.logits = dense(nb, h, spec.latent_size(), spec.n_classes, "head");

      // Decoder sees the latent vector at every step and reconstructs the
      // window through a shared per-timestep projection.
      std::vector<Var> dec_steps(W, latent);
      in = spec.latent_size();
      for (std::size_t i = 0; i < spec.decoder_widths.size(); ++i) {
        run = lstm_layer(nb, dec_steps, in, spec.decoder_widths[i], "dec" + std::to_string(i));
        dec_steps = run.hidden_seq;
        in = spec.decoder_widths[i];
      }
      Var pw = nb.pvar("proj.w", {in, C}, in);
      Var pb = nb.pvar("proj.b", {C}, in);
      std::vector<Var> recon_steps;
      recon_steps.reserve(W);
      for (Var hstep : dec_steps)
        recon_steps.push_back(ops::add_bias(t, ops::matmul(t, hstep, pw), pb));
      out.reconstruction = ops::stack_time(t, recon_steps);
      break;
    }
  }
  if (!nb.creating() && nb.cursor != nb.model.params.size())
    throw ContractError("model forward: unused trailing parameters");
  return out;
}

}  // namespace

Model build(const ModelSpec& spec, std::uint64_t init_seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  Rng rng(init_seed);
  Tape probe;
  NetBuilder nb{m, probe, &rng, 0};
  // A one-window dry run registers every parameter and validates the wiring.
  run_network(nb, Tensor::zeros({1, spec.input_width, spec.input_channels}), false);
  return m;
}

ModelOutput Model::forward(Tape& tape, const Tensor& batch, bool training) {
  NetBuilder nb{*this, tape, nullptr, 0};
  return run_network(nb, batch, training);
}

long long Model::param_count() const {
  long long n = 0;
  for (const Parameter& p : params) n += p.value.numel();
  return n;
}

std::vector<Tensor> Model::snapshot_values() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter& p : params) out.push_back(p.value);
  return out;
}

void Model::restore_values(const std::vector<Tensor>& values) {
  if (values.size() != params.size())
    throw ContractError("restore_values: snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape != params[i].value.shape)
      throw ContractError("restore_values: shape mismatch at " + params[i].name);
    params[i].value = values[i];
  }
}

Var model_loss(Tape& tape, const Model& model, const ModelOutput& out,
               const std::vector<int>& labels) {
  Var loss = ops::cross_entropy(tape, out.logits, labels);
  if (out.has_reconstruction())
    loss = ops::add(tape, loss,
                    ops::scale(tape, ops::mse(tape, out.reconstruction, out.input_leaf),
                               model.spec.recon_weight));
  return loss;
}

double grad_check_model(Model& model, const Tensor& batch,
                        const std::vector<int>& labels, double eps) {
  if (eps <= 0.0) throw ContractError("grad_check_model: eps must be positive");

  // The checked scalar is the training loss times an exact power of two.
  // Central differences carry ~eps_mach*|f|/(2*eps) of rounding noise, so the
  // scalar must stay below ~0.2 for the 1e-8 denominator floor to absorb that
  // noise at the 1e-4 bound; the scaling is lossless for every gradient rule.
  constexpr double kScale = 1.0 / 64.0;

  auto loss_value = [&]() {
    Tape tape;
    ModelOutput out = model.forward(tape, batch, false);
    Var loss = ops::scale(tape, model_loss(tape, model, out, labels), kScale);
    return tape.val(loss).item();
  };

  Tape tape;
  ModelOutput out = model.forward(tape, batch, false);
  tape.backward(ops::scale(tape, model_loss(tape, model, out, labels), kScale));

  double max_rel = 0.0;
  for (Parameter& p : model.params) {
    const Tensor analytic = tape.param_grad(p);
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double orig = p.value.data[i];
      p.value.data[i] = orig + eps;
      const double f_plus = loss_value();
      p.value.data[i] = orig - eps;
      const double f_minus = loss_value();
      p.value.data[i] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic.data[i];
      const double rel =
          std::abs(numeric - a) / std::max({std::abs(numeric), std::abs(a), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace har
