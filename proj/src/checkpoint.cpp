#include "har/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace har {

namespace {

constexpr char kMagic[] = "HARCKPT1\n";

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw IoError("checkpoint format requires a little-endian host");
}

template <typename T>
void put_field(nlohmann::ordered_json& j, const char* key, const T& v) {
  j[key] = v;
}

}  // namespace

nlohmann::ordered_json spec_to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  put_field(j, "kind", arch_token(spec.kind));
  put_field(j, "input_width", spec.input_width);
  put_field(j, "input_channels", spec.input_channels);
  put_field(j, "n_classes", spec.n_classes);
  put_field(j, "dropout", spec.dropout);
  put_field(j, "dense_widths", spec.dense_widths);
  put_field(j, "conv_channels", spec.conv_channels);
  put_field(j, "conv_kernels", spec.conv_kernels);
  put_field(j, "cnn_dense_width", spec.cnn_dense_width);
  put_field(j, "lstm_widths", spec.lstm_widths);
  put_field(j, "encoder_widths", spec.encoder_widths);
  put_field(j, "decoder_widths", spec.decoder_widths);
  put_field(j, "recon_weight", spec.recon_weight);
  return j;
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.kind = arch_from_token(j.at("kind").get<std::string>());
  if (j.contains("input_width")) spec.input_width = j.at("input_width").get<int>();
  if (j.contains("input_channels"))
    spec.input_channels = j.at("input_channels").get<int>();
  if (j.contains("n_classes")) spec.n_classes = j.at("n_classes").get<int>();
  if (j.contains("dropout")) spec.dropout = j.at("dropout").get<double>();
  if (j.contains("dense_widths"))
    spec.dense_widths = j.at("dense_widths").get<std::vector<int>>();
  if (j.contains("conv_channels"))
    spec.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  if (j.contains("conv_kernels"))
    spec.conv_kernels = j.at("conv_kernels").get<std::vector<int>>();
  if (j.contains("cnn_dense_width"))
    spec.cnn_dense_width = j.at("cnn_dense_width").get<int>();
  if (j.contains("lstm_widths"))
    spec.lstm_widths = j.at("lstm_widths").get<std::vector<int>>();
  if (j.contains("encoder_widths"))
    spec.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  if (j.contains("decoder_widths"))
    spec.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
  if (j.contains("recon_weight")) spec.recon_weight = j.at("recon_weight").get<double>();
  spec.validate();
  return spec;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  require_little_endian();
  nlohmann::ordered_json header;
  header["spec"] = spec_to_json(model.spec);
  header["params"] = nlohmann::ordered_json::array();
  for (const Parameter& p : model.params) {
    nlohmann::ordered_json pj;
    pj["name"] = p.name;
    pj["shape"] = p.value.shape;
    header["params"].push_back(std::move(pj));
  }
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic) - 1);
  const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const Parameter& p : model.params)
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());

  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw DataError("load_checkpoint: bad magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), len);
  if (!in) throw DataError("load_checkpoint: truncated header in " + path.string());

  nlohmann::json header = nlohmann::json::parse(header_text);
  Model model = build(spec_from_json(header.at("spec")), 0);

  const auto& manifest = header.at("params");
  if (manifest.size() != model.params.size())
    throw DataError("load_checkpoint: parameter manifest size mismatch");
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    Parameter& p = model.params[i];
    if (manifest[i].at("name").get<std::string>() != p.name ||
        manifest[i].at("shape").get<std::vector<int>>() != p.value.shape)
      throw DataError("load_checkpoint: manifest mismatch at " + p.name);
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  }
  if (!in) throw DataError("load_checkpoint: truncated parameter data");
  char extra;
  if (in.read(&extra, 1)) throw DataError("load_checkpoint: trailing bytes");
  return model;
}

}  // namespace har
