#pragma once

#include <filesystem>

#include <json.hpp>

#include "har/model.hpp"

namespace har {

nlohmann::ordered_json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// Binary checkpoint: magic line, JSON header (spec + parameter manifest),
/// then raw little-endian doubles in declaration order. Round trips are
/// bit-exact.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace har
