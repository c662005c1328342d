#pragma once

#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "deta/adapt.hpp"

namespace deta {

// Everything `eval` needs from `adapt`: head, bank, final image weights and
// the config that produced them.
struct Model {
  AdaptConfig config;
  HeadParams head;
  MemoryBank bank;
  AccumulatorState accumulator;
};

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void write_model(const Model& model, const std::filesystem::path& path);
Model read_model(const std::filesystem::path& path);

}  // namespace deta
