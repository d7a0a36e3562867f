#pragma once

#include <filesystem>

#include "lano/keyvalue.hpp"
#include "lano/model.hpp"

namespace lano {

struct Checkpoint {
  ModelConfig config;
  KeyValue train_config;
  ModelParams<float> params;
};

/// POBW file: magic, version, model config text, train config text, then the
/// parameters in declaration order, each as a shape header and f32 values.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<float>& params,
                     const KeyValue& train_config = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lano
