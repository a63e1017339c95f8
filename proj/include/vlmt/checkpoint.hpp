#pragma once

#include <string>

#include "vlmt/model.hpp"
#include "vlmt/params.hpp"

namespace vlmt::model {

struct Checkpoint {
  ModelConfig config;
  ParamStore<float> params;
};

/// Binary checkpoint: "VLMT" magic, format version, JSON-encoded config,
/// then a named tensor table (name, dtype tag, shape, row-major
/// little-endian values). Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore<float>& params);

/// Loads and validates the tensor table against param_shapes(config).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vlmt::model
