#pragma once

#include <cstdint>
#include <string>

#include "psvae/adam.hpp"

namespace psvae {

struct CheckpointMeta {
  std::string config_hash;
  int epoch = 0;
};

// Named-parameter archive: magic, length-prefixed JSON header (names, shapes,
// offsets, config hash, epoch), then raw little-endian f32 payload.
void save_checkpoint(const std::string& path, const ParameterStore<float>& params,
                     const CheckpointMeta& meta);

CheckpointMeta load_checkpoint(const std::string& path, ParameterStore<float>& params);

// Reads only the header.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace psvae
