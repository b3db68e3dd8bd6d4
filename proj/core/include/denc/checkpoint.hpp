#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "denc/tensor.hpp"

namespace denc {

using ParamMap = std::map<std::string, TensorF>;

// Checkpoint file layout (all integers little-endian):
//   bytes 0..3   magic "DENC"
//   u32          format version (currently 1)
//   u32          metadata length, then that many bytes of UTF-8 JSON
//   u64          record count
//   records:     u32 name length, name bytes,
//                u32 rank, rank * i64 dims,
//                numel * f32 raw values
// Records are sorted by name. Metadata is free-form JSON supplied by the
// caller (model config and the like).
inline constexpr uint32_t kCheckpointVersion = 1;

void save_params(const std::string& path, const ParamMap& params, const std::string& meta_json);

struct LoadedParams {
  ParamMap params;
  std::string meta_json;
};

// Throws std::runtime_error on bad magic, unsupported version, or truncation.
LoadedParams load_params(const std::string& path);

// FNV-1a over name/shape/value bytes of every record in map (= name) order.
// Stable fingerprint of a parameter set; used to tie an index to the encoder
// that produced it.
uint64_t params_hash(const ParamMap& params);

}  // namespace denc
