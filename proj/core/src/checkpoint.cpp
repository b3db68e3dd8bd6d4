#include "denc/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "denc/serial.hpp"

namespace denc {

static const char kMagic[4] = {'D', 'E', 'N', 'C'};

void save_params(const std::string& path, const ParamMap& params, const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<uint32_t>(meta_json.size()));
  os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  write_u64(os, params.size());
  for (const auto& [name, t] : params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) write_i64(os, d);
    for (float v : t.data) write_f32(os, v);
  }
  if (!os) throw std::runtime_error("write failed for checkpoint: " + path);
}

LoadedParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("bad checkpoint magic in " + path + " (expected DENC)");
  }
  const uint32_t version = read_u32(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path);
  }
  LoadedParams out;
  const uint32_t meta_len = read_u32(is, "metadata length");
  out.meta_json.resize(meta_len);
  if (meta_len > 0 && !is.read(out.meta_json.data(), meta_len)) {
    throw std::runtime_error("truncated file while reading metadata of " + path);
  }
  const uint64_t count = read_u64(is, "record count");
  for (uint64_t r = 0; r < count; ++r) {
    const uint32_t name_len = read_u32(is, "record name length");
    std::string name(name_len, '\0');
    if (name_len > 0 && !is.read(name.data(), name_len)) {
      throw std::runtime_error("truncated file while reading record name in " + path);
    }
    const uint32_t rank = read_u32(is, "record rank");
    if (rank > 8) throw std::runtime_error("implausible tensor rank in " + path);
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = read_i64(is, "record dim");
    const int64_t n = TensorF::numel_of(shape);
    TensorF t(shape);
    for (int64_t i = 0; i < n; ++i) t.data[static_cast<size_t>(i)] = read_f32(is, "record data");
    if (!out.params.emplace(name, std::move(t)).second) {
      throw std::runtime_error("duplicate record '" + name + "' in " + path);
    }
  }
  return out;
}

uint64_t params_hash(const ParamMap& params) {
  Fnv1a h;
  for (const auto& [name, t] : params) {
    h.update_u32(static_cast<uint32_t>(name.size()));
    h.update(name);
    h.update_u32(static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) h.update_u64(static_cast<uint64_t>(d));
    for (float v : t.data) h.update_f32(v);
  }
  return h.value();
}

}  // namespace denc
