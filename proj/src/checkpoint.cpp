#include "vlmt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vlmt::model {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', 'L', 'M', 'T'};
constexpr uint32_t kFormatVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  write_u32(out, static_cast<uint32_t>(v));
  write_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ValidationError("checkpoint: truncated file " + path);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64(std::istream& in, const std::string& path) {
  uint64_t lo = read_u32(in, path);
  uint64_t hi = read_u32(in, path);
  return lo | (hi << 32);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  std::string header =
      json{{"format_version", kFormatVersion}, {"config", config.to_json()}}
          .dump();
  write_u32(out, static_cast<uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_u32(out, static_cast<uint32_t>(params.names().size()));
  for (const auto& name : params.names()) {
    const Tensor<float>& t = params.at(name);
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(kDtypeF32));
    out.put(static_cast<char>(t.ndim()));
    for (size_t d : t.shape()) write_u64(out, d);
    static_assert(sizeof(float) == 4);
    // Values are written verbatim; the build targets little-endian hosts.
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw ValidationError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint: cannot read " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("checkpoint: bad magic in " + path);
  }
  uint32_t version = read_u32(in, path);
  if (version != kFormatVersion) {
    throw ValidationError("checkpoint: unsupported format version " +
                          std::to_string(version));
  }
  uint32_t header_len = read_u32(in, path);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) {
    throw ValidationError("checkpoint: truncated header in " + path);
  }
  Checkpoint ckpt;
  try {
    json doc = json::parse(header);
    ckpt.config = ModelConfig::from_json(doc.at("config"));
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint: bad header: " + std::string(e.what()));
  }
  ckpt.config.validate();
  uint32_t n_tensors = read_u32(in, path);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw ValidationError("checkpoint: truncated tensor name in " + path);
    }
    int dtype = in.get();
    int rank = in.get();
    if (dtype != kDtypeF32 || rank < 0) {
      throw ValidationError("checkpoint: unsupported tensor encoding for '" +
                            name + "'");
    }
    Shape shape(static_cast<size_t>(rank));
    for (auto& d : shape) d = read_u64(in, path);
    size_t n = shape_numel(shape);
    std::vector<float> values(n);
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(n * sizeof(float)))) {
      throw ValidationError("checkpoint: truncated values for '" + name + "'");
    }
    ckpt.params.add(name, Tensor<float>(std::move(shape), std::move(values)));
  }
  // The tensor table must match the config exactly, in names and shapes.
  auto expected = param_shapes(ckpt.config);
  if (expected.size() != ckpt.params.names().size()) {
    throw ValidationError(
        "checkpoint: expected " + std::to_string(expected.size()) +
        " tensors, found " + std::to_string(ckpt.params.names().size()));
  }
  for (const auto& [name, shape] : expected) {
    if (!ckpt.params.contains(name)) {
      throw ValidationError("checkpoint: missing tensor '" + name + "'");
    }
    if (ckpt.params.at(name).shape() != shape) {
      throw ValidationError("checkpoint: tensor '" + name + "' shaped " +
                            shape_str(ckpt.params.at(name).shape()) +
                            ", config requires " + shape_str(shape));
    }
  }
  return ckpt;
}

}  // namespace vlmt::model
