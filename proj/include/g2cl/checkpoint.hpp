#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace g2cl {

namespace encoder {
class Encoder;
}

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// Training state archive.
//
// Layout: 8-byte magic "G2CLCKPT", uint32 format version, uint64 header
// length, a JSON header {config, epoch, optimizer_step, seed, tensors:[{name,
// shape, offset, count}]}, then the float32 little-endian tensor payload.
// Tensor names are stable: "param/<name>", "adam_m/<name>", "adam_v/<name>".
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json config;  // resolved configuration echo
  int epoch = 0;          // epochs completed
  std::int64_t optimizer_step = 0;
  std::uint64_t seed = 0;
  std::vector<NamedArray> tensors;

  const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameter arrays of an encoder as "param/<name>" tensors.
std::vector<NamedArray> export_parameters(encoder::Encoder& enc);

// Copies "param/<name>" tensors into the encoder. Every encoder parameter must
// be present with a matching shape.
void import_parameters(const Checkpoint& ckpt, encoder::Encoder& enc);

}  // namespace g2cl
