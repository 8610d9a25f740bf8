#include "g2cl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "g2cl/encoder.hpp"
#include "g2cl/error.hpp"

namespace g2cl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {
constexpr char kMagic[8] = {'G', '2', 'C', 'L', 'C', 'K', 'P', 'T'};
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const NamedArray& a) { return a.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header = {{"config", ckpt.config},
                           {"epoch", ckpt.epoch},
                           {"optimizer_step", ckpt.optimizer_step},
                           {"seed", ckpt.seed}};
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.data.size()}});
    offset += t.data.size();
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + tmp.string());
    const std::uint32_t version = Checkpoint::kVersion;
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ckpt.tensors)
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!out) throw DataError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  if (version != Checkpoint::kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  Checkpoint ckpt;
  try {
    auto header = nlohmann::json::parse(text);
    ckpt.config = header.at("config");
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.optimizer_step = header.at("optimizer_step").get<std::int64_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& t : header.at("tensors")) {
      NamedArray a;
      a.name = t.at("name").get<std::string>();
      a.shape = t.at("shape").get<std::vector<int>>();
      a.data.resize(t.at("count").get<std::size_t>());
      ckpt.tensors.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (auto& t : ckpt.tensors) {
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint payload: " + path.string());
  }
  return ckpt;
}

std::vector<NamedArray> export_parameters(encoder::Encoder& enc) {
  std::vector<NamedArray> out;
  for (const auto& p : enc.parameters())
    out.push_back({"param/" + p.name, p.shape, {p.value.begin(), p.value.end()}});
  return out;
}

void import_parameters(const Checkpoint& ckpt, encoder::Encoder& enc) {
  for (auto& p : enc.parameters()) {
    const auto* t = ckpt.find("param/" + p.name);
    if (!t) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    if (t->shape != p.shape || t->data.size() != p.value.size())
      throw DataError("checkpoint parameter '" + p.name + "' has a mismatched shape");
    std::copy(t->data.begin(), t->data.end(), p.value.begin());
  }
}

}  // namespace g2cl
