#include "aclseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace aclseg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'C', 'L', 'S', 'E', 'G', 'C', 'K'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "aclseg-checkpoint";
  header["version"] = 1;
  header["dtype"] = "float32";
  header["meta"] = ckpt.meta;
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [group, tensors] : ckpt.groups)
    for (const auto& [name, t] : tensors) {
      const Shape& s = t.shape();
      entries.push_back({{"name", name},
                         {"group", group},
                         {"shape", {s.n, s.h, s.w, s.c}},
                         {"offset", offset}});
      offset += t.size();
    }
  header["tensors"] = entries;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [group, tensors] : ckpt.groups)
    for (const auto& [name, t] : tensors)
      out.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("not an aclseg checkpoint: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("dtype", "") != "float32")
    throw DataError("unsupported checkpoint dtype in " + path.string());

  const auto data_start = in.tellg();
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("tensors")) {
    const auto dims = e.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw DataError("checkpoint tensor shape must have 4 dims");
    Tensor<float> t(Shape{dims[0], dims[1], dims[2], dims[3]});
    const auto offset = e.at("offset").get<std::size_t>();
    in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint data for " + e.at("name").get<std::string>());
    ckpt.groups[e.at("group").get<std::string>()].emplace(e.at("name").get<std::string>(),
                                                          std::move(t));
  }
  return ckpt;
}

template <typename T>
void store_to_checkpoint(const ParamStore<T>& store, Checkpoint& ckpt) {
  auto& params = ckpt.groups["param"];
  auto& buffers = ckpt.groups["buffer"];
  for (const auto& [name, e] : store.params()) params.insert_or_assign(name, e.value.template cast<float>());
  for (const auto& [name, b] : store.buffers()) buffers.insert_or_assign(name, b.template cast<float>());
}

template <typename T>
void checkpoint_to_store(const Checkpoint& ckpt, ParamStore<T>& store) {
  auto copy_into = [](const Tensor<float>& src, Tensor<T>& dst, const std::string& name) {
    if (src.shape() != dst.shape())
      throw DataError("checkpoint shape mismatch for " + name + ": " + src.shape().str() +
                      " vs " + dst.shape().str());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  };
  const auto find_group = [&](const char* g) -> const std::map<std::string, Tensor<float>>& {
    static const std::map<std::string, Tensor<float>> empty;
    auto it = ckpt.groups.find(g);
    return it == ckpt.groups.end() ? empty : it->second;
  };
  const auto& params = find_group("param");
  const auto& buffers = find_group("buffer");
  for (auto& [name, e] : store.params()) {
    auto it = params.find(name);
    if (it == params.end()) throw DataError("checkpoint is missing parameter " + name);
    copy_into(it->second, e.value, name);
  }
  for (auto& [name, b] : store.buffers()) {
    auto it = buffers.find(name);
    if (it == buffers.end()) throw DataError("checkpoint is missing buffer " + name);
    copy_into(it->second, b, name);
  }
}

template void store_to_checkpoint(const ParamStore<float>&, Checkpoint&);
template void store_to_checkpoint(const ParamStore<double>&, Checkpoint&);
template void checkpoint_to_store(const Checkpoint&, ParamStore<float>&);
template void checkpoint_to_store(const Checkpoint&, ParamStore<double>&);

}  // namespace aclseg
