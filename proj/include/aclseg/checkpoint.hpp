#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "aclseg/autodiff.hpp"

namespace aclseg {

// On-disk layout:
//   8 bytes   magic "ACLSEGCK"
//   8 bytes   header length L, little-endian uint64
//   L bytes   JSON header {"format","version","dtype":"float32","tensors":[...],"meta":{...}}
//   rest      float32 little-endian values; each tensor entry gives
//             {"name","group","shape":[n,h,w,c],"offset"} with offset in elements.
struct Checkpoint {
  // group name ("param", "buffer", "adam_m", ...) -> tensor name -> values
  std::map<std::string, std::map<std::string, Tensor<float>>> groups;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies params/buffers of a store into the "param"/"buffer" groups and back.
template <typename T>
void store_to_checkpoint(const ParamStore<T>& store, Checkpoint& ckpt);
template <typename T>
void checkpoint_to_store(const Checkpoint& ckpt, ParamStore<T>& store);

}  // namespace aclseg
