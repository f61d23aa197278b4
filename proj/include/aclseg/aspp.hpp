#pragma once

#include <cstdint>
#include <vector>

#include "aclseg/layers.hpp"

namespace aclseg {

struct AsppConfig {
  int channels = 64;
  std::vector<int> dilations{6, 12, 18};
};

void validate(const AsppConfig& cfg);

// Branches: "aspp.pool" (global average pool -> 1x1 block), "aspp.conv1x1",
// "aspp.atrous<i>" (3x3 block, dilation i), fused by the 1x1 block "aspp.fuse".
template <typename T>
void init_aspp(ParamStore<T>& store, int in_channels, const AsppConfig& cfg, std::uint64_t seed);

// Intermediate nodes exposed for structural tests.
template <typename T>
struct AsppTrace {
  Var<T> pooled;  // pooled branch after resizing back to h x w
  Var<T> concat;  // (2 + dilations) * channels wide
};

template <typename T>
Var<T> aspp_forward(Var<T> deep, const AsppConfig& cfg, const BlockOptions& opt,
                    AsppTrace<T>* trace = nullptr);

}  // namespace aclseg
