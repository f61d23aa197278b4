#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "aclseg/layers.hpp"

namespace aclseg {

// Four stages, each [conv block stride 2, (blocks_per_stage - 1) x conv block stride 1].
// Low-level features are tapped after stage 2 (stride 4), deep features after
// stage 4 (stride 16).
struct BackboneConfig {
  std::string name = "tiny";
  std::array<int, 4> widths{16, 24, 40, 112};
  int blocks_per_stage = 2;
  int in_channels = 3;

  int low_level_channels() const { return widths[1]; }
  int deep_channels() const { return widths[3]; }
};

void validate(const BackboneConfig& cfg);

template <typename T>
void init_backbone(ParamStore<T>& store, const BackboneConfig& cfg, std::uint64_t seed);

template <typename T>
struct BackboneFeatures {
  Var<T> low_level;
  Var<T> deep;
};

// Requires H and W divisible by 16.
template <typename T>
BackboneFeatures<T> backbone_forward(Var<T> image, const BackboneConfig& cfg,
                                     const BlockOptions& opt);

}  // namespace aclseg
