#pragma once

#include <cstdint>

#include "aclseg/autodiff.hpp"

namespace aclseg {

// Global attention module. The input image is resized to the ASPP map size,
// squeezed to C1 channels by a bare 1x1 convolution ("gam.squeeze.w" / ".b"),
// softmax-normalized across channels at every pixel, and multiplied into F_e.
template <typename T>
void init_gam(ParamStore<T>& store, int image_channels, int channels, std::uint64_t seed);

template <typename T>
struct GamTrace {
  Var<T> resized;    // image at H1 x W1
  Var<T> logits;     // squeeze conv output
  Var<T> attention;  // softmax over channels
};

template <typename T>
Var<T> gam_forward(Var<T> image, Var<T> f_e, GamTrace<T>* trace = nullptr);

}  // namespace aclseg
