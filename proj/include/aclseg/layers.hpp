#pragma once

#include <cstdint>
#include <string>

#include "aclseg/autodiff.hpp"

namespace aclseg {

// Conv block = conv (no bias) -> batch norm -> ReLU. Parameters live in a
// ParamStore under "<prefix>.conv.w", "<prefix>.bn.gamma", "<prefix>.bn.beta";
// running statistics are buffers "<prefix>.bn.running_mean" / ".running_var".
struct ConvBlockSpec {
  int kernel = 3;  // 1 or 3
  int in_channels = 1;
  int out_channels = 1;
};

// He-normal kernel, std sqrt(2 / fan_in) with fan_in = k*k*Cin; gamma 1,
// beta 0, running mean 0, running var 1. Deterministic in (seed, prefix).
template <typename T>
void init_conv_block(ParamStore<T>& store, const std::string& prefix, const ConvBlockSpec& spec,
                     std::uint64_t seed);

// Plain convolution kernel (+ optional zero bias), same He-normal draw.
template <typename T>
void init_conv(ParamStore<T>& store, const std::string& prefix, const ConvBlockSpec& spec,
               bool with_bias, std::uint64_t seed);

struct BlockOptions {
  int stride = 1;
  int dilation = 1;
  ops::NormMode mode = ops::NormMode::Train;
  ops::BatchNormOptions bn{};
};

template <typename T>
Var<T> conv_block(Var<T> x, const std::string& prefix, const BlockOptions& opt);

}  // namespace aclseg
