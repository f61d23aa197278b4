#include "aclseg/layers.hpp"

#include <cmath>

#include "aclseg/rng.hpp"

namespace aclseg {

namespace {

void validate(const ConvBlockSpec& spec) {
  if (spec.kernel != 1 && spec.kernel != 3)
    throw ArgumentError("conv block kernel must be 1 or 3, got " + std::to_string(spec.kernel));
  if (spec.in_channels < 1 || spec.out_channels < 1)
    throw ArgumentError("conv block channel counts must be >= 1");
}

template <typename T>
Tensor<T> he_normal(const ConvBlockSpec& spec, std::uint64_t seed, const std::string& name) {
  Tensor<T> w(Shape{spec.kernel, spec.kernel, spec.in_channels, spec.out_channels});
  const double fan_in = static_cast<double>(spec.kernel) * spec.kernel * spec.in_channels;
  auto rng = make_stream(seed, name);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : w.data()) v = static_cast<T>(dist(rng));
  return w;
}

}  // namespace

template <typename T>
void init_conv_block(ParamStore<T>& store, const std::string& prefix, const ConvBlockSpec& spec,
                     std::uint64_t seed) {
  validate(spec);
  store.add(prefix + ".conv.w", he_normal<T>(spec, seed, prefix + ".conv.w"));
  store.add(prefix + ".bn.gamma", Tensor<T>(vector_shape(spec.out_channels), T(1)));
  store.add(prefix + ".bn.beta", Tensor<T>(vector_shape(spec.out_channels), T(0)));
  store.add_buffer(prefix + ".bn.running_mean", Tensor<T>(vector_shape(spec.out_channels), T(0)));
  store.add_buffer(prefix + ".bn.running_var", Tensor<T>(vector_shape(spec.out_channels), T(1)));
}

template <typename T>
void init_conv(ParamStore<T>& store, const std::string& prefix, const ConvBlockSpec& spec,
               bool with_bias, std::uint64_t seed) {
  validate(spec);
  store.add(prefix + ".w", he_normal<T>(spec, seed, prefix + ".w"));
  if (with_bias) store.add(prefix + ".b", Tensor<T>(vector_shape(spec.out_channels), T(0)));
}

template <typename T>
Var<T> conv_block(Var<T> x, const std::string& prefix, const BlockOptions& opt) {
  Tape<T>& tape = *x.tape;
  ParamStore<T>& store = *tape.store();
  const ops::ConvSpec cs{opt.stride, opt.dilation, ops::Padding::Same};
  Var<T> y = ad::conv2d(x, tape.param(prefix + ".conv.w"), std::optional<Var<T>>{}, cs);
  y = ad::batch_norm(y, tape.param(prefix + ".bn.gamma"), tape.param(prefix + ".bn.beta"),
                     store.buffer(prefix + ".bn.running_mean"),
                     store.buffer(prefix + ".bn.running_var"), opt.bn, opt.mode);
  return ad::relu(y);
}

template void init_conv_block(ParamStore<float>&, const std::string&, const ConvBlockSpec&,
                              std::uint64_t);
template void init_conv_block(ParamStore<double>&, const std::string&, const ConvBlockSpec&,
                              std::uint64_t);
template void init_conv(ParamStore<float>&, const std::string&, const ConvBlockSpec&, bool,
                        std::uint64_t);
template void init_conv(ParamStore<double>&, const std::string&, const ConvBlockSpec&, bool,
                        std::uint64_t);
template Var<float> conv_block(Var<float>, const std::string&, const BlockOptions&);
template Var<double> conv_block(Var<double>, const std::string&, const BlockOptions&);

}  // namespace aclseg
