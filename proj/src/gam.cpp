#include "aclseg/gam.hpp"

#include "aclseg/layers.hpp"

namespace aclseg {

template <typename T>
void init_gam(ParamStore<T>& store, int image_channels, int channels, std::uint64_t seed) {
  init_conv(store, "gam.squeeze", {1, image_channels, channels}, true, seed);
}

template <typename T>
Var<T> gam_forward(Var<T> image, Var<T> f_e, GamTrace<T>* trace) {
  Tape<T>& tape = *image.tape;
  const Shape& fs = f_e.shape();
  Var<T> w = tape.param("gam.squeeze.w");
  if (w.shape().c != fs.c)
    throw ShapeError("GAM squeeze produces " + std::to_string(w.shape().c) +
                     " channels but F_e has " + std::to_string(fs.c));
  if (image.shape().n != fs.n) throw ShapeError("GAM: image and F_e batch sizes differ");

  Var<T> resized = ad::bilinear_resize(image, fs.h, fs.w);
  Var<T> logits = ad::conv2d(resized, w, tape.param("gam.squeeze.b"), ops::ConvSpec{});
  Var<T> attention = ad::softmax_channels(logits);
  if (trace) *trace = {resized, logits, attention};
  return ad::mul(attention, f_e);
}

template void init_gam(ParamStore<float>&, int, int, std::uint64_t);
template void init_gam(ParamStore<double>&, int, int, std::uint64_t);
template Var<float> gam_forward(Var<float>, Var<float>, GamTrace<float>*);
template Var<double> gam_forward(Var<double>, Var<double>, GamTrace<double>*);

}  // namespace aclseg
