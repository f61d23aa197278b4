#include "aclseg/backbone.hpp"

namespace aclseg {

namespace {

std::string block_name(int stage, int block) {
  return "backbone.s" + std::to_string(stage) + ".b" + std::to_string(block);
}

}  // namespace

void validate(const BackboneConfig& cfg) {
  if (cfg.name != "tiny")
    throw ArgumentError("unsupported backbone '" + cfg.name +
                        "': only the built-in 'tiny' backbone is available");
  for (int w : cfg.widths)
    if (w < 1) throw ArgumentError("backbone widths must be >= 1");
  if (cfg.blocks_per_stage < 1) throw ArgumentError("backbone blocks_per_stage must be >= 1");
  if (cfg.in_channels < 1) throw ArgumentError("backbone in_channels must be >= 1");
}

template <typename T>
void init_backbone(ParamStore<T>& store, const BackboneConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  int cin = cfg.in_channels;
  for (int s = 0; s < 4; ++s)
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      init_conv_block(store, block_name(s, b), {3, cin, cfg.widths[s]}, seed);
      cin = cfg.widths[s];
    }
}

template <typename T>
BackboneFeatures<T> backbone_forward(Var<T> image, const BackboneConfig& cfg,
                                     const BlockOptions& opt) {
  const Shape& s = image.shape();
  if (s.h % 16 != 0 || s.w % 16 != 0)
    throw ArgumentError("backbone input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                        " is not divisible by 16; pad or resize the image first");
  if (s.c != cfg.in_channels)
    throw ShapeError("backbone expects " + std::to_string(cfg.in_channels) +
                     " input channels, got " + std::to_string(s.c));

  BackboneFeatures<T> out;
  Var<T> x = image;
  for (int st = 0; st < 4; ++st) {
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      BlockOptions bo = opt;
      bo.stride = b == 0 ? 2 : 1;
      bo.dilation = 1;
      x = conv_block(x, block_name(st, b), bo);
    }
    if (st == 1) out.low_level = x;
  }
  out.deep = x;
  return out;
}

template void init_backbone(ParamStore<float>&, const BackboneConfig&, std::uint64_t);
template void init_backbone(ParamStore<double>&, const BackboneConfig&, std::uint64_t);
template BackboneFeatures<float> backbone_forward(Var<float>, const BackboneConfig&,
                                                  const BlockOptions&);
template BackboneFeatures<double> backbone_forward(Var<double>, const BackboneConfig&,
                                                   const BlockOptions&);

}  // namespace aclseg
