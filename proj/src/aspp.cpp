#include "aclseg/aspp.hpp"

namespace aclseg {

void validate(const AsppConfig& cfg) {
  if (cfg.channels < 1) throw ArgumentError("aspp_channels must be >= 1");
  if (cfg.dilations.empty()) throw ArgumentError("aspp_dilations must not be empty");
  for (int d : cfg.dilations)
    if (d < 1) throw ArgumentError("aspp dilation rates must be >= 1");
}

template <typename T>
void init_aspp(ParamStore<T>& store, int in_channels, const AsppConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const int B = cfg.channels;
  init_conv_block(store, "aspp.pool", {1, in_channels, B}, seed);
  init_conv_block(store, "aspp.conv1x1", {1, in_channels, B}, seed);
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i)
    init_conv_block(store, "aspp.atrous" + std::to_string(i), {3, in_channels, B}, seed);
  const int branches = 2 + static_cast<int>(cfg.dilations.size());
  init_conv_block(store, "aspp.fuse", {1, branches * B, B}, seed);
}

template <typename T>
Var<T> aspp_forward(Var<T> deep, const AsppConfig& cfg, const BlockOptions& opt,
                    AsppTrace<T>* trace) {
  const int h = deep.shape().h, w = deep.shape().w;
  BlockOptions o = opt;
  o.stride = 1;
  o.dilation = 1;

  Var<T> pooled = conv_block(ad::global_avg_pool(deep), "aspp.pool", o);
  pooled = ad::bilinear_resize(pooled, h, w);
  std::vector<Var<T>> branches{pooled, conv_block(deep, "aspp.conv1x1", o)};
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
    BlockOptions d = o;
    d.dilation = cfg.dilations[i];
    branches.push_back(conv_block(deep, "aspp.atrous" + std::to_string(i), d));
  }
  Var<T> cat = ad::concat_channels(branches);
  if (trace) *trace = {pooled, cat};
  return conv_block(cat, "aspp.fuse", o);
}

template void init_aspp(ParamStore<float>&, int, const AsppConfig&, std::uint64_t);
template void init_aspp(ParamStore<double>&, int, const AsppConfig&, std::uint64_t);
template Var<float> aspp_forward(Var<float>, const AsppConfig&, const BlockOptions&,
                                 AsppTrace<float>*);
template Var<double> aspp_forward(Var<double>, const AsppConfig&, const BlockOptions&,
                                  AsppTrace<double>*);

}  // namespace aclseg
