#include "aclseg/model.hpp"

#include <set>

namespace aclseg {

using nlohmann::json;

void validate(const ModelConfig& cfg) {
  validate(cfg.backbone);
  validate(cfg.aspp);
  if (cfg.decoder_channels < 1) throw ArgumentError("decoder_channels must be >= 1");
  if (cfg.low_level_channels < 1) throw ArgumentError("low_level_channels must be >= 1");
  if (cfg.kmeans.k != 2) throw ArgumentError("the cluster branch uses k = 2");
  if (cfg.kmeans.max_iter < 1) throw ArgumentError("kmeans_max_iter must be >= 1");
  if (!(cfg.bn.eps > 0)) throw ArgumentError("bn_eps must be > 0");
  if (!(cfg.bn.momentum >= 0 && cfg.bn.momentum < 1)) throw ArgumentError("bn_momentum must be in [0,1)");
}

json to_json(const ModelConfig& cfg) {
  return json{
      {"backbone",
       {{"name", cfg.backbone.name},
        {"widths", cfg.backbone.widths},
        {"blocks_per_stage", cfg.backbone.blocks_per_stage}}},
      {"aspp_channels", cfg.aspp.channels},
      {"aspp_dilations", cfg.aspp.dilations},
      {"decoder_channels", cfg.decoder_channels},
      {"low_level_channels", cfg.low_level_channels},
      {"use_gam", cfg.use_gam},
      {"use_kmeans", cfg.use_kmeans},
      {"seed", cfg.seed},
      {"cluster_encoding",
       cfg.cluster_encoding == ClusterEncoding::OneHot ? "onehot" : "centroid_rgb"},
      {"kmeans_init", to_string(cfg.kmeans.init)},
      {"kmeans_seed", cfg.kmeans.seed},
      {"kmeans_max_iter", cfg.kmeans.max_iter},
      {"bn_momentum", cfg.bn.momentum},
      {"bn_eps", cfg.bn.eps},
  };
}

ModelConfig model_config_from_json(const json& j) {
  static const std::set<std::string> known{
      "backbone",         "aspp_channels", "aspp_dilations", "decoder_channels",
      "low_level_channels", "use_gam",     "use_kmeans",     "seed",
      "cluster_encoding", "kmeans_init",   "kmeans_seed",    "kmeans_max_iter",
      "bn_momentum",      "bn_eps"};
  if (!j.is_object()) throw ArgumentError("model config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ArgumentError("unknown model config key: " + key);

  ModelConfig cfg;
  try {
    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      if (b.is_string()) {
        cfg.backbone.name = b.get<std::string>();
      } else {
        cfg.backbone.name = b.value("name", cfg.backbone.name);
        if (b.contains("widths")) cfg.backbone.widths = b.at("widths").get<std::array<int, 4>>();
        cfg.backbone.blocks_per_stage = b.value("blocks_per_stage", cfg.backbone.blocks_per_stage);
      }
    }
    cfg.aspp.channels = j.value("aspp_channels", cfg.aspp.channels);
    if (j.contains("aspp_dilations")) cfg.aspp.dilations = j.at("aspp_dilations").get<std::vector<int>>();
    cfg.decoder_channels = j.value("decoder_channels", cfg.decoder_channels);
    cfg.low_level_channels = j.value("low_level_channels", cfg.low_level_channels);
    cfg.use_gam = j.value("use_gam", cfg.use_gam);
    cfg.use_kmeans = j.value("use_kmeans", cfg.use_kmeans);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("cluster_encoding")) {
      const auto e = j.at("cluster_encoding").get<std::string>();
      if (e == "onehot")
        cfg.cluster_encoding = ClusterEncoding::OneHot;
      else if (e == "centroid_rgb")
        cfg.cluster_encoding = ClusterEncoding::CentroidRgb;
      else
        throw ArgumentError("unknown cluster_encoding '" + e + "'");
    }
    if (j.contains("kmeans_init")) cfg.kmeans.init = parse_kmeans_init(j.at("kmeans_init").get<std::string>());
    cfg.kmeans.seed = j.value("kmeans_seed", cfg.kmeans.seed);
    cfg.kmeans.max_iter = j.value("kmeans_max_iter", cfg.kmeans.max_iter);
    cfg.bn.momentum = j.value("bn_momentum", cfg.bn.momentum);
    cfg.bn.eps = j.value("bn_eps", cfg.bn.eps);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("invalid model config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

template <typename T>
ParamStore<T> init_model(const ModelConfig& cfg) {
  validate(cfg);
  ParamStore<T> store;
  const int B = cfg.aspp.channels, D = cfg.decoder_channels, L = cfg.low_level_channels;
  init_backbone(store, cfg.backbone, cfg.seed);
  init_aspp(store, cfg.backbone.deep_channels(), cfg.aspp, cfg.seed);
  init_gam(store, cfg.backbone.in_channels, B, cfg.seed);
  init_conv_block(store, "decoder.low_reduce", {1, cfg.backbone.low_level_channels(), L}, cfg.seed);
  init_conv_block(store, "decoder.enhance0", {3, B + L, D}, cfg.seed);
  init_conv_block(store, "decoder.enhance1", {3, D, D}, cfg.seed);
  init_conv_block(store, "cluster.proj", {1, cfg.cluster_channels(), D}, cfg.seed);
  init_conv(store, "head", {1, D, 2}, true, cfg.seed);
  return store;
}

template <typename T>
Var<T> model_forward(Var<T> image, std::type_identity_t<std::optional<Var<T>>> cluster_map, const ModelConfig& cfg,
                     ops::NormMode mode) {
  if (cfg.use_kmeans && !cluster_map)
    throw ArgumentError("use_kmeans is set but no cluster map was supplied");
  if (!cfg.use_kmeans && cluster_map)
    throw ArgumentError("a cluster map was supplied but use_kmeans is off");
  const Shape& in = image.shape();
  if (cluster_map) {
    const Shape& cs = cluster_map->shape();
    if (cs.n != in.n || cs.h != in.h || cs.w != in.w || cs.c != cfg.cluster_channels())
      throw ShapeError("cluster map shape " + cs.str() + " does not match image " + in.str());
  }
  Tape<T>& tape = *image.tape;
  BlockOptions opt;
  opt.mode = mode;
  opt.bn = cfg.bn;

  auto feats = backbone_forward(image, cfg.backbone, opt);
  Var<T> x = aspp_forward(feats.deep, cfg.aspp, opt);
  if (cfg.use_gam) x = gam_forward(image, x);

  const Shape& low = feats.low_level.shape();
  x = ad::bilinear_resize(x, low.h, low.w);
  Var<T> reduced = conv_block(feats.low_level, "decoder.low_reduce", opt);
  x = ad::concat_channels(std::vector<Var<T>>{x, reduced});
  x = conv_block(x, "decoder.enhance0", opt);
  x = conv_block(x, "decoder.enhance1", opt);
  x = ad::bilinear_resize(x, in.h, in.w);

  if (cfg.use_kmeans) x = ad::add(x, conv_block(*cluster_map, "cluster.proj", opt));

  x = ad::conv2d(x, tape.param("head.w"), tape.param("head.b"), ops::ConvSpec{});
  return ad::sigmoid(x);
}

template <typename T>
Tensor<T> model_predict(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& image,
                        const Tensor<T>* cluster_map) {
  Tape<T> tape(&store, false);
  Var<T> x = tape.input(image, false);
  std::optional<Var<T>> cm;
  if (cluster_map) cm = tape.input(*cluster_map, false);
  return model_forward(x, cm, cfg, ops::NormMode::Infer).value();
}

template <typename T>
Tensor<T> compute_cluster_map(const Tensor<T>& image, const ModelConfig& cfg) {
  if (image.n() != 1 || image.c() != 3)
    throw ShapeError("cluster map needs a 1 x H x W x 3 image, got " + image.shape().str());
  Tensor<double> rgb(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) rgb[i] = static_cast<double>(image[i]) * 255.0;
  const ClusterResult r = kmeans_cluster(rgb, cfg.kmeans);
  return cfg.cluster_encoding == ClusterEncoding::OneHot ? cluster_to_map<T>(r)
                                                         : cluster_to_centroid_image<T>(r);
}

std::vector<std::string> layer_inventory(const ModelConfig& cfg) {
  ParamStore<float> store = init_model<float>(cfg);
  Tape<float> tape(&store, false);
  Var<float> img = tape.input(Tensor<float>(Shape{1, 16, 16, cfg.backbone.in_channels}, 0.5f), false);
  std::optional<Var<float>> cm;
  if (cfg.use_kmeans) cm = tape.input(Tensor<float>(Shape{1, 16, 16, cfg.cluster_channels()}), false);
  model_forward(img, cm, cfg, ops::NormMode::Infer);
  return tape.param_names();
}

template <typename T>
std::vector<std::uint8_t> predict_mask(const Tensor<T>& probs, double threshold) {
  if (probs.c() != 2 && probs.c() != 1)
    throw ShapeError("predict_mask expects 1 or 2 channels, got " + std::to_string(probs.c()));
  if (!(threshold > 0 && threshold < 1)) throw ArgumentError("threshold must be in (0,1)");
  const std::size_t C = static_cast<std::size_t>(probs.c());
  std::vector<std::uint8_t> mask(probs.size() / C);
  for (std::size_t p = 0; p < mask.size(); ++p)
    mask[p] = static_cast<double>(probs[p * C + (C - 1)]) >= threshold ? 1 : 0;
  return mask;
}

template ParamStore<float> init_model(const ModelConfig&);
template ParamStore<double> init_model(const ModelConfig&);
template Var<float> model_forward(Var<float>, std::optional<Var<float>>, const ModelConfig&,
                                  ops::NormMode);
template Var<double> model_forward(Var<double>, std::optional<Var<double>>, const ModelConfig&,
                                   ops::NormMode);
template Tensor<float> model_predict(ParamStore<float>&, const ModelConfig&, const Tensor<float>&,
                                     const Tensor<float>*);
template Tensor<double> model_predict(ParamStore<double>&, const ModelConfig&,
                                      const Tensor<double>&, const Tensor<double>*);
template Tensor<float> compute_cluster_map(const Tensor<float>&, const ModelConfig&);
template Tensor<double> compute_cluster_map(const Tensor<double>&, const ModelConfig&);
template std::vector<std::uint8_t> predict_mask(const Tensor<float>&, double);
template std::vector<std::uint8_t> predict_mask(const Tensor<double>&, double);

}  // namespace aclseg
