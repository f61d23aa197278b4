#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "aclseg/aspp.hpp"
#include "aclseg/backbone.hpp"
#include "aclseg/cluster.hpp"
#include "aclseg/gam.hpp"
#include "aclseg/layers.hpp"

namespace aclseg {

enum class ClusterEncoding { OneHot, CentroidRgb };

struct ModelConfig {
  BackboneConfig backbone;
  AsppConfig aspp;
  int decoder_channels = 64;
  int low_level_channels = 32;  // width after the 1x1 reduction of the stride-4 tap
  bool use_gam = true;
  bool use_kmeans = true;
  std::uint64_t seed = 42;
  ClusterEncoding cluster_encoding = ClusterEncoding::OneHot;
  KmeansOptions kmeans{};
  ops::BatchNormOptions bn{};

  int cluster_channels() const { return cluster_encoding == ClusterEncoding::OneHot ? 2 : 3; }
};

void validate(const ModelConfig& cfg);

// JSON keys: backbone{name,widths,blocks_per_stage}, aspp_channels, aspp_dilations,
// decoder_channels, low_level_channels, use_gam, use_kmeans, seed,
// cluster_encoding (onehot|centroid_rgb), kmeans_init, kmeans_seed,
// kmeans_max_iter, bn_momentum, bn_eps. Missing keys keep their defaults;
// unknown keys are rejected.
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// All parameters for every path, including the ablatable GAM and cluster
// branches, so checkpoints have one layout regardless of ablation flags.
template <typename T>
ParamStore<T> init_model(const ModelConfig& cfg);

// image: N x H x W x 3 in [0,1], H and W divisible by 16.
// cluster_map: N x H x W x cluster_channels, required iff cfg.use_kmeans.
// Returns N x H x W x 2 per-channel sigmoid probabilities; channel 1 is cloud.
template <typename T>
Var<T> model_forward(Var<T> image, std::type_identity_t<std::optional<Var<T>>> cluster_map, const ModelConfig& cfg,
                     ops::NormMode mode);

// Infer-mode forward without recording gradients.
template <typename T>
Tensor<T> model_predict(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& image,
                        const Tensor<T>* cluster_map);

// Cluster-branch input for one 1 x H x W x 3 image in [0,1].
template <typename T>
Tensor<T> compute_cluster_map(const Tensor<T>& image, const ModelConfig& cfg);

// Parameter names read by one forward pass under cfg's ablation flags.
std::vector<std::string> layer_inventory(const ModelConfig& cfg);

// 1 where the cloud-channel probability >= threshold. Returns N*H*W values.
template <typename T>
std::vector<std::uint8_t> predict_mask(const Tensor<T>& probs, double threshold = 0.5);

}  // namespace aclseg
