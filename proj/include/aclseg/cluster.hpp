#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aclseg/tensor.hpp"

namespace aclseg {

enum class KmeansInit { Random, PlusPlus };

KmeansInit parse_kmeans_init(const std::string& s);
std::string to_string(KmeansInit init);

struct KmeansOptions {
  int k = 2;
  KmeansInit init = KmeansInit::Random;
  std::uint64_t seed = 0;
  int max_iter = 100;
};

// Clusters ordered by ascending centroid brightness (mean of R,G,B), so for
// k = 2 label 1 is the brighter ("cloud") cluster.
struct ClusterResult {
  int height = 0;
  int width = 0;
  std::vector<std::array<double, 3>> centroids;
  std::vector<int> labels;  // row-major H x W, values in [0, k)
  int iterations = 0;
  double inertia = 0;
  std::vector<double> inertia_history;  // after each assignment step
  bool converged = false;
  // Set when the image has fewer than k distinct colours; some centroids are
  // then duplicates and their clusters may be empty.
  bool degenerate = false;
};

// Lloyd's algorithm over the RGB values of a 1 x H x W x 3 image in [0, 255].
ClusterResult kmeans_cluster(const Tensor<double>& image, const KmeansOptions& opt);

// One-hot label map, 1 x H x W x 2: channel 0 = darker, channel 1 = brighter.
template <typename T>
Tensor<T> cluster_to_map(const ClusterResult& result);

// Alternative encoding: every pixel replaced by its centroid colour / 255, 1 x H x W x 3.
template <typename T>
Tensor<T> cluster_to_centroid_image(const ClusterResult& result);

}  // namespace aclseg
