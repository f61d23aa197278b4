#include "aclseg/cluster.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "aclseg/rng.hpp"

namespace aclseg {

KmeansInit parse_kmeans_init(const std::string& s) {
  if (s == "random") return KmeansInit::Random;
  if (s == "plusplus" || s == "kmeans++") return KmeansInit::PlusPlus;
  throw ArgumentError("unknown k-means init '" + s + "' (expected random|plusplus)");
}

std::string to_string(KmeansInit init) {
  return init == KmeansInit::Random ? "random" : "plusplus";
}

namespace {

using Rgb = std::array<double, 3>;

double sq_dist(const Rgb& a, const Rgb& b) {
  const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

struct Assignment {
  double inertia = 0;
  std::vector<int> counts;
};

// Nearest centroid per pixel; strict < keeps the lower index on ties.
Assignment assign(const std::vector<Rgb>& px, const std::vector<Rgb>& cent, std::vector<int>& labels,
                  std::vector<double>& dist) {
  Assignment a;
  a.counts.assign(cent.size(), 0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    int best = 0;
    double bd = sq_dist(px[i], cent[0]);
    for (std::size_t c = 1; c < cent.size(); ++c) {
      const double d = sq_dist(px[i], cent[c]);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    dist[i] = bd;
    a.inertia += bd;
    ++a.counts[best];
  }
  return a;
}

std::vector<Rgb> init_random(const std::vector<Rgb>& px, int k, std::mt19937_64& rng,
                             bool& degenerate) {
  std::vector<std::size_t> order(px.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Rgb> cent;
  for (std::size_t idx : order) {
    if (static_cast<int>(cent.size()) == k) break;
    if (std::find(cent.begin(), cent.end(), px[idx]) == cent.end()) cent.push_back(px[idx]);
  }
  degenerate = static_cast<int>(cent.size()) < k;
  while (static_cast<int>(cent.size()) < k) cent.push_back(cent.back());
  return cent;
}

std::vector<Rgb> init_plusplus(const std::vector<Rgb>& px, int k, std::mt19937_64& rng,
                               bool& degenerate) {
  std::vector<Rgb> cent;
  std::uniform_int_distribution<std::size_t> pick(0, px.size() - 1);
  cent.push_back(px[pick(rng)]);
  std::vector<double> d2(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) d2[i] = sq_dist(px[i], cent[0]);
  while (static_cast<int>(cent.size()) < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0)) {
      degenerate = true;
      cent.push_back(cent.back());
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    double run = 0;
    std::size_t chosen = px.size() - 1;
    for (std::size_t i = 0; i < px.size(); ++i) {
      run += d2[i];
      if (r < run && d2[i] > 0) {
        chosen = i;
        break;
      }
    }
    while (d2[chosen] == 0) --chosen;  // r landed on the final boundary
    cent.push_back(px[chosen]);
    for (std::size_t i = 0; i < px.size(); ++i) d2[i] = std::min(d2[i], sq_dist(px[i], cent.back()));
  }
  return cent;
}

}  // namespace

ClusterResult kmeans_cluster(const Tensor<double>& image, const KmeansOptions& opt) {
  if (opt.k < 2) throw ArgumentError("k-means requires k >= 2, got " + std::to_string(opt.k));
  if (opt.max_iter < 1) throw ArgumentError("k-means max_iter must be >= 1");
  if (image.n() != 1 || image.c() != 3)
    throw ShapeError("k-means expects a 1 x H x W x 3 image, got " + image.shape().str());

  std::vector<Rgb> px(static_cast<std::size_t>(image.h()) * image.w());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = {image[3 * i], image[3 * i + 1], image[3 * i + 2]};

  ClusterResult res;
  res.height = image.h();
  res.width = image.w();

  auto rng = make_stream(opt.seed, "kmeans");
  bool degenerate = false;
  std::vector<Rgb> cent = opt.init == KmeansInit::Random ? init_random(px, opt.k, rng, degenerate)
                                                         : init_plusplus(px, opt.k, rng, degenerate);

  std::vector<int> labels(px.size(), -1), previous;
  std::vector<double> dist(px.size());
  for (int it = 1; it <= opt.max_iter; ++it) {
    Assignment a = assign(px, cent, labels, dist);
    // Empty-cluster repair: move the centroid onto the pixel farthest from its
    // current centroid, then reassign. Each repair zeroes that pixel's cost.
    for (int c = 0; c < opt.k; ++c) {
      if (a.counts[c] > 0) continue;
      const auto far = std::max_element(dist.begin(), dist.end());
      if (*far <= 0) {
        degenerate = true;
        continue;
      }
      cent[c] = px[static_cast<std::size_t>(far - dist.begin())];
      a = assign(px, cent, labels, dist);
      c = -1;  // rescan: the move may have emptied another cluster
    }
    res.inertia_history.push_back(a.inertia);
    res.inertia = a.inertia;
    res.iterations = it;
    if (labels == previous) {
      res.converged = true;
      break;
    }
    previous = labels;

    std::vector<Rgb> sum(opt.k, Rgb{0, 0, 0});
    for (std::size_t i = 0; i < px.size(); ++i)
      for (int ch = 0; ch < 3; ++ch) sum[labels[i]][ch] += px[i][ch];
    for (int c = 0; c < opt.k; ++c)
      if (a.counts[c] > 0)
        for (int ch = 0; ch < 3; ++ch) cent[c][ch] = sum[c][ch] / a.counts[c];
  }
  res.degenerate = degenerate;

  // Reorder clusters by brightness so label identity is seed-independent.
  std::vector<int> order(opt.k);
  std::iota(order.begin(), order.end(), 0);
  auto brightness = [&](int c) { return cent[c][0] + cent[c][1] + cent[c][2]; };
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return brightness(a) < brightness(b); });
  std::vector<int> remap(opt.k);
  for (int rank = 0; rank < opt.k; ++rank) remap[order[rank]] = rank;
  res.centroids.resize(opt.k);
  for (int c = 0; c < opt.k; ++c) res.centroids[remap[c]] = cent[c];
  res.labels.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) res.labels[i] = remap[labels[i]];
  return res;
}

template <typename T>
Tensor<T> cluster_to_map(const ClusterResult& result) {
  if (result.centroids.size() != 2)
    throw ArgumentError("cluster_to_map requires k = 2, got k = " +
                        std::to_string(result.centroids.size()));
  Tensor<T> map(Shape{1, result.height, result.width, 2});
  for (std::size_t i = 0; i < result.labels.size(); ++i) map[2 * i + result.labels[i]] = T(1);
  return map;
}

template <typename T>
Tensor<T> cluster_to_centroid_image(const ClusterResult& result) {
  Tensor<T> img(Shape{1, result.height, result.width, 3});
  for (std::size_t i = 0; i < result.labels.size(); ++i)
    for (int ch = 0; ch < 3; ++ch)
      img[3 * i + ch] = static_cast<T>(result.centroids[result.labels[i]][ch] / 255.0);
  return img;
}

template Tensor<float> cluster_to_map(const ClusterResult&);
template Tensor<double> cluster_to_map(const ClusterResult&);
template Tensor<float> cluster_to_centroid_image(const ClusterResult&);
template Tensor<double> cluster_to_centroid_image(const ClusterResult&);

}  // namespace aclseg
