#include <gtest/gtest.h>

#include <random>

#include "aclseg/cluster.hpp"
#include "aclseg/errors.hpp"

using namespace aclseg;

namespace {

Tensor<double> image_from(const std::vector<std::array<double, 3>>& px, int h, int w) {
  Tensor<double> t(Shape{1, h, w, 3});
  for (std::size_t i = 0; i < px.size(); ++i)
    for (int c = 0; c < 3; ++c) t[3 * i + c] = px[i][c];
  return t;
}

Tensor<double> black_white(int h, int w, std::uint64_t seed, std::vector<int>* truth = nullptr) {
  std::mt19937_64 rng(seed);
  std::vector<std::array<double, 3>> px(static_cast<std::size_t>(h) * w);
  if (truth) truth->resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const bool white = (rng() % 3) == 0 || i == 0;
    const bool force_black = i == 1;
    const double v = (white && !force_black) ? 255 : 0;
    px[i] = {v, v, v};
    if (truth) (*truth)[i] = v > 0;
  }
  return image_from(px, h, w);
}

Tensor<double> random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  Tensor<double> t(Shape{1, h, w, 3});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(KmeansTest, SeparableBlackAndWhite) {
  std::vector<int> truth;
  const auto img = black_white(12, 10, 1, &truth);
  for (auto init : {KmeansInit::Random, KmeansInit::PlusPlus})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = kmeans_cluster(img, {2, init, seed, 100});
      EXPECT_EQ(r.centroids[0], (std::array<double, 3>{0, 0, 0}));
      EXPECT_EQ(r.centroids[1], (std::array<double, 3>{255, 255, 255}));
      EXPECT_EQ(r.labels, truth);
      EXPECT_TRUE(r.converged);
      EXPECT_FALSE(r.degenerate);
    }
}

TEST(KmeansTest, FourPixelHandCase) {
  const auto img = image_from({{10, 10, 10}, {12, 12, 12}, {200, 200, 200}, {210, 210, 210}}, 2, 2);
  for (auto init : {KmeansInit::Random, KmeansInit::PlusPlus})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = kmeans_cluster(img, {2, init, seed, 100});
      EXPECT_EQ(r.centroids[0], (std::array<double, 3>{11, 11, 11}));
      EXPECT_EQ(r.centroids[1], (std::array<double, 3>{205, 205, 205}));
      EXPECT_EQ(r.labels, (std::vector<int>{0, 0, 1, 1}));
    }
}

TEST(KmeansTest, InitVariantsAgreeOnSeparableImages) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    // Two tight colour groups far apart.
    std::vector<std::array<double, 3>> px(64);
    std::uniform_real_distribution<double> jitter(-8, 8);
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double base = (i % 5 == 0 || i == 3) ? 220 : 30;
      px[i] = {base + jitter(rng), base + jitter(rng), base + jitter(rng)};
    }
    const auto img = image_from(px, 8, 8);
    const auto a = kmeans_cluster(img, {2, KmeansInit::Random, static_cast<std::uint64_t>(t), 100});
    const auto b = kmeans_cluster(img, {2, KmeansInit::PlusPlus, static_cast<std::uint64_t>(t) + 99, 100});
    EXPECT_EQ(a.labels, b.labels);
  }
}

TEST(KmeansTest, InertiaNeverIncreases) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto img = random_image(9, 11, rng);
    for (int k : {2, 3, 5}) {
      const auto r = kmeans_cluster(img, {k, t % 2 ? KmeansInit::PlusPlus : KmeansInit::Random,
                                          static_cast<std::uint64_t>(t), 100});
      ASSERT_FALSE(r.inertia_history.empty());
      for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
        EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
    }
  }
}

TEST(KmeansTest, ConvergedResultIsALloydFixedPoint) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto img = random_image(10, 10, rng);
    const auto r = kmeans_cluster(img, {2, KmeansInit::Random, static_cast<std::uint64_t>(t), 500});
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.centroids[0][0] + r.centroids[0][1] + r.centroids[0][2],
              r.centroids[1][0] + r.centroids[1][1] + r.centroids[1][2]);
    std::array<std::array<double, 3>, 2> sum{};
    std::array<int, 2> count{};
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      const int l = r.labels[i];
      double d[2];
      for (int c = 0; c < 2; ++c) {
        d[c] = 0;
        for (int ch = 0; ch < 3; ++ch) d[c] += (img[3 * i + ch] - r.centroids[c][ch]) * (img[3 * i + ch] - r.centroids[c][ch]);
      }
      EXPECT_LE(d[l], d[1 - l]);
      for (int ch = 0; ch < 3; ++ch) sum[l][ch] += img[3 * i + ch];
      ++count[l];
    }
    for (int c = 0; c < 2; ++c)
      for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(r.centroids[c][ch], sum[c][ch] / count[c], 1e-6);
  }
}

TEST(KmeansTest, DeterministicPerSeed) {
  std::mt19937_64 rng(6);
  const auto img = random_image(16, 16, rng);
  for (auto init : {KmeansInit::Random, KmeansInit::PlusPlus}) {
    const auto a = kmeans_cluster(img, {3, init, 17, 100});
    const auto b = kmeans_cluster(img, {3, init, 17, 100});
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.inertia_history, b.inertia_history);
  }
}

TEST(KmeansTest, DegenerateAndInvalidInputs) {
  const auto flat = image_from(std::vector<std::array<double, 3>>(6, {40, 50, 60}), 2, 3);
  for (auto init : {KmeansInit::Random, KmeansInit::PlusPlus}) {
    const auto r = kmeans_cluster(flat, {2, init, 1, 100});
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.centroids[0], r.centroids[1]);
  }
  EXPECT_THROW(kmeans_cluster(flat, {1, KmeansInit::Random, 1, 100}), ArgumentError);
  EXPECT_THROW(kmeans_cluster(flat, {2, KmeansInit::Random, 1, 0}), ArgumentError);
  EXPECT_THROW(parse_kmeans_init("forgy"), ArgumentError);
  EXPECT_EQ(parse_kmeans_init("kmeans++"), KmeansInit::PlusPlus);
}

TEST(KmeansTest, ClusterMapEncoding) {
  std::vector<int> truth;
  const auto img = black_white(5, 7, 2, &truth);
  const auto r = kmeans_cluster(img, {2, KmeansInit::Random, 0, 100});
  const auto map = cluster_to_map<float>(r);
  EXPECT_EQ(map.shape(), (Shape{1, 5, 7, 2}));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_EQ(map[2 * i] + map[2 * i + 1], 1.f);
    EXPECT_EQ(map[2 * i + 1] > map[2 * i] ? 1 : 0, r.labels[i]);
  }
  ClusterResult ones;
  ones.height = 1;
  ones.width = 3;
  ones.centroids = {{0, 0, 0}, {1, 1, 1}};
  ones.labels = {1, 1, 1};
  EXPECT_EQ(cluster_to_map<double>(ones).vec(), (std::vector<double>{0, 1, 0, 1, 0, 1}));
  std::mt19937_64 rng(7);
  const auto k3 = kmeans_cluster(random_image(4, 4, rng), {3, KmeansInit::Random, 0, 100});
  EXPECT_THROW(cluster_to_map<float>(k3), ArgumentError);
}
