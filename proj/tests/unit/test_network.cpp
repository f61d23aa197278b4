#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aclseg/errors.hpp"
#include "aclseg/metrics.hpp"
#include "aclseg/model.hpp"
#include "oracles.hpp"

using namespace aclseg;
using oracle::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.backbone.widths = {4, 6, 8, 10};
  cfg.backbone.blocks_per_stage = 1;
  cfg.aspp.channels = 6;
  cfg.aspp.dilations = {1, 2, 3};
  cfg.decoder_channels = 5;
  cfg.low_level_channels = 3;
  return cfg;
}

template <typename T>
Tensor<T> cluster_input(const Tensor<T>& image, const ModelConfig& cfg) {
  return compute_cluster_map(image, cfg);
}

}  // namespace

// ------------------------------------------------------------------ backbone

TEST(BackboneTest, StrideArithmetic) {
  BackboneConfig cfg;
  ParamStore<float> store;
  init_backbone(store, cfg, 1);
  for (auto [in, low, deep] : {std::tuple{64, 16, 4}, std::tuple{304, 76, 19}}) {
    Tape<float> tape(&store, false);
    BlockOptions opt;
    opt.mode = ops::NormMode::Infer;
    auto f = backbone_forward(tape.input(Tensor<float>(Shape{1, in, in, 3}, 0.5f)), cfg, opt);
    EXPECT_EQ(f.low_level.shape(), (Shape{1, low, low, cfg.low_level_channels()}));
    EXPECT_EQ(f.deep.shape(), (Shape{1, deep, deep, cfg.deep_channels()}));
  }
  Tape<float> tape(&store, false);
  EXPECT_THROW(backbone_forward(tape.input(Tensor<float>(Shape{1, 300, 300, 3})), cfg, BlockOptions{}),
               ArgumentError);
  BackboneConfig bad = cfg;
  bad.name = "efficientnet-b0";
  EXPECT_THROW(validate(bad), ArgumentError);
}

TEST(BackboneTest, EveryParameterReceivesGradient) {
  BackboneConfig cfg;
  cfg.widths = {4, 6, 8, 10};
  ParamStore<double> store;
  init_backbone(store, cfg, 2);
  std::mt19937_64 rng(2);
  Tape<double> tape(&store);
  auto f = backbone_forward(tape.input(random_tensor<double>(Shape{2, 32, 32, 3}, rng, 0, 1)), cfg,
                            BlockOptions{});
  const auto w1 = random_tensor<double>(f.low_level.shape(), rng);
  const auto w2 = random_tensor<double>(f.deep.shape(), rng);
  tape.backward(ad::add(ad::weighted_sum(f.low_level, w1), ad::weighted_sum(f.deep, w2)));
  for (const auto& [name, e] : store.params()) {
    const bool any = std::any_of(e.grad.vec().begin(), e.grad.vec().end(), [](double g) { return g != 0; });
    EXPECT_TRUE(any) << name;
  }
}

// ---------------------------------------------------------------------- ASPP

TEST(AsppTest, ShapesAndUniformPooledBranch) {
  AsppConfig cfg;
  cfg.channels = 8;
  ParamStore<float> store;
  init_aspp(store, 10, cfg, 3);
  std::mt19937_64 rng(3);
  for (auto [h, w] : {std::pair{4, 4}, std::pair{3, 7}, std::pair{19, 19}}) {
    Tape<float> tape(&store, false);
    AsppTrace<float> trace;
    BlockOptions opt;
    opt.mode = ops::NormMode::Infer;
    auto y = aspp_forward(tape.input(random_tensor<float>(Shape{2, h, w, 10}, rng)), cfg, opt, &trace);
    EXPECT_EQ(y.shape(), (Shape{2, h, w, 8}));
    EXPECT_EQ(trace.concat.shape().c, 5 * 8);
    EXPECT_TRUE(y.value().all_finite());
    const auto& p = trace.pooled.value();
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          for (int c = 0; c < 8; ++c) EXPECT_EQ(p.at(n, i, j, c), p.at(n, 0, 0, c));
  }
}

TEST(AsppTest, FiniteDifference) {
  AsppConfig cfg;
  cfg.channels = 3;
  ParamStore<double> store;
  init_aspp(store, 4, cfg, 4);
  std::mt19937_64 rng(4);
  store.add("x", random_tensor<double>(Shape{1, 8, 8, 4}, rng));
  const auto weights = random_tensor<double>(Shape{1, 8, 8, 3}, rng);
  // Infer mode keeps the objective free of batch-statistics coupling on the 1x1 pooled map.
  BlockOptions opt;
  opt.mode = ops::NormMode::Infer;
  auto f = [&](ParamStore<double>& s, bool grad) {
    Tape<double> tape(&s, grad);
    auto loss = ad::weighted_sum(aspp_forward(tape.param("x"), cfg, opt), weights);
    const double v = loss.value()[0];
    if (grad) tape.backward(loss);
    return v;
  };
  store.zero_grad();
  f(store, true);
  const auto fd = finite_diff_grad([&](ParamStore<double>& s) { return f(s, false); }, store, 1e-5);
  for (const auto& [name, g] : fd) EXPECT_LT(max_relative_error(store.grad(name), g), 1e-4) << name;
}

// ----------------------------------------------------------------------- GAM

TEST(GamTest, AttentionInvariants) {
  std::mt19937_64 rng(5);
  for (int c1 : {1, 2, 5}) {
    ParamStore<double> store;
    init_gam(store, 3, c1, 5);
    store.value("gam.squeeze.b") = random_tensor<double>(vector_shape(c1), rng);
    Tape<double> tape(&store, false);
    GamTrace<double> trace;
    auto img = tape.input(random_tensor<double>(Shape{2, 16, 16, 3}, rng, 0, 1));
    auto fe_t = random_tensor<double>(Shape{2, 4, 4, c1}, rng, -5, 5);
    auto out = gam_forward(img, tape.input(fe_t), &trace);
    ASSERT_EQ(out.shape(), fe_t.shape());
    EXPECT_EQ(trace.resized.shape(), (Shape{2, 4, 4, 3}));
    const auto& a = trace.attention.value();
    for (std::size_t p = 0; p < a.size() / c1; ++p) {
      double s = 0;
      for (int c = 0; c < c1; ++c) s += a[p * c1 + c];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    for (std::size_t i = 0; i < fe_t.size(); ++i) {
      if (c1 >= 2) EXPECT_LT(std::abs(out.value()[i]), std::abs(fe_t[i]));
      else EXPECT_EQ(out.value()[i], fe_t[i]);
    }
    Tape<double> zt(&store, false);
    auto zero = gam_forward(zt.input(img.value()), zt.input(Tensor<double>(fe_t.shape(), 0.0)));
    for (double v : zero.value().vec()) EXPECT_EQ(v, 0.0);
  }
}

TEST(GamTest, UniformLogitShiftLeavesOutputUnchanged) {
  std::mt19937_64 rng(6);
  ParamStore<double> store;
  init_gam(store, 3, 4, 6);
  const auto img = random_tensor<double>(Shape{1, 8, 8, 3}, rng, 0, 1);
  const auto fe = random_tensor<double>(Shape{1, 2, 2, 4}, rng);
  Tape<double> t1(&store, false);
  const auto a = gam_forward(t1.input(img), t1.input(fe)).value();
  for (auto& b : store.value("gam.squeeze.b").data()) b += 3.25;
  Tape<double> t2(&store, false);
  const auto b = gam_forward(t2.input(img), t2.input(fe)).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(GamTest, ChannelMismatchIsShapeError) {
  ParamStore<double> store;
  init_gam(store, 3, 4, 7);
  Tape<double> tape(&store, false);
  EXPECT_THROW(gam_forward(tape.input(Tensor<double>(Shape{1, 8, 8, 3})),
                           tape.input(Tensor<double>(Shape{1, 2, 2, 5}))),
               ShapeError);
}

TEST(GamTest, FiniteDifferenceOnKernelAndFeatures) {
  std::mt19937_64 rng(8);
  ParamStore<double> store;
  init_gam(store, 3, 4, 8);
  store.add("fe", random_tensor<double>(Shape{1, 3, 3, 4}, rng));
  const auto img = random_tensor<double>(Shape{1, 6, 6, 3}, rng, 0, 1);
  const auto weights = random_tensor<double>(Shape{1, 3, 3, 4}, rng);
  auto f = [&](ParamStore<double>& s, bool grad) {
    Tape<double> tape(&s, grad);
    auto loss = ad::weighted_sum(gam_forward(tape.input(img, false), tape.param("fe")), weights);
    const double v = loss.value()[0];
    if (grad) tape.backward(loss);
    return v;
  };
  store.zero_grad();
  f(store, true);
  const auto fd = finite_diff_grad([&](ParamStore<double>& s) { return f(s, false); }, store, 1e-5);
  for (const auto& [name, g] : fd) EXPECT_LT(max_relative_error(store.grad(name), g), 1e-4) << name;
}

// --------------------------------------------------------------------- model

TEST(ModelTest, OutputShapeAndRange) {
  const ModelConfig cfg;
  auto store = init_model<float>(cfg);
  std::mt19937_64 rng(9);
  const auto img = random_tensor<float>(Shape{1, 32, 48, 3}, rng, 0, 1);
  const auto cm = cluster_input(img, cfg);
  const auto probs = model_predict(store, cfg, img, &cm);
  EXPECT_EQ(probs.shape(), (Shape{1, 32, 48, 2}));
  for (float p : probs.vec()) {
    EXPECT_GT(p, 0.f);
    EXPECT_LT(p, 1.f);
  }
  const auto again = model_predict(store, cfg, img, &cm);
  EXPECT_EQ(probs.vec(), again.vec());
  EXPECT_THROW(model_predict(store, cfg, img, static_cast<const Tensor<float>*>(nullptr)), ArgumentError);
}

TEST(ModelTest, AblationFlagsDisconnectBranches) {
  std::mt19937_64 rng(10);
  const auto img = random_tensor<float>(Shape{1, 32, 32, 3}, rng, 0, 1);
  for (int which = 0; which < 2; ++which) {
    ModelConfig cfg = small_config();
    const char* prefix = which == 0 ? "gam." : "cluster.";
    (which == 0 ? cfg.use_gam : cfg.use_kmeans) = false;
    auto store = init_model<float>(cfg);
    const auto cm = cluster_input(img, cfg);
    const Tensor<float>* cmp = cfg.use_kmeans ? &cm : nullptr;
    const auto before = model_predict(store, cfg, img, cmp);
    for (auto& [name, e] : store.params())
      if (name.rfind(prefix, 0) == 0)
        for (auto& v : e.value.data()) v += 0.5f;
    EXPECT_EQ(model_predict(store, cfg, img, cmp).vec(), before.vec()) << prefix;

    // With the branch enabled the same perturbation must matter.
    ModelConfig on = small_config();
    auto s2 = init_model<float>(on);
    const auto cm2 = cluster_input(img, on);
    const auto b2 = model_predict(s2, on, img, &cm2);
    for (auto& [name, e] : s2.params())
      if (name.rfind(prefix, 0) == 0)
        for (auto& v : e.value.data()) v += 0.5f;
    EXPECT_NE(model_predict(s2, on, img, &cm2).vec(), b2.vec()) << prefix;
  }
}

TEST(ModelTest, LayerInventoryReflectsAblation) {
  ModelConfig cfg = small_config();
  auto has_prefix = [](const std::vector<std::string>& names, const std::string& p) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(p, 0) == 0; });
  };
  const auto full = layer_inventory(cfg);
  EXPECT_TRUE(has_prefix(full, "gam."));
  EXPECT_TRUE(has_prefix(full, "cluster."));
  cfg.use_gam = cfg.use_kmeans = false;
  const auto plain = layer_inventory(cfg);
  EXPECT_FALSE(has_prefix(plain, "gam."));
  EXPECT_FALSE(has_prefix(plain, "cluster."));
  for (const char* p : {"backbone.", "aspp.pool", "aspp.conv1x1", "aspp.atrous", "aspp.fuse",
                        "decoder.low_reduce", "decoder.enhance0", "decoder.enhance1", "head."})
    EXPECT_TRUE(has_prefix(plain, p)) << p;
  EXPECT_EQ(full.size(), plain.size() + 2 + 3);  // squeeze w,b; proj conv, gamma, beta
}

TEST(ModelTest, ConfigJsonRoundTripAndValidation) {
  ModelConfig cfg = small_config();
  cfg.use_gam = false;
  cfg.cluster_encoding = ClusterEncoding::CentroidRgb;
  cfg.kmeans.init = KmeansInit::PlusPlus;
  const auto j = to_json(cfg);
  EXPECT_EQ(to_json(model_config_from_json(j)), j);
  EXPECT_THROW(model_config_from_json({{"bogus", 1}}), ArgumentError);
  EXPECT_THROW(model_config_from_json({{"aspp_channels", 0}}), ArgumentError);
  EXPECT_THROW(model_config_from_json({{"backbone", "resnet50"}}), ArgumentError);
}

TEST(ModelTest, PredictMaskThresholds) {
  Tensor<float> probs(Shape{1, 1, 3, 2}, std::vector<float>{0.9f, 0.7f, 0.1f, 0.5f, 0.6f, 0.2f});
  EXPECT_EQ(predict_mask(probs, 0.5), (std::vector<std::uint8_t>{1, 1, 0}));
  EXPECT_EQ(predict_mask(probs, 0.999999), (std::vector<std::uint8_t>{0, 0, 0}));
  EXPECT_THROW(predict_mask(probs, 1.0), ArgumentError);
}

TEST(ModelTest, CentroidEncodingRuns) {
  ModelConfig cfg = small_config();
  cfg.cluster_encoding = ClusterEncoding::CentroidRgb;
  auto store = init_model<float>(cfg);
  std::mt19937_64 rng(11);
  const auto img = random_tensor<float>(Shape{1, 16, 16, 3}, rng, 0, 1);
  const auto cm = cluster_input(img, cfg);
  EXPECT_EQ(cm.c(), 3);
  EXPECT_EQ(model_predict(store, cfg, img, &cm).shape(), (Shape{1, 16, 16, 2}));
}

TEST(ModelTest, EndToEndFiniteDifference) {
  ModelConfig cfg = small_config();
  auto store = init_model<double>(cfg);
  std::mt19937_64 rng(12);
  const auto img = random_tensor<double>(Shape{1, 32, 32, 3}, rng, 0, 1);
  const auto cm = cluster_input(img, cfg);
  Tensor<double> target(Shape{1, 32, 32, 1});
  for (auto& v : target.data()) v = static_cast<double>(rng() % 2);
  auto f = [&](ParamStore<double>& s, bool grad) {
    auto saved = s.buffers();
    Tape<double> tape(&s, grad);
    auto probs = model_forward(tape.input(img, false), tape.input(cm, false), cfg, ops::NormMode::Train);
    auto loss = bce_dice_loss(probs, target);
    const double v = loss.value()[0];
    if (grad) tape.backward(loss);
    s.buffers() = saved;
    return v;
  };
  store.zero_grad();
  f(store, true);
  const auto samples = finite_diff_sampled([&](ParamStore<double>& s) { return f(s, false); }, store,
                                           1e-5, 3, 12);
  double worst = 0;
  for (const auto& s : samples) {
    const double a = store.grad(s.name)[s.index];
    worst = std::max(worst, std::abs(a - s.numeric) / std::max({std::abs(a), std::abs(s.numeric), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}
