#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aclseg/errors.hpp"
#include "aclseg/metrics.hpp"
#include "oracles.hpp"

using namespace aclseg;
using oracle::random_tensor;

namespace {

using Mask = std::vector<std::uint8_t>;

double loss_value(const Tensor<double>& p, const Tensor<double>& y, LossParts* parts = nullptr) {
  Tape<double> tape(nullptr, false);
  return bce_dice_loss(tape.input(p, false), y, parts).value()[0];
}

ConfusionCounts hand_counts() {
  return confusion_counts(Mask{1, 1, 1, 0, 0, 0, 0, 0}, Mask{1, 1, 0, 0, 1, 1, 0, 0});
}

}  // namespace

TEST(LossTest, PerfectPredictionIsNearZero) {
  Tensor<double> y(Shape{2, 4, 4, 1});
  for (std::size_t i = 0; i < y.size(); i += 3) y[i] = 1;
  LossParts parts;
  loss_value(y, y, &parts);
  EXPECT_LT(parts.bce, 1e-6);
  EXPECT_LT(parts.dice, 1e-6);
}

TEST(LossTest, HalfProbabilityBce) {
  Tensor<double> y(Shape{1, 3, 3, 1});
  for (std::size_t i = 0; i < y.size(); i += 2) y[i] = 1;
  LossParts parts;
  loss_value(Tensor<double>(y.shape(), 0.5), y, &parts);
  EXPECT_NEAR(parts.bce, std::log(2.0), 1e-12);
}

TEST(LossTest, DiceHandCase) {
  Tensor<double> y(Shape{1, 1, 8, 1}, 1.0);
  Tensor<double> p(Shape{1, 1, 8, 1}, std::vector<double>{1, 1, 1, 1, 0, 0, 0, 0});
  LossParts parts;
  const double total = loss_value(p, y, &parts);
  EXPECT_NEAR(parts.dice, 1.0 - 9.0 / 13.0, 1e-6);
  EXPECT_NEAR(parts.dice, 0.3077, 5e-5);
  EXPECT_NEAR(total, parts.bce + parts.dice, 1e-12);
}

TEST(LossTest, UsesCloudChannelOfTwo) {
  std::mt19937_64 rng(1);
  auto p1 = random_tensor<double>(Shape{1, 3, 3, 1}, rng, 0.05, 0.95);
  Tensor<double> p2(Shape{1, 3, 3, 2}, 0.3);
  for (std::size_t i = 0; i < p1.size(); ++i) p2[2 * i + 1] = p1[i];
  Tensor<double> y(Shape{1, 3, 3, 1});
  y[4] = 1;
  EXPECT_EQ(loss_value(p1, y), loss_value(p2, y));
  EXPECT_THROW(loss_value(p1, Tensor<double>(Shape{1, 3, 4, 1})), ShapeError);
}

TEST(LossTest, LargeMaskMatchesLongDoubleReference) {
  std::mt19937_64 rng(3);
  const auto p = random_tensor<double>(Shape{1, 256, 256, 1}, rng, 0.01, 0.99);
  Tensor<double> y(p.shape());
  for (auto& v : y.data()) v = static_cast<double>(rng() % 2);
  long double bce = 0, py = 0, sp = 0, sy = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double pv = p[i], yv = y[i];
    bce -= yv * std::log(pv) + (1 - yv) * std::log(1 - pv);
    py += pv * yv;
    sp += pv;
    sy += yv;
  }
  const long double ref = bce / p.size() + 1 - (2 * py + kDiceSmooth) / (sp + sy + kDiceSmooth);
  EXPECT_NEAR(loss_value(p, y), static_cast<double>(ref), 4e-16);
}

TEST(LossTest, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  ParamStore<double> store;
  store.add("p", random_tensor<double>(Shape{2, 3, 3, 2}, rng, 0.05, 0.95));
  Tensor<double> y(Shape{2, 3, 3, 1});
  for (auto& v : y.data()) v = static_cast<double>(rng() % 2);
  {
    Tape<double> tape(&store);
    tape.backward(bce_dice_loss(tape.param("p"), y));
  }
  const auto fd = finite_diff_grad([&](ParamStore<double>& s) { return loss_value(s.value("p"), y); },
                                   store, 1e-6);
  EXPECT_LT(max_relative_error(store.grad("p"), fd.at("p")), 1e-4);
}

TEST(ConfusionTest, Examples) {
  const Mask t{1, 0, 1, 1, 0};
  const auto same = confusion_counts(t, t);
  EXPECT_EQ(same.fp, 0u);
  EXPECT_EQ(same.fn, 0u);
  const Mask inv{0, 1, 0, 0, 1};
  const auto comp = confusion_counts(inv, t);
  EXPECT_EQ(comp.tp, 0u);
  EXPECT_EQ(comp.tn, 0u);
  const auto c = hand_counts();
  EXPECT_EQ(c, (ConfusionCounts{2, 1, 3, 2}));
  EXPECT_EQ(c.total(), 8u);
  EXPECT_THROW(confusion_counts(Mask{2}, Mask{1}), ArgumentError);
  EXPECT_THROW(confusion_counts(Mask{1, 0}, Mask{1}), ShapeError);
}

TEST(MetricsTest, HandCase) {
  const auto c = hand_counts();
  const auto m = binary_metrics(c);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(m.error_rate, 0.375);
  EXPECT_DOUBLE_EQ(miou(c).miou, 0.45);
  EXPECT_DOUBLE_EQ(mcc(c).value, 4.0 / std::sqrt(240.0));
  EXPECT_NEAR(mcc(c).value, 0.2582, 5e-5);
}

TEST(MetricsTest, PerfectComplementAndAllPositive) {
  const Mask t{1, 1, 0, 0, 1, 0};
  const auto perfect = confusion_counts(t, t);
  const auto pm = binary_metrics(perfect);
  EXPECT_EQ(pm.precision, 1.0);
  EXPECT_EQ(pm.recall, 1.0);
  EXPECT_EQ(pm.f1, 1.0);
  EXPECT_EQ(pm.error_rate, 0.0);
  EXPECT_EQ(miou(perfect).miou, 1.0);
  EXPECT_EQ(mcc(perfect).value, 1.0);

  const Mask inv{0, 0, 1, 1, 0, 1};
  const auto comp = confusion_counts(inv, t);
  EXPECT_EQ(miou(comp).miou, 0.0);
  EXPECT_EQ(mcc(comp).value, -1.0);

  const auto allpos = binary_metrics(confusion_counts(Mask(6, 1), t));
  EXPECT_EQ(allpos.precision, 0.5);
  EXPECT_EQ(allpos.recall, 1.0);
}

TEST(MetricsTest, DegenerateRatiosAreFlagged) {
  const auto c = confusion_counts(Mask{0, 0, 0}, Mask{0, 0, 0});
  const auto m = binary_metrics(c);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_TRUE(m.precision_degenerate);
  EXPECT_TRUE(m.recall_degenerate);
  EXPECT_TRUE(m.f1_degenerate);
  EXPECT_TRUE(mcc(c).degenerate);
  EXPECT_EQ(mcc(c).value, 0.0);
  EXPECT_THROW(binary_metrics(ConfusionCounts{}), ArgumentError);
}

TEST(MetricsTest, MatchesNaiveRecountOnRandomMasks) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const double density = (seed % 10) / 9.0;
    std::bernoulli_distribution b(density), c(0.5);
    Mask pred(256), truth(256);
    for (int i = 0; i < 256; ++i) {
      truth[i] = c(rng);
      pred[i] = b(rng) ? truth[i] : c(rng);
    }
    const auto counts = confusion_counts(pred, truth);
    const auto ref = oracle::recount(pred, truth);
    ASSERT_EQ(counts.tp, ref.tp);
    ASSERT_EQ(counts.fp, ref.fp);
    ASSERT_EQ(counts.tn, ref.tn);
    ASSERT_EQ(counts.fn, ref.fn);
    const auto want = oracle::naive_scores(ref);
    const auto m = binary_metrics(counts);
    EXPECT_EQ(m.precision, want.precision);
    EXPECT_EQ(m.recall, want.recall);
    EXPECT_EQ(m.f1, want.f1);
    EXPECT_EQ(m.error_rate, want.error_rate);
    EXPECT_EQ(miou(counts).miou, want.miou);
    EXPECT_EQ(mcc(counts).value, want.mcc);
    EXPECT_GE(mcc(counts).value, -1.0);
    EXPECT_LE(mcc(counts).value, 1.0);
  }
}

TEST(MetricsTest, DatasetMiouAggregatesCounts) {
  const std::vector<Mask> preds{{1, 0, 0, 0}, {1, 1, 1, 1}};
  const std::vector<Mask> truths{{1, 1, 0, 0}, {1, 0, 0, 0}};
  ConfusionCounts total = confusion_counts(preds[0], truths[0]);
  total += confusion_counts(preds[1], truths[1]);
  EXPECT_EQ(miou(preds, truths).miou, miou(total).miou);
}

TEST(RocTest, PerfectAndUninformative) {
  const std::vector<double> s{1, 1, 0, 0, 1};
  const Mask t{1, 1, 0, 0, 1};
  EXPECT_EQ(roc_curve(s, t).auc, 1.0);
  const auto flat = roc_curve(std::vector<double>(5, 0.5), t);
  EXPECT_EQ(flat.points, (std::vector<std::pair<double, double>>{{0, 0}, {1, 1}}));
  EXPECT_EQ(flat.auc, 0.5);
  EXPECT_THROW(roc_curve(std::vector<double>{0.1, 0.2}, Mask{1, 1}), ArgumentError);
}

TEST(RocTest, MatchesPairwiseOracle) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> s(100);
    Mask t(100);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::uniform_real_distribution<double> fine(0, 1);
    for (int i = 0; i < 100; ++i) {
      t[i] = rng() % 2;
      s[i] = seed % 2 ? coarse(rng) / 9.0 : fine(rng);  // odd seeds exercise ties
    }
    t[0] = 1;
    t[1] = 0;
    const auto roc = roc_curve(s, t);
    EXPECT_NEAR(roc.auc, oracle::pairwise_auc(s, t), 1e-9);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      EXPECT_GE(roc.points[i].first, roc.points[i - 1].first);
      EXPECT_GE(roc.points[i].second, roc.points[i - 1].second);
    }
    EXPECT_EQ(roc.points.front(), (std::pair<double, double>{0, 0}));
    EXPECT_EQ(roc.points.back(), (std::pair<double, double>{1, 1}));
    std::vector<double> warped(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) warped[i] = std::exp(3 * s[i]) - 7;
    EXPECT_NEAR(roc_curve(warped, t).auc, roc.auc, 1e-12);
  }
}

TEST(RocTest, ThinningKeepsEndpointsAndAuc) {
  std::mt19937_64 rng(3);
  std::vector<double> s(5000);
  Mask t(5000);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    t[i] = rng() % 2;
    s[i] = u(rng) + 0.3 * t[i];
  }
  const auto full = roc_curve(s, t, 100000);
  const auto thin = roc_curve(s, t, 50);
  EXPECT_LE(thin.points.size(), 51u);
  EXPECT_EQ(thin.points.front(), (std::pair<double, double>{0, 0}));
  EXPECT_EQ(thin.points.back(), (std::pair<double, double>{1, 1}));
  EXPECT_EQ(thin.auc, full.auc);
}

TEST(ReportTest, JsonSchemaAndCsv) {
  const auto c = hand_counts();
  const auto roc = roc_curve(std::vector<double>{0.9, 0.8, 0.7, 0.1, 0.6, 0.2, 0.3, 0.1},
                             Mask{1, 1, 0, 0, 1, 1, 0, 0});
  const auto j = to_json(make_report(c, roc));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"auc", "error_rate", "f1", "mcc", "miou", "precision", "recall"}));
  const std::string csv = roc_to_csv(roc);
  EXPECT_EQ(csv.rfind("fpr,tpr\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), roc.points.size() + 1);
}
