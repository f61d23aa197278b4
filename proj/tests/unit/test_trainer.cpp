#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aclseg/errors.hpp"
#include "aclseg/image_io.hpp"
#include "aclseg/trainer.hpp"

using namespace aclseg;
namespace fs = std::filesystem;

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

TrainConfig small_train() {
  TrainConfig t;
  t.lr = 1e-3;
  t.batch_size = 2;
  t.epochs = 3;
  t.input_size = 32;
  t.crop = 16;
  t.seed = 3;
  return t;
}

struct SynthSet {
  fs::path root;
  std::vector<SampleRecord> records;
};

SynthSet synth(const std::string& name, int count) {
  SynthSet s;
  s.root = fs::temp_directory_path() / ("aclseg_trainer_" + name);
  fs::remove_all(s.root);
  SyntheticSpec spec;
  spec.count = count;
  spec.size = 32;
  s.records = gen_synthetic(spec, s.root);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

// ---------------------------------------------------------------------- Adam

TEST(AdamTest, ZeroGradientLeavesParametersAlone) {
  ParamStore<float> store;
  store.add("w", Tensor<float>(Shape{1, 1, 2, 3}, 0.75f));
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(store, st, 1e-2, {});
  EXPECT_EQ(st.step, 3);
  for (float v : store.value("w").vec()) EXPECT_EQ(v, 0.75f);
}

TEST(AdamTest, FirstStepHasMagnitudeLr) {
  ParamStore<float> store;
  store.add("w", Tensor<float>(Shape{1, 1, 1, 4}, 1.0f));
  const std::vector<float> g = {0.5f, -2.0f, 1e-3f, -30.0f};
  for (int i = 0; i < 4; ++i) store.grad("w")[i] = g[i];
  AdamState st;
  const double lr = 1e-3;
  adam_step(store, st, lr, {});
  for (int i = 0; i < 4; ++i) {
    const double expected = 1.0 - lr * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(store.value("w")[i], expected, 2e-7) << i;
  }
  EXPECT_EQ(st.m.at("w").shape(), store.value("w").shape());
}

TEST(AdamTest, ShapeMismatchIsRejected) {
  ParamStore<float> store;
  store.add("w", Tensor<float>(Shape{1, 1, 1, 4}, 1.0f));
  AdamState st;
  st.m["w"] = Tensor<float>(Shape{1, 1, 1, 3});
  EXPECT_THROW(adam_step(store, st, 1e-3, {}), ArgumentError);
}

// ------------------------------------------------------------------ plateau

TEST(PlateauTest, DecreasingLossKeepsRate) {
  PlateauState st{1e-4};
  PlateauConfig cfg;
  for (int e = 0; e < 100; ++e) EXPECT_EQ(plateau_update(1.0 - 0.001 * e, st, cfg), 1e-4);
}

TEST(PlateauTest, FlatLossReducesAfterPatience) {
  PlateauState st{1e-4};
  PlateauConfig cfg;
  plateau_update(1.0, st, cfg);
  for (int e = 0; e < 19; ++e) EXPECT_EQ(plateau_update(1.0, st, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(plateau_update(1.0, st, cfg), 1e-5);
  EXPECT_EQ(st.bad_epochs, 0);
  for (int e = 0; e < 200; ++e) plateau_update(1.0, st, cfg);
  EXPECT_EQ(st.lr, cfg.min_lr);
}

TEST(PlateauTest, TinyImprovementBelowDeltaCountsAsFlat) {
  PlateauState st{1e-2};
  PlateauConfig cfg;
  cfg.patience = 2;
  cfg.delta = 1e-3;
  plateau_update(1.0, st, cfg);
  plateau_update(0.9995, st, cfg);
  EXPECT_DOUBLE_EQ(plateau_update(0.9991, st, cfg), 1e-3);
}

// ------------------------------------------------------------ configuration

TEST(TrainConfigTest, JsonRoundTripAndValidation) {
  const TrainConfig t = small_train();
  EXPECT_EQ(to_json(train_config_from_json(to_json(t))), to_json(t));
  EXPECT_THROW(train_config_from_json({{"learning_rate", 1}}), ArgumentError);
  TrainConfig bad = t;
  bad.batch_size = 0;
  EXPECT_THROW(validate(bad), ArgumentError);
  bad = t;
  bad.lr = -1;
  EXPECT_THROW(validate(bad), ArgumentError);
}

// ------------------------------------------------------------ training loop

TEST(TrainLoopTest, OneSampleEpochEqualsOneStep) {
  const auto set = synth("onestep", 1);
  const ModelConfig mcfg = small_config();
  TrainConfig tcfg = small_train();
  tcfg.crop = 0;
  tcfg.epochs = 1;

  ParamStore<float> a = init_model<float>(mcfg);
  TrainState st;
  train_loop(a, mcfg, tcfg, set.records, {}, st);
  ASSERT_EQ(st.log.size(), 1u);
  EXPECT_EQ(st.adam.step, 1);

  ParamStore<float> b = init_model<float>(mcfg);
  const Sample s = load_sample(set.records[0]);
  const auto prep = prepare_input(s.image, s.mask, 32, 0, PrepMode::Train, 0);
  Tensor<float> target(Shape{1, 32, 32, 1});
  for (std::size_t i = 0; i < prep.mask.size(); ++i) target[i] = prep.mask[i];
  const Tensor<float> cm = compute_cluster_map(prep.image, mcfg);
  AdamState adam;
  const double loss = train_step(b, mcfg, adam, tcfg.lr, {}, prep.image, &cm, target);
  EXPECT_EQ(loss, st.log[0].loss);
  for (const auto& [name, e] : a.params()) EXPECT_EQ(e.value.vec(), b.value(name).vec()) << name;
  for (const auto& [name, buf] : a.buffers()) EXPECT_EQ(buf.vec(), b.buffer(name).vec()) << name;
  fs::remove_all(set.root);
}

TEST(TrainLoopTest, LogsEveryEpochAndIsDeterministic) {
  const auto set = synth("determinism", 5);
  const ModelConfig mcfg = small_config();
  const TrainConfig tcfg = small_train();
  const fs::path out_a = set.root / "run_a", out_b = set.root / "run_b";

  ParamStore<float> a = init_model<float>(mcfg);
  TrainState sa;
  long steps = 0;
  const auto outs = train_loop(a, mcfg, tcfg, set.records, out_a, sa, [&](long, double) { ++steps; });
  ASSERT_EQ(sa.log.size(), 3u);
  EXPECT_EQ(steps, 9);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(sa.log[e].epoch, e + 1);
    EXPECT_TRUE(std::isfinite(sa.log[e].loss));
    EXPECT_EQ(sa.log[e].lr, tcfg.lr);
  }
  EXPECT_TRUE(fs::exists(outs.final_checkpoint));
  EXPECT_TRUE(fs::exists(outs.best_checkpoint));
  const std::string csv = slurp(outs.log_csv);
  EXPECT_EQ(csv.rfind("epoch,loss,lr\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  ParamStore<float> b = init_model<float>(mcfg);
  TrainState sb;
  train_loop(b, mcfg, tcfg, set.records, out_b, sb);
  EXPECT_EQ(sa.step_losses, sb.step_losses);
  EXPECT_EQ(slurp(out_a / "model.ckpt"), slurp(out_b / "model.ckpt"));
  EXPECT_EQ(slurp(out_a / "train_log.csv"), slurp(out_b / "train_log.csv"));
  fs::remove_all(set.root);
}

TEST(TrainLoopTest, ResumeFromCheckpointIsBitIdentical) {
  const auto set = synth("resume", 5);
  const ModelConfig mcfg = small_config();
  const TrainConfig tcfg = small_train();

  ParamStore<float> full = init_model<float>(mcfg);
  TrainState sf;
  train_loop(full, mcfg, tcfg, set.records, {}, sf);

  // Stop in the middle of the second epoch, then continue from disk.
  TrainConfig first = tcfg;
  first.max_steps = 4;
  ParamStore<float> part = init_model<float>(mcfg);
  TrainState sp;
  const auto outs = train_loop(part, mcfg, first, set.records, set.root / "part", sp);
  EXPECT_EQ(sp.adam.step, 4);
  EXPECT_EQ(sp.next_epoch, 2);
  EXPECT_EQ(sp.next_batch, 1);

  const Checkpoint ck = load_checkpoint(outs.final_checkpoint);
  EXPECT_EQ(to_json(model_config_from_checkpoint(ck)), to_json(mcfg));
  ParamStore<float> resumed = init_model<float>(mcfg);
  TrainState sr;
  restore_training_checkpoint(ck, resumed, sr);
  EXPECT_EQ(sr.adam.step, 4);
  train_loop(resumed, mcfg, tcfg, set.records, {}, sr);

  EXPECT_EQ(sr.step_losses, sf.step_losses);
  ASSERT_EQ(sr.log.size(), sf.log.size());
  for (std::size_t i = 0; i < sf.log.size(); ++i) {
    EXPECT_EQ(sr.log[i].epoch, sf.log[i].epoch);
    EXPECT_EQ(sr.log[i].loss, sf.log[i].loss);
  }
  for (const auto& [name, e] : full.params()) EXPECT_EQ(e.value.vec(), resumed.value(name).vec()) << name;
  fs::remove_all(set.root);
}

TEST(TrainLoopTest, RejectsEmptyTrainingSet) {
  const ModelConfig mcfg = small_config();
  ParamStore<float> store = init_model<float>(mcfg);
  TrainState st;
  EXPECT_THROW(train_loop(store, mcfg, small_train(), {}, {}, st), DataError);
}

// --------------------------------------------------------------- evaluation

TEST(EvaluateTest, GroundTruthAsPredictionIsPerfect) {
  const auto set = synth("gt_eval", 6);
  const auto r = evaluate_predictions(set.records, set.root / "GTmaps", EvalOptions{});
  EXPECT_EQ(r.samples, 6u);
  EXPECT_EQ(r.counts.fp, 0u);
  EXPECT_EQ(r.counts.fn, 0u);
  for (double v : {r.report.precision, r.report.recall, r.report.f1, r.report.miou, r.report.mcc, r.report.auc})
    EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_EQ(r.report.error_rate, 0.0);
  fs::remove_all(set.root);
}

TEST(EvaluateTest, ConstantScoresGiveChanceAuc) {
  const auto set = synth("flat_eval", 4);
  const fs::path pred = set.root / "flat";
  fs::create_directories(pred);
  for (const auto& rec : set.records)
    write_png(pred / (rec.stem + ".png"), Image8{32, 32, 1, std::vector<std::uint8_t>(32 * 32, 128)});
  const auto r = evaluate_predictions(set.records, pred, EvalOptions{});
  EXPECT_DOUBLE_EQ(r.report.auc, 0.5);
  EXPECT_EQ(r.counts.fn, 0u);
  EXPECT_THROW(evaluate_predictions(set.records, set.root / "missing", EvalOptions{}), Error);
  EXPECT_THROW(evaluate_predictions({}, pred, EvalOptions{}), DataError);
  fs::remove_all(set.root);
}

TEST(EvaluateTest, ModelEvaluationProducesReport) {
  const auto set = synth("model_eval", 3);
  ModelConfig mcfg = small_config();
  ParamStore<float> store = init_model<float>(mcfg);
  EvalOptions opt;
  opt.input_size = 32;
  const auto r = evaluate(store, mcfg, set.records, opt);
  EXPECT_EQ(r.samples, 3u);
  EXPECT_EQ(r.counts.tp + r.counts.fp + r.counts.tn + r.counts.fn, 3u * 32u * 32u);
  const auto j = to_json(r.report);
  for (const char* k : {"precision", "recall", "f1", "error_rate", "miou", "mcc", "auc"}) {
    ASSERT_TRUE(j.contains(k)) << k;
    EXPECT_TRUE(std::isfinite(j.at(k).get<double>())) << k;
  }
  EXPECT_EQ(j.size(), 7u);

  const Tensor<float> probs = predict_probabilities(store, mcfg, load_sample(set.records[0]).image, opt);
  EXPECT_EQ(probs.shape(), (Shape{1, 32, 32, 1}));
  for (float p : probs.vec()) {
    EXPECT_GE(p, 0.f);
    EXPECT_LE(p, 1.f);
  }
  fs::remove_all(set.root);
}
