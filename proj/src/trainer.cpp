#include "aclseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "aclseg/image_io.hpp"
#include "aclseg/ops.hpp"
#include "aclseg/rng.hpp"

namespace aclseg {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const TrainConfig& c) {
  if (!(c.lr > 0)) throw ArgumentError("lr must be > 0");
  if (c.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (c.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (c.max_steps < 0) throw ArgumentError("max_steps must be >= 0");
  if (c.patience < 1) throw ArgumentError("patience must be >= 1");
  if (!(c.factor > 0 && c.factor < 1)) throw ArgumentError("plateau factor must be in (0,1)");
  if (c.min_lr < 0) throw ArgumentError("min_lr must be >= 0");
  if (!(c.beta1 >= 0 && c.beta1 < 1) || !(c.beta2 >= 0 && c.beta2 < 1))
    throw ArgumentError("Adam betas must be in [0,1)");
  if (!(c.adam_eps > 0)) throw ArgumentError("adam_eps must be > 0");
  if (c.input_size < 16) throw ArgumentError("input_size must be >= 16");
  if (c.crop < 0 || c.crop > adjust_target(c.input_size))
    throw ArgumentError("crop must be in [0, adjusted input_size]");
  if (c.crop > 0 && c.crop % 16 != 0) throw ArgumentError("crop must be a multiple of 16");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"patience", c.patience},
          {"factor", c.factor},
          {"min_lr", c.min_lr},
          {"improvement_delta", c.improvement_delta},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"input_size", c.input_size},
          {"crop", c.crop},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ArgumentError("train config must be a JSON object");
  const json defaults = to_json(TrainConfig{});
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ArgumentError("unknown train config key: " + key);
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.patience = j.value("patience", c.patience);
    c.factor = j.value("factor", c.factor);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.improvement_delta = j.value("improvement_delta", c.improvement_delta);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.input_size = j.value("input_size", c.input_size);
    c.crop = j.value("crop", c.crop);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("invalid train config: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------- Adam

void adam_step(ParamStore<float>& store, AdamState& state, double lr, const AdamHyper& hyper) {
  ++state.step;
  const double c1 = 1 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(hyper.beta2, static_cast<double>(state.step));
  const float b1 = static_cast<float>(hyper.beta1), b2 = static_cast<float>(hyper.beta2);
  for (auto& [name, e] : store.params()) {
    auto mit = state.m.find(name);
    if (mit == state.m.end()) mit = state.m.emplace(name, Tensor<float>::zeros_like(e.value)).first;
    auto vit = state.v.find(name);
    if (vit == state.v.end()) vit = state.v.emplace(name, Tensor<float>::zeros_like(e.value)).first;
    Tensor<float>& m = mit->second;
    Tensor<float>& v = vit->second;
    if (m.shape() != e.value.shape() || v.shape() != e.value.shape() ||
        e.grad.shape() != e.value.shape())
      throw ArgumentError("adam_step: state shape mismatch for " + name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const float g = e.grad[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      e.value[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

double plateau_update(double epoch_loss, PlateauState& state, const PlateauConfig& cfg) {
  if (epoch_loss < state.best - cfg.delta) {
    state.best = epoch_loss;
    state.bad_epochs = 0;
    return state.lr;
  }
  if (++state.bad_epochs >= cfg.patience) {
    state.lr = std::max(state.lr * cfg.factor, cfg.min_lr);
    state.bad_epochs = 0;
  }
  return state.lr;
}

// -------------------------------------------------------------- training loop

namespace {

struct CachedSample {
  std::string stem;
  Tensor<float> image;  // resized to target x target
  std::vector<std::uint8_t> mask;
  Tensor<float> cluster;  // same resolution as image, empty shape when unused
  bool has_cluster = false;
};

std::vector<CachedSample> cache_samples(const std::vector<SampleRecord>& records,
                                        const ModelConfig& mcfg, const TrainConfig& tcfg) {
  std::vector<CachedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Sample s = load_sample(r);
    Prepared p = prepare_input(s.image, s.mask, tcfg.input_size, 0, PrepMode::Train, tcfg.seed);
    CachedSample c{r.stem, std::move(p.image), std::move(p.mask), Tensor<float>(), false};
    if (mcfg.use_kmeans) {
      c.cluster = compute_cluster_map(c.image, mcfg);
      c.has_cluster = true;
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Copies an H x W window of a 1 x T x T x C tensor into slot b of a batch tensor.
void copy_window(const Tensor<float>& src, int oy, int ox, Tensor<float>& dst, int b) {
  const int S = dst.h(), C = dst.c();
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j)
      for (int c = 0; c < C; ++c) dst.at(b, i, j, c) = src.at(0, i + oy, j + ox, c);
}

}  // namespace

double train_step(ParamStore<float>& store, const ModelConfig& mcfg, AdamState& adam, double lr,
                  const AdamHyper& hyper, const Tensor<float>& images, const Tensor<float>* clusters,
                  const Tensor<float>& targets) {
  store.zero_grad();
  Tape<float> tape(&store);
  Var<float> x = tape.input(images, false);
  std::optional<Var<float>> cm;
  if (clusters) cm = tape.input(*clusters, false);
  Var<float> probs = model_forward(x, cm, mcfg, ops::NormMode::Train);
  Var<float> loss = bce_dice_loss(probs, targets);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  adam_step(store, adam, lr, hyper);
  return value;
}

std::string log_to_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,lr\n";
  char line[96];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", e.epoch, e.loss, e.lr);
    out += line;
  }
  return out;
}

namespace {

json state_to_json(const TrainState& s) {
  json log = json::array();
  for (const auto& e : s.log) log.push_back({e.epoch, e.loss, e.lr});
  return {{"next_epoch", s.next_epoch},
          {"next_batch", s.next_batch},
          {"epoch_loss_sum", s.epoch_loss_sum},
          {"epoch_samples", s.epoch_samples},
          {"lr", s.plateau.lr},
          {"best", std::isfinite(s.plateau.best) ? json(s.plateau.best) : json(nullptr)},
          {"bad_epochs", s.plateau.bad_epochs},
          {"adam_step", s.adam.step},
          {"log", log},
          {"step_losses", s.step_losses}};
}

void state_from_json(const json& j, TrainState& s) {
  s.next_epoch = j.at("next_epoch").get<int>();
  s.next_batch = j.at("next_batch").get<int>();
  s.epoch_loss_sum = j.at("epoch_loss_sum").get<double>();
  s.epoch_samples = j.at("epoch_samples").get<long>();
  s.plateau.lr = j.at("lr").get<double>();
  s.plateau.best = j.at("best").is_null() ? std::numeric_limits<double>::infinity()
                                           : j.at("best").get<double>();
  s.plateau.bad_epochs = j.at("bad_epochs").get<int>();
  s.adam.step = j.at("adam_step").get<long>();
  s.log.clear();
  for (const auto& e : j.at("log"))
    s.log.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>()});
  s.step_losses = j.at("step_losses").get<std::vector<double>>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

Checkpoint make_training_checkpoint(const ParamStore<float>& store, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg, const TrainState& state) {
  Checkpoint ck;
  store_to_checkpoint(store, ck);
  for (const auto& [name, t] : state.adam.m) ck.groups["adam_m"].emplace(name, t);
  for (const auto& [name, t] : state.adam.v) ck.groups["adam_v"].emplace(name, t);
  ck.meta["model_config"] = to_json(mcfg);
  ck.meta["train_config"] = to_json(tcfg);
  ck.meta["train_state"] = state_to_json(state);
  return ck;
}

void restore_training_checkpoint(const Checkpoint& ckpt, ParamStore<float>& store,
                                 TrainState& state) {
  checkpoint_to_store(ckpt, store);
  state = TrainState{};
  if (auto it = ckpt.groups.find("adam_m"); it != ckpt.groups.end()) state.adam.m = it->second;
  if (auto it = ckpt.groups.find("adam_v"); it != ckpt.groups.end()) state.adam.v = it->second;
  if (ckpt.meta.contains("train_state")) state_from_json(ckpt.meta.at("train_state"), state);
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model_config")) throw DataError("checkpoint has no model_config");
  return model_config_from_json(ckpt.meta.at("model_config"));
}

TrainOutputs train_loop(ParamStore<float>& store, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::vector<SampleRecord>& train_records, const fs::path& out_dir,
                        TrainState& state, const StepCallback& on_step) {
  validate(tcfg);
  if (train_records.empty()) throw DataError("train_loop needs at least one training sample");
  TrainOutputs outputs;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    outputs.final_checkpoint = out_dir / "model.ckpt";
    outputs.best_checkpoint = out_dir / "best.ckpt";
    outputs.log_csv = out_dir / "train_log.csv";
  }
  if (state.adam.step == 0 && state.log.empty() && state.next_epoch == 1) state.plateau.lr = tcfg.lr;
  // A partial epoch left by max_steps is logged provisionally; the resumed run re-logs it.
  if (state.next_batch > 0 && !state.log.empty() && state.log.back().epoch == state.next_epoch)
    state.log.pop_back();

  const auto samples = cache_samples(train_records, mcfg, tcfg);
  const int target = samples.front().image.h();
  const int crop = tcfg.crop > 0 ? tcfg.crop : target;
  const int slack = target - crop;
  const AdamHyper hyper{tcfg.beta1, tcfg.beta2, tcfg.adam_eps};
  const PlateauConfig pcfg{tcfg.patience, tcfg.factor, tcfg.min_lr, tcfg.improvement_delta};
  const int n = static_cast<int>(samples.size());
  const int batches = (n + tcfg.batch_size - 1) / tcfg.batch_size;

  auto save = [&](const fs::path& path) {
    if (!path.empty()) save_checkpoint(path, make_training_checkpoint(store, mcfg, tcfg, state));
  };

  bool stopped = false;
  for (int epoch = state.next_epoch; epoch <= tcfg.epochs && !stopped; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_stream(tcfg.seed, "epoch/" + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    for (int b = state.next_batch; b < batches; ++b) {
      if (tcfg.max_steps > 0 && state.adam.step >= tcfg.max_steps) {
        stopped = true;
        break;
      }
      const int lo = b * tcfg.batch_size, hi = std::min(n, lo + tcfg.batch_size);
      const int bs = hi - lo;
      Tensor<float> images(Shape{bs, crop, crop, 3});
      Tensor<float> targets(Shape{bs, crop, crop, 1});
      Tensor<float> clusters(Shape{bs, crop, crop, mcfg.cluster_channels()});
      for (int k = 0; k < bs; ++k) {
        const CachedSample& s = samples[order[lo + k]];
        int oy = 0, ox = 0;
        if (slack > 0) {
          auto crng = make_stream(tcfg.seed, "crop/" + std::to_string(epoch) + "/" + s.stem);
          std::uniform_int_distribution<int> off(0, slack);
          oy = off(crng);
          ox = off(crng);
        }
        copy_window(s.image, oy, ox, images, k);
        if (s.has_cluster) copy_window(s.cluster, oy, ox, clusters, k);
        for (int i = 0; i < crop; ++i)
          for (int j = 0; j < crop; ++j)
            targets.at(k, i, j, 0) = s.mask[static_cast<std::size_t>(i + oy) * target + j + ox];
      }
      const double loss = train_step(store, mcfg, state.adam, state.plateau.lr, hyper, images,
                                     mcfg.use_kmeans ? &clusters : nullptr, targets);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b) + " (first sample " + samples[order[lo]].stem + ")");
      state.epoch_loss_sum += loss * bs;
      state.epoch_samples += bs;
      state.step_losses.push_back(loss);
      state.next_batch = b + 1;
      if (on_step) on_step(state.adam.step, loss);
    }
    if (state.epoch_samples == 0) break;

    const double epoch_loss = state.epoch_loss_sum / static_cast<double>(state.epoch_samples);
    const double used_lr = state.plateau.lr;
    const bool improved = epoch_loss < state.plateau.best - pcfg.delta;
    state.log.push_back({epoch, epoch_loss, used_lr});
    if (!stopped || state.next_batch >= batches) {
      plateau_update(epoch_loss, state.plateau, pcfg);
      state.next_epoch = epoch + 1;
      state.next_batch = 0;
      state.epoch_loss_sum = 0;
      state.epoch_samples = 0;
    }
    if (improved && !stopped) save(outputs.best_checkpoint);
  }

  save(outputs.final_checkpoint);
  if (!outputs.log_csv.empty()) write_text(outputs.log_csv, log_to_csv(state.log));
  return outputs;
}

// ----------------------------------------------------------------- evaluation

Tensor<float> predict_probabilities(ParamStore<float>& store, const ModelConfig& cfg,
                                    const Tensor<float>& image, const EvalOptions& opt) {
  const int target = adjust_target(opt.input_size);
  const Tensor<float> resized = ops::bilinear_resize(image, target, target);
  Tensor<float> cm;
  if (cfg.use_kmeans) cm = compute_cluster_map(resized, cfg);
  const Tensor<float> probs = model_predict(store, cfg, resized, cfg.use_kmeans ? &cm : nullptr);
  return ops::bilinear_resize(ops::slice_channels(probs, 1, 1), image.h(), image.w());
}

namespace {

struct ScoredSample {
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
};

EvalResult finish(const std::vector<ScoredSample>& scored, const EvalOptions& opt) {
  if (scored.empty()) throw DataError("evaluation split is empty");
  EvalResult res;
  res.samples = scored.size();
  std::vector<double> all_scores;
  std::vector<std::uint8_t> all_truth;
  for (const auto& s : scored) {
    std::vector<std::uint8_t> pred(s.scores.size());
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = s.scores[i] >= opt.threshold ? 1 : 0;
    res.counts += confusion_counts(pred, s.truth);
    all_scores.insert(all_scores.end(), s.scores.begin(), s.scores.end());
    all_truth.insert(all_truth.end(), s.truth.begin(), s.truth.end());
  }
  res.roc = roc_curve(all_scores, all_truth, opt.max_thresholds);
  res.report = make_report(res.counts, res.roc);
  return res;
}

void check_threshold(const EvalOptions& opt) {
  if (!(opt.threshold > 0 && opt.threshold < 1)) throw ArgumentError("threshold must be in (0,1)");
}

}  // namespace

EvalResult evaluate(ParamStore<float>& store, const ModelConfig& cfg,
                    const std::vector<SampleRecord>& records, const EvalOptions& opt) {
  check_threshold(opt);
  if (records.empty()) throw DataError("evaluation split is empty");
  std::vector<ScoredSample> scored;
  for (const auto& r : records) {
    const Sample s = load_sample(r);
    ScoredSample out;
    const int target = adjust_target(opt.input_size);
    if (opt.crop > 0 && opt.crop < target) {
      Prepared p = prepare_input(s.image, s.mask, opt.input_size, opt.crop, PrepMode::Infer,
                                 fnv1a64(r.stem));
      EvalOptions inner = opt;
      inner.input_size = opt.crop;
      const Tensor<float> probs = predict_probabilities(store, cfg, p.image, inner);
      out.scores.assign(probs.data().begin(), probs.data().end());
      out.truth = std::move(p.mask);
    } else {
      const Tensor<float> probs = predict_probabilities(store, cfg, s.image, opt);
      out.scores.assign(probs.data().begin(), probs.data().end());
      out.truth = s.mask;
    }
    scored.push_back(std::move(out));
  }
  return finish(scored, opt);
}

EvalResult evaluate_predictions(const std::vector<SampleRecord>& records,
                                const fs::path& predictions_dir, const EvalOptions& opt) {
  check_threshold(opt);
  std::vector<ScoredSample> scored;
  for (const auto& r : records) {
    fs::path p = predictions_dir / (r.stem + ".png");
    if (!fs::exists(p)) p = predictions_dir / (r.stem + "_GT.png");
    if (!fs::exists(p)) throw DataError("no prediction PNG for " + r.stem + " in " + predictions_dir.string());
    const Sample s = load_sample(r);
    const Image8 pred = read_png_rgb(p);
    if (pred.height != s.height || pred.width != s.width)
      throw DataError("prediction " + p.string() + " size differs from its mask");
    ScoredSample out;
    out.scores.resize(s.mask.size());
    for (std::size_t i = 0; i < out.scores.size(); ++i)
      out.scores[i] = (pred.pixels[3 * i] + pred.pixels[3 * i + 1] + pred.pixels[3 * i + 2]) / (3.0 * 255.0);
    out.truth = s.mask;
    scored.push_back(std::move(out));
  }
  return finish(scored, opt);
}

}  // namespace aclseg
