#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aclseg/checkpoint.hpp"
#include "aclseg/dataset.hpp"
#include "aclseg/metrics.hpp"
#include "aclseg/model.hpp"

namespace aclseg {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 8;
  int epochs = 300;
  long max_steps = 0;  // 0 = no step limit
  int patience = 20;
  double factor = 0.1;
  double min_lr = 1e-8;
  double improvement_delta = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int input_size = 300;  // rounded up to a multiple of 16
  int crop = 0;          // 0 = no crop
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------- Adam

struct AdamState {
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;
  long step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every parameter in the store from its
// current gradient. Moments are zero-initialized on first use.
void adam_step(ParamStore<float>& store, AdamState& state, double lr, const AdamHyper& hyper);

// ------------------------------------------------------------ plateau schedule

struct PlateauState {
  double lr = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
};

struct PlateauConfig {
  int patience = 20;
  double factor = 0.1;
  double min_lr = 1e-8;
  double delta = 1e-6;
};

// Feeds one epoch's monitored loss; returns the learning rate for the next epoch.
double plateau_update(double epoch_loss, PlateauState& state, const PlateauConfig& cfg);

// -------------------------------------------------------------- training loop

struct EpochLog {
  int epoch = 0;  // 1-based
  double loss = 0;
  double lr = 0;  // rate used during the epoch
};

struct TrainState {
  int next_epoch = 1;
  int next_batch = 0;  // within next_epoch, for runs stopped by max_steps
  double epoch_loss_sum = 0;
  long epoch_samples = 0;
  PlateauState plateau;
  AdamState adam;
  std::vector<EpochLog> log;
  std::vector<double> step_losses;
};

struct TrainOutputs {
  std::filesystem::path final_checkpoint;  // empty when out_dir is empty
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_csv;
};

// Training observer, called after every optimisation step.
using StepCallback = std::function<void(long step, double loss)>;

// Runs epochs until cfg.epochs or cfg.max_steps. If out_dir is non-empty it
// receives model.ckpt (end of run), best.ckpt (lowest epoch loss) and
// train_log.csv (epoch,loss,lr). `state` carries everything needed to resume.
TrainOutputs train_loop(ParamStore<float>& store, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::vector<SampleRecord>& train_records,
                        const std::filesystem::path& out_dir, TrainState& state,
                        const StepCallback& on_step = nullptr);

// Loss of one epoch-ordered batch; exposed for tests.
double train_step(ParamStore<float>& store, const ModelConfig& mcfg, AdamState& adam, double lr,
                  const AdamHyper& hyper, const Tensor<float>& images, const Tensor<float>* clusters,
                  const Tensor<float>& targets);

std::string log_to_csv(const std::vector<EpochLog>& log);

// Full training checkpoint (parameters, buffers, Adam moments, resume state).
Checkpoint make_training_checkpoint(const ParamStore<float>& store, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg, const TrainState& state);
void restore_training_checkpoint(const Checkpoint& ckpt, ParamStore<float>& store,
                                 TrainState& state);
ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt);

// ----------------------------------------------------------------- evaluation

struct EvalOptions {
  double threshold = 0.5;
  int input_size = 300;
  int crop = 0;
  std::size_t max_thresholds = 1000;
};

struct EvalResult {
  ConfusionCounts counts;
  MetricReport report;
  RocCurve roc;
  std::size_t samples = 0;
};

// Predictions are resized back to each mask's native resolution before
// scoring (when a crop is used, scoring happens on the cropped window).
EvalResult evaluate(ParamStore<float>& store, const ModelConfig& cfg,
                    const std::vector<SampleRecord>& records, const EvalOptions& opt);

// Scores read from PNGs in predictions_dir named like the records' stems
// (8-bit value / 255), e.g. a directory of ground-truth masks.
EvalResult evaluate_predictions(const std::vector<SampleRecord>& records,
                                const std::filesystem::path& predictions_dir,
                                const EvalOptions& opt);

// Per-image probability map (H x W, native size) from the model.
Tensor<float> predict_probabilities(ParamStore<float>& store, const ModelConfig& cfg,
                                    const Tensor<float>& image, const EvalOptions& opt);

}  // namespace aclseg
