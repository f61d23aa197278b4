// aclseg command-line tool. Talks to the library through the C interface only.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aclseg/aclseg.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
  std::string kind;
  std::string message;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

[[noreturn]] void fail_config(const std::string& msg) { throw Failure{kExitData, "config_error", msg}; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_config("cannot read config file " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) fail_config("config file " + path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail_config("invalid JSON in " + path + ": " + e.what());
  }
}

json call(aclseg_status (*fn)(const char*, char**), const json& request) {
  char* out = nullptr;
  const aclseg_status st = fn(request.dump().c_str(), &out);
  if (st != ACLSEG_OK) throw Failure{kExitData, aclseg_status_name(st), aclseg_last_error()};
  json result = json::parse(out);
  aclseg_free_string(out);
  return result;
}

void write_manifest(const fs::path& path, const std::string& command, const json& request,
                    const json& result, const json& sources, int threads) {
  json manifest = {{"command", command},
                   {"version", aclseg_version()},
                   {"threads", threads},
                   {"request", request},
                   {"config_sources", sources},
                   {"result", result}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kExitData, "io_error", "cannot write manifest " + path.string()};
  out << manifest.dump(2) << "\n";
}

// Applies a flag value over a config-file value, recording where each key came from.
template <typename V>
void overlay(json& cfg, json& sources, const std::string& key, const CLI::Option* opt, const V& value) {
  if (opt->count() > 0) {
    cfg[key] = value;
    sources[key] = "flag";
  } else if (cfg.contains(key)) {
    sources[key] = "file";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloud segmentation with an encoder-decoder network, attention gating and k-means cluster features"};
  app.require_subcommand(1);
  int threads = 0;
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (fallback: ACLSEG_THREADS, default 1)")
                          ->check(CLI::PositiveNumber);
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "Run manifest path (default: <out>/<command>_manifest.json)");

  // ---- synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic sky/cloud dataset");
  std::string synth_config, synth_out;
  int s_count = 0, s_size = 0, s_min_blobs = 0, s_max_blobs = 0;
  double s_noise = 0, s_night = 0, s_contour = 0, s_ratio = 0;
  std::uint64_t s_seed = 0;
  synth->add_option("--config", synth_config, "SyntheticSpec JSON file")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  auto* so_count = synth->add_option("--count", s_count, "Number of image/mask pairs");
  auto* so_size = synth->add_option("--size", s_size, "Image side length (multiple of 16)");
  auto* so_min = synth->add_option("--min-blobs", s_min_blobs, "Minimum clouds per image");
  auto* so_max = synth->add_option("--max-blobs", s_max_blobs, "Maximum clouds per image");
  auto* so_noise = synth->add_option("--noise", s_noise, "Noise std as a fraction of full scale");
  auto* so_night = synth->add_option("--night-fraction", s_night, "Fraction of darker night images");
  auto* so_contour = synth->add_option("--contour", s_contour, "Blob intensity above which a pixel is cloud");
  auto* so_ratio = synth->add_option("--train-ratio", s_ratio, "Train fraction written to manifest.csv");
  auto* so_seed = synth->add_option("--seed", s_seed, "Generator seed");

  // ---- train
  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string t_data, t_out, t_model_cfg, t_train_cfg, t_resume, t_init;
  double t_lr = 0, t_factor = 0, t_min_lr = 0, t_ratio = 0.8;
  int t_batch = 0, t_epochs = 0, t_patience = 0, t_input = 0, t_crop = 0;
  long t_max_steps = 0;
  std::uint64_t t_seed = 0;
  bool t_no_gam = false, t_no_kmeans = false;
  train->add_option("--data", t_data, "Dataset directory (images/, GTmaps/, optional manifest.csv)")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", t_out, "Output directory for checkpoints and logs")->required();
  train->add_option("--model-config", t_model_cfg, "Model config JSON file")->check(CLI::ExistingFile);
  train->add_option("--train-config", t_train_cfg, "Train config JSON file")->check(CLI::ExistingFile);
  train->add_option("--resume", t_resume, "Resume from a training checkpoint")->check(CLI::ExistingFile);
  auto* to_lr = train->add_option("--lr", t_lr, "Initial learning rate");
  auto* to_batch = train->add_option("--batch-size", t_batch, "Batch size");
  auto* to_epochs = train->add_option("--epochs", t_epochs, "Number of epochs");
  auto* to_steps = train->add_option("--max-steps", t_max_steps, "Stop after this many optimizer steps (0 = no limit)");
  auto* to_patience = train->add_option("--patience", t_patience, "Plateau patience in epochs");
  auto* to_factor = train->add_option("--factor", t_factor, "Plateau learning-rate factor");
  auto* to_min_lr = train->add_option("--min-lr", t_min_lr, "Learning-rate floor");
  auto* to_input = train->add_option("--input-size", t_input, "Resize target (rounded up to a multiple of 16)");
  auto* to_crop = train->add_option("--crop", t_crop, "Random crop size (0 = full resized image)");
  auto* to_seed = train->add_option("--seed", t_seed, "Seed for initialization, shuffling, crops and the split");
  auto* to_init = train->add_option("--kmeans-init", t_init, "k-means initialization: random|plusplus");
  train->add_option("--split-ratio", t_ratio, "Train fraction when the dataset has no manifest.csv");
  train->add_flag("--no-gam", t_no_gam, "Disable the global attention module");
  train->add_flag("--no-kmeans", t_no_kmeans, "Disable the k-means cluster branch");

  // ---- eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint (or prediction PNGs) on a dataset split");
  std::string e_data, e_out, e_ckpt, e_pred, e_split = "test";
  double e_threshold = 0.5, e_ratio = 0.8;
  int e_input = 300, e_crop = 0;
  std::size_t e_max_thr = 1000;
  std::uint64_t e_seed = 0;
  bool e_no_gam = false, e_no_kmeans = false;
  eval->add_option("--data", e_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", e_out, "Output directory for metrics.json and roc.csv")->required();
  auto* eo_ckpt = eval->add_option("--checkpoint", e_ckpt, "Model checkpoint")->check(CLI::ExistingFile);
  auto* eo_pred = eval->add_option("--predictions", e_pred, "Directory of prediction PNGs named by stem")
                      ->check(CLI::ExistingDirectory);
  eo_ckpt->excludes(eo_pred);
  eval->add_option("--split", e_split, "Split to score: train|test|all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  eval->add_option("--threshold", e_threshold, "Cloud probability threshold");
  eval->add_option("--input-size", e_input, "Resize target (rounded up to a multiple of 16)");
  eval->add_option("--crop", e_crop, "Centre-seeded crop size (0 = full image)");
  eval->add_option("--max-thresholds", e_max_thr, "Maximum ROC points written");
  eval->add_option("--seed", e_seed, "Split seed when the dataset has no manifest.csv");
  eval->add_option("--split-ratio", e_ratio, "Train fraction when the dataset has no manifest.csv");
  eval->add_flag("--no-gam", e_no_gam, "Evaluate with the global attention module disabled");
  eval->add_flag("--no-kmeans", e_no_kmeans, "Evaluate with the k-means cluster branch disabled");

  // ---- infer
  auto* infer = app.add_subcommand("infer", "Write probability and mask PNGs for images");
  std::string i_ckpt, i_out;
  std::vector<std::string> i_images;
  double i_threshold = 0.5;
  int i_input = 300;
  infer->add_option("--checkpoint", i_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", i_out, "Output directory")->required();
  infer->add_option("images", i_images, "Input PNG images")->required()->check(CLI::ExistingFile);
  infer->add_option("--threshold", i_threshold, "Cloud probability threshold");
  infer->add_option("--input-size", i_input, "Resize target (rounded up to a multiple of 16)");

  // ---- cluster
  auto* cluster = app.add_subcommand("cluster", "k-means colour clustering of one image");
  std::string c_image, c_out, c_init = "random";
  int c_k = 2, c_max_iter = 100;
  std::uint64_t c_seed = 0;
  cluster->add_option("image", c_image, "Input PNG image")->required()->check(CLI::ExistingFile);
  cluster->add_option("--out", c_out, "Output directory")->required();
  cluster->add_option("--k", c_k, "Number of clusters")->check(CLI::PositiveNumber);
  cluster->add_option("--init", c_init, "Initialization: random|plusplus")
      ->check(CLI::IsMember({"random", "plusplus"}));
  cluster->add_option("--seed", c_seed, "Initialization seed");
  cluster->add_option("--max-iter", c_max_iter, "Iteration cap")->check(CLI::PositiveNumber);

  // ---- roc
  auto* roc = app.add_subcommand("roc", "ROC curve and AUC from score PNGs and masks");
  std::string r_scores, r_masks, r_out;
  std::size_t r_max_thr = 1000;
  roc->add_option("--scores", r_scores, "Directory of score PNGs (value / 255)")->required()->check(CLI::ExistingDirectory);
  roc->add_option("--masks", r_masks, "Directory of ground-truth mask PNGs")->required()->check(CLI::ExistingDirectory);
  roc->add_option("--out", r_out, "Output CSV path")->required();
  roc->add_option("--max-thresholds", r_max_thr, "Maximum ROC points written");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage_error: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (threads_opt->count() == 0) {
      if (const char* env = std::getenv("ACLSEG_THREADS"); env && *env) {
        try {
          threads = std::stoi(env);
        } catch (const std::exception&) {
          fail_config(std::string("ACLSEG_THREADS is not an integer: ") + env);
        }
        if (threads < 1) fail_config("ACLSEG_THREADS must be >= 1");
      } else {
        threads = 1;
      }
    }
    aclseg_set_threads(threads);

    std::string command;
    json request, result, sources = json::object();
    fs::path default_manifest;

    if (*synth) {
      command = "synth";
      json spec = synth_config.empty() ? json::object() : read_json_file(synth_config);
      overlay(spec, sources, "count", so_count, s_count);
      overlay(spec, sources, "size", so_size, s_size);
      overlay(spec, sources, "min_blobs", so_min, s_min_blobs);
      overlay(spec, sources, "max_blobs", so_max, s_max_blobs);
      overlay(spec, sources, "noise", so_noise, s_noise);
      overlay(spec, sources, "night_fraction", so_night, s_night);
      overlay(spec, sources, "contour", so_contour, s_contour);
      overlay(spec, sources, "train_ratio", so_ratio, s_ratio);
      overlay(spec, sources, "seed", so_seed, s_seed);
      request = {{"out_dir", synth_out}, {"spec", spec}};
      result = call(aclseg_synth, request);
      default_manifest = fs::path(synth_out) / "synth_manifest.json";
    } else if (*train) {
      command = "train";
      json mcfg = t_model_cfg.empty() ? json::object() : read_json_file(t_model_cfg);
      json tcfg = t_train_cfg.empty() ? json::object() : read_json_file(t_train_cfg);
      json msrc = json::object(), tsrc = json::object();
      overlay(tcfg, tsrc, "lr", to_lr, t_lr);
      overlay(tcfg, tsrc, "batch_size", to_batch, t_batch);
      overlay(tcfg, tsrc, "epochs", to_epochs, t_epochs);
      overlay(tcfg, tsrc, "max_steps", to_steps, t_max_steps);
      overlay(tcfg, tsrc, "patience", to_patience, t_patience);
      overlay(tcfg, tsrc, "factor", to_factor, t_factor);
      overlay(tcfg, tsrc, "min_lr", to_min_lr, t_min_lr);
      overlay(tcfg, tsrc, "input_size", to_input, t_input);
      overlay(tcfg, tsrc, "crop", to_crop, t_crop);
      overlay(tcfg, tsrc, "seed", to_seed, t_seed);
      overlay(mcfg, msrc, "seed", to_seed, t_seed);
      overlay(mcfg, msrc, "kmeans_init", to_init, t_init);
      if (t_no_gam) {
        mcfg["use_gam"] = false;
        msrc["use_gam"] = "flag";
      }
      if (t_no_kmeans) {
        mcfg["use_kmeans"] = false;
        msrc["use_kmeans"] = "flag";
      }
      sources = {{"model_config", msrc}, {"train_config", tsrc}};
      request = {{"dataset", t_data},
                 {"out_dir", t_out},
                 {"model_config", mcfg},
                 {"train_config", tcfg},
                 {"split_ratio", t_ratio},
                 {"split_seed", t_seed}};
      if (!t_resume.empty()) request["resume"] = t_resume;
      result = call(aclseg_train, request);
      default_manifest = fs::path(t_out) / "train_manifest.json";
    } else if (*eval) {
      command = "eval";
      if (e_ckpt.empty() == e_pred.empty()) {
        std::cerr << "error: usage_error: eval needs exactly one of --checkpoint or --predictions\n";
        return kExitUsage;
      }
      request = {{"dataset", e_data},
                 {"out_dir", e_out},
                 {"split", e_split},
                 {"threshold", e_threshold},
                 {"input_size", e_input},
                 {"crop", e_crop},
                 {"max_thresholds", e_max_thr},
                 {"split_ratio", e_ratio},
                 {"split_seed", e_seed}};
      if (!e_ckpt.empty()) request["checkpoint"] = e_ckpt;
      if (!e_pred.empty()) request["predictions"] = e_pred;
      if (e_no_gam) request["use_gam"] = false;
      if (e_no_kmeans) request["use_kmeans"] = false;
      result = call(aclseg_evaluate, request);
      default_manifest = fs::path(e_out) / "eval_manifest.json";
    } else if (*infer) {
      command = "infer";
      request = {{"checkpoint", i_ckpt},
                 {"out_dir", i_out},
                 {"images", i_images},
                 {"threshold", i_threshold},
                 {"input_size", i_input}};
      result = call(aclseg_infer, request);
      default_manifest = fs::path(i_out) / "infer_manifest.json";
    } else if (*cluster) {
      command = "cluster";
      request = {{"image", c_image}, {"out_dir", c_out}, {"k", c_k},
                 {"init", c_init},   {"seed", c_seed},   {"max_iter", c_max_iter}};
      result = call(aclseg_cluster_file, request);
      default_manifest = fs::path(c_out) / "cluster_manifest.json";
    } else if (*roc) {
      command = "roc";
      request = {{"scores", r_scores}, {"masks", r_masks}, {"out", r_out}, {"max_thresholds", r_max_thr}};
      result = call(aclseg_roc, request);
      default_manifest = fs::path(r_out).string() + ".manifest.json";
    }

    write_manifest(manifest_path.empty() ? default_manifest : fs::path(manifest_path), command,
                   request, result, sources, threads);
    std::cout << result.dump(2) << "\n";
    return 0;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.kind << ": " << one_line(f.message) << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: internal_error: " << one_line(e.what()) << "\n";
    return kExitData;
  }
}
