#include "aclseg/aclseg.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "aclseg/checkpoint.hpp"
#include "aclseg/cluster.hpp"
#include "aclseg/dataset.hpp"
#include "aclseg/errors.hpp"
#include "aclseg/image_io.hpp"
#include "aclseg/model.hpp"
#include "aclseg/parallel.hpp"
#include "aclseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct aclseg_model {
  aclseg::ModelConfig cfg;
  aclseg::ParamStore<float> store;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
aclseg_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return ACLSEG_OK;
  } catch (const aclseg::ShapeError& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_SHAPE;
  } catch (const aclseg::ArgumentError& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_ARGUMENT;
  } catch (const aclseg::DataError& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_DATA;
  } catch (const aclseg::IoError& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_IO;
  } catch (const aclseg::NumericError& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_NUMERIC;
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return ACLSEG_ERR_ARGUMENT;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ACLSEG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ACLSEG_ERR_INTERNAL;
  }
}

void require(bool cond, const char* what) {
  if (!cond) throw aclseg::ArgumentError(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(const json& j, char** out) {
  if (out) *out = dup_string(j.dump(2));
}

json parse_request(const char* text) {
  require(text != nullptr, "request JSON is null");
  json j = json::parse(text);
  if (!j.is_object()) throw aclseg::ArgumentError("request must be a JSON object");
  return j;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void add_file(json& files, const fs::path& p) {
  files[p.string()] = hex64(aclseg::hash_file(p));
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw aclseg::IoError("cannot write " + p.string());
  out << text;
  if (!out) throw aclseg::IoError("failed writing " + p.string());
}

fs::path ensure_dir(const json& req, const char* key) {
  if (!req.contains(key)) throw aclseg::ArgumentError(std::string("missing \"") + key + "\"");
  fs::path dir = req.at(key).get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw aclseg::IoError("cannot create directory " + dir.string());
  return dir;
}

// Records of the requested split. A dataset without a manifest is split on the fly.
std::vector<aclseg::SampleRecord> dataset_split(const fs::path& root, const std::string& which,
                                                double ratio, std::uint64_t seed) {
  auto records = aclseg::scan_dataset(root);
  if (records.empty()) throw aclseg::DataError("no samples found under " + root.string());
  if (which == "all") return records;
  bool assigned = false;
  for (const auto& r : records) assigned |= r.split != aclseg::Split::Unassigned;
  if (!assigned) records = aclseg::split_dataset(records, ratio, seed);
  return aclseg::select_split(records, aclseg::parse_split(which));
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

aclseg::Tensor<double> rgb_tensor(const aclseg::Image8& img) {
  aclseg::Tensor<double> t(aclseg::Shape{1, img.height, img.width, 3});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i];
  return t;
}

}  // namespace

extern "C" {

const char* aclseg_version(void) { return "0.1.0"; }

const char* aclseg_status_name(aclseg_status status) {
  switch (status) {
    case ACLSEG_OK:
      return "ok";
    case ACLSEG_ERR_ARGUMENT:
      return "argument_error";
    case ACLSEG_ERR_SHAPE:
      return "shape_error";
    case ACLSEG_ERR_DATA:
      return "data_error";
    case ACLSEG_ERR_IO:
      return "io_error";
    case ACLSEG_ERR_NUMERIC:
      return "numeric_error";
    case ACLSEG_ERR_INTERNAL:
      return "internal_error";
  }
  return "unknown";
}

const char* aclseg_last_error(void) { return g_last_error.c_str(); }

void aclseg_free_string(char* s) { std::free(s); }

aclseg_status aclseg_set_threads(int n) {
  return guarded([&] {
    require(n >= 1, "thread count must be >= 1");
    aclseg::set_num_threads(n);
  });
}

aclseg_status aclseg_model_create(const char* config_json, aclseg_model** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    aclseg::ModelConfig cfg;
    if (config_json && *config_json) cfg = aclseg::model_config_from_json(json::parse(config_json));
    aclseg::validate(cfg);
    *out = new aclseg_model{cfg, aclseg::init_model<float>(cfg)};
  });
}

aclseg_status aclseg_model_load(const char* checkpoint_path, aclseg_model** out) {
  return guarded([&] {
    require(out != nullptr && checkpoint_path != nullptr, "null argument");
    const aclseg::Checkpoint ck = aclseg::load_checkpoint(checkpoint_path);
    aclseg::ModelConfig cfg = aclseg::model_config_from_checkpoint(ck);
    auto* m = new aclseg_model{cfg, aclseg::init_model<float>(cfg)};
    try {
      aclseg::checkpoint_to_store(ck, m->store);
    } catch (...) {
      delete m;
      throw;
    }
    *out = m;
  });
}

aclseg_status aclseg_model_save(const aclseg_model* model, const char* checkpoint_path) {
  return guarded([&] {
    require(model != nullptr && checkpoint_path != nullptr, "null argument");
    aclseg::Checkpoint ck;
    aclseg::store_to_checkpoint(model->store, ck);
    ck.meta["model_config"] = aclseg::to_json(model->cfg);
    aclseg::save_checkpoint(checkpoint_path, ck);
  });
}

void aclseg_model_destroy(aclseg_model* model) { delete model; }

aclseg_status aclseg_model_config(const aclseg_model* model, char** config_json) {
  return guarded([&] {
    require(model != nullptr && config_json != nullptr, "null argument");
    *config_json = dup_string(aclseg::to_json(model->cfg).dump(2));
  });
}

aclseg_status aclseg_model_parameter_count(const aclseg_model* model, size_t* count) {
  return guarded([&] {
    require(model != nullptr && count != nullptr, "null argument");
    *count = model->store.parameter_count();
  });
}

aclseg_status aclseg_model_set_ablation(aclseg_model* model, int use_gam, int use_kmeans) {
  return guarded([&] {
    require(model != nullptr, "model is null");
    model->cfg.use_gam = use_gam != 0;
    model->cfg.use_kmeans = use_kmeans != 0;
  });
}

aclseg_status aclseg_model_perturb(aclseg_model* model, const char* param_name, float delta) {
  return guarded([&] {
    require(model != nullptr && param_name != nullptr, "null argument");
    if (!model->store.has_param(param_name))
      throw aclseg::ArgumentError(std::string("no parameter named ") + param_name);
    for (float& v : model->store.value(param_name).data()) v += delta;
  });
}

aclseg_status aclseg_model_inventory(const aclseg_model* model, char** names_json) {
  return guarded([&] {
    require(model != nullptr && names_json != nullptr, "null argument");
    *names_json = dup_string(json(aclseg::layer_inventory(model->cfg)).dump());
  });
}

aclseg_status aclseg_model_predict(aclseg_model* model, const float* image, int n, int h, int w,
                                   float* probs) {
  return guarded([&] {
    require(model != nullptr && image != nullptr && probs != nullptr, "null argument");
    require(n >= 1 && h >= 1 && w >= 1, "image dimensions must be positive");
    const std::size_t per = static_cast<std::size_t>(h) * w;
    for (int b = 0; b < n; ++b) {
      aclseg::Tensor<float> img(aclseg::Shape{1, h, w, 3},
                                std::vector<float>(image + b * per * 3, image + (b + 1) * per * 3));
      aclseg::Tensor<float> cm;
      if (model->cfg.use_kmeans) cm = aclseg::compute_cluster_map(img, model->cfg);
      const auto out = aclseg::model_predict(model->store, model->cfg, img,
                                             model->cfg.use_kmeans ? &cm : nullptr);
      for (std::size_t i = 0; i < per; ++i) probs[b * per + i] = out[i * 2 + 1];
    }
  });
}

aclseg_status aclseg_kmeans(const uint8_t* rgb, int h, int w, int k, const char* init,
                            uint64_t seed, int max_iter, int* labels, double* centroids) {
  return guarded([&] {
    require(rgb != nullptr, "rgb is null");
    require(h >= 1 && w >= 1, "image dimensions must be positive");
    aclseg::Image8 img{h, w, 3, std::vector<std::uint8_t>(rgb, rgb + static_cast<std::size_t>(h) * w * 3)};
    aclseg::KmeansOptions opt;
    opt.k = k;
    opt.init = aclseg::parse_kmeans_init(init ? init : "random");
    opt.seed = seed;
    opt.max_iter = max_iter;
    const auto r = aclseg::kmeans_cluster(rgb_tensor(img), opt);
    if (labels) std::copy(r.labels.begin(), r.labels.end(), labels);
    if (centroids)
      for (std::size_t c = 0; c < r.centroids.size(); ++c)
        for (int d = 0; d < 3; ++d) centroids[c * 3 + d] = r.centroids[c][d];
  });
}

aclseg_status aclseg_train(const char* request_json, char** result_json) {
  return guarded([&] {
    const json req = parse_request(request_json);
    const fs::path dataset = req.at("dataset").get<std::string>();
    const fs::path out_dir = ensure_dir(req, "out_dir");
    const double ratio = req.value("split_ratio", 0.8);
    const std::uint64_t split_seed = req.value("split_seed", std::uint64_t{0});

    aclseg::ModelConfig mcfg;
    aclseg::TrainConfig tcfg = aclseg::train_config_from_json(req.value("train_config", json::object()));
    aclseg::TrainState state;
    aclseg::ParamStore<float> store;
    if (req.contains("resume") && !req.at("resume").get<std::string>().empty()) {
      const auto ck = aclseg::load_checkpoint(req.at("resume").get<std::string>());
      mcfg = aclseg::model_config_from_checkpoint(ck);
      store = aclseg::init_model<float>(mcfg);
      aclseg::restore_training_checkpoint(ck, store, state);
    } else {
      mcfg = aclseg::model_config_from_json(req.value("model_config", json::object()));
      store = aclseg::init_model<float>(mcfg);
    }

    const auto train = dataset_split(dataset, "train", ratio, split_seed);
    if (train.empty()) throw aclseg::DataError("training split of " + dataset.string() + " is empty");
    const auto outputs = aclseg::train_loop(store, mcfg, tcfg, train, out_dir, state);

    json files = json::object();
    add_file(files, outputs.final_checkpoint);
    if (fs::exists(outputs.best_checkpoint)) add_file(files, outputs.best_checkpoint);
    add_file(files, outputs.log_csv);
    json result = {{"model_config", aclseg::to_json(mcfg)},
                   {"train_config", aclseg::to_json(tcfg)},
                   {"target_size", aclseg::adjust_target(tcfg.input_size)},
                   {"dataset_hash", hex64(aclseg::dataset_hash(train))},
                   {"train_samples", train.size()},
                   {"steps", state.adam.step},
                   {"epochs_logged", state.log.size()},
                   {"final_checkpoint", outputs.final_checkpoint.string()},
                   {"best_checkpoint", outputs.best_checkpoint.string()},
                   {"log_csv", outputs.log_csv.string()},
                   {"files", files}};
    if (!state.step_losses.empty()) {
      result["initial_loss"] = state.step_losses.front();
      result["final_loss"] = state.step_losses.back();
    }
    if (!state.log.empty()) result["final_lr"] = state.plateau.lr;
    emit(result, result_json);
  });
}

aclseg_status aclseg_evaluate(const char* request_json, char** result_json) {
  return guarded([&] {
    const json req = parse_request(request_json);
    const fs::path dataset = req.at("dataset").get<std::string>();
    const fs::path out_dir = ensure_dir(req, "out_dir");
    aclseg::EvalOptions opt;
    opt.threshold = req.value("threshold", opt.threshold);
    opt.input_size = req.value("input_size", opt.input_size);
    opt.crop = req.value("crop", opt.crop);
    opt.max_thresholds = req.value("max_thresholds", opt.max_thresholds);
    const std::string split = req.value("split", std::string("test"));
    const auto records = dataset_split(dataset, split, req.value("split_ratio", 0.8),
                                       req.value("split_seed", std::uint64_t{0}));
    if (records.empty()) throw aclseg::DataError("split \"" + split + "\" is empty");

    json result = {{"split", split},
                   {"samples", records.size()},
                   {"threshold", opt.threshold},
                   {"dataset_hash", hex64(aclseg::dataset_hash(records))}};
    aclseg::EvalResult er;
    if (req.contains("predictions")) {
      er = aclseg::evaluate_predictions(records, req.at("predictions").get<std::string>(), opt);
      result["predictions"] = req.at("predictions");
    } else {
      const auto ck = aclseg::load_checkpoint(req.at("checkpoint").get<std::string>());
      aclseg::ModelConfig cfg = aclseg::model_config_from_checkpoint(ck);
      auto store = aclseg::init_model<float>(cfg);
      aclseg::checkpoint_to_store(ck, store);
      cfg.use_gam = req.value("use_gam", cfg.use_gam);
      cfg.use_kmeans = req.value("use_kmeans", cfg.use_kmeans);
      er = aclseg::evaluate(store, cfg, records, opt);
      result["checkpoint"] = req.at("checkpoint");
      result["model_config"] = aclseg::to_json(cfg);
      result["input_size"] = opt.input_size;
      result["target_size"] = aclseg::adjust_target(opt.input_size);
      result["crop"] = opt.crop;
    }
    const fs::path metrics = out_dir / "metrics.json";
    const fs::path roc = out_dir / "roc.csv";
    write_text(metrics, aclseg::to_json(er.report).dump(2) + "\n");
    write_text(roc, aclseg::roc_to_csv(er.roc));
    json files = json::object();
    add_file(files, metrics);
    add_file(files, roc);
    result["metrics"] = aclseg::to_json(er.report);
    result["counts"] = {{"tp", er.counts.tp}, {"fp", er.counts.fp}, {"tn", er.counts.tn}, {"fn", er.counts.fn}};
    result["files"] = files;
    emit(result, result_json);
  });
}

aclseg_status aclseg_infer(const char* request_json, char** result_json) {
  return guarded([&] {
    const json req = parse_request(request_json);
    const fs::path out_dir = ensure_dir(req, "out_dir");
    aclseg::EvalOptions opt;
    opt.threshold = req.value("threshold", opt.threshold);
    opt.input_size = req.value("input_size", opt.input_size);
    if (!(opt.threshold > 0 && opt.threshold < 1)) throw aclseg::ArgumentError("threshold must be in (0,1)");
    const auto ck = aclseg::load_checkpoint(req.at("checkpoint").get<std::string>());
    const aclseg::ModelConfig cfg = aclseg::model_config_from_checkpoint(ck);
    auto store = aclseg::init_model<float>(cfg);
    aclseg::checkpoint_to_store(ck, store);

    const auto images = req.at("images").get<std::vector<std::string>>();
    if (images.empty()) throw aclseg::ArgumentError("no input images");
    json files = json::object();
    for (const auto& path : images) {
      const auto image = aclseg::load_image(path);
      const auto probs = aclseg::predict_probabilities(store, cfg, image, opt);
      aclseg::Image8 prob_png{image.h(), image.w(), 1, std::vector<std::uint8_t>(probs.size())};
      aclseg::Image8 mask_png = prob_png;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        prob_png.pixels[i] = to_byte(probs[i]);
        mask_png.pixels[i] = probs[i] >= opt.threshold ? 255 : 0;
      }
      const std::string stem = fs::path(path).stem().string();
      const fs::path pp = out_dir / (stem + "_prob.png");
      const fs::path mp = out_dir / (stem + "_mask.png");
      aclseg::write_png(pp, prob_png);
      aclseg::write_png(mp, mask_png);
      add_file(files, pp);
      add_file(files, mp);
    }
    emit({{"checkpoint", req.at("checkpoint")},
          {"model_config", aclseg::to_json(cfg)},
          {"threshold", opt.threshold},
          {"input_size", opt.input_size},
          {"target_size", aclseg::adjust_target(opt.input_size)},
          {"files", files}},
         result_json);
  });
}

aclseg_status aclseg_cluster_file(const char* request_json, char** result_json) {
  return guarded([&] {
    const json req = parse_request(request_json);
    const fs::path image = req.at("image").get<std::string>();
    const fs::path out_dir = ensure_dir(req, "out_dir");
    aclseg::KmeansOptions opt;
    opt.k = req.value("k", opt.k);
    opt.init = aclseg::parse_kmeans_init(req.value("init", std::string("random")));
    opt.seed = req.value("seed", opt.seed);
    opt.max_iter = req.value("max_iter", opt.max_iter);
    const auto img = aclseg::read_png_rgb(image);
    const auto r = aclseg::kmeans_cluster(rgb_tensor(img), opt);

    aclseg::Image8 labels{img.height, img.width, 1, std::vector<std::uint8_t>(r.labels.size())};
    for (std::size_t i = 0; i < r.labels.size(); ++i)
      labels.pixels[i] = opt.k > 1 ? static_cast<std::uint8_t>(r.labels[i] * 255 / (opt.k - 1)) : 0;
    const std::string stem = image.stem().string();
    const fs::path lp = out_dir / (stem + "_labels.png");
    const fs::path cp = out_dir / (stem + "_centroids.json");
    aclseg::write_png(lp, labels);
    json summary = {{"image", image.string()},
                    {"k", opt.k},
                    {"init", aclseg::to_string(opt.init)},
                    {"seed", opt.seed},
                    {"max_iter", opt.max_iter},
                    {"centroids", r.centroids},
                    {"iterations", r.iterations},
                    {"inertia", r.inertia},
                    {"converged", r.converged},
                    {"degenerate", r.degenerate}};
    write_text(cp, summary.dump(2) + "\n");
    json files = json::object();
    add_file(files, lp);
    add_file(files, cp);
    summary["files"] = files;
    emit(summary, result_json);
  });
}

aclseg_status aclseg_synth(const char* request_json, char** result_json) {
  return guarded([&] {
    const json req = parse_request(request_json);
    const fs::path out_dir = ensure_dir(req, "out_dir");
    const auto spec = aclseg::synthetic_spec_from_json(req.value("spec", json::object()));
    const auto records = aclseg::gen_synthetic(spec, out_dir);
    std::size_t train = 0;
    for (const auto& r : records) train += r.split == aclseg::Split::Train;
    emit({{"spec", aclseg::to_json(spec)},
          {"samples", records.size()},
          {"train", train},
          {"test", records.size() - train},
          {"dataset_hash", hex64(aclseg::dataset_hash(records))},
          {"files", {{(out_dir / "manifest.csv").string(), hex64(aclseg::hash_file(out_dir / "manifest.csv"))}}}},
         result_json);
  });
}

aclseg_status aclseg_roc(const char* request_json, char** result_json) {
  return guarded([&] {
    const json req = parse_request(request_json);
    const fs::path scores_dir = req.at("scores").get<std::string>();
    const fs::path masks_dir = req.at("masks").get<std::string>();
    const fs::path out = req.at("out").get<std::string>();
    const std::size_t max_thresholds = req.value("max_thresholds", std::size_t{1000});
    if (!fs::is_directory(masks_dir)) throw aclseg::DataError("no mask directory " + masks_dir.string());

    std::vector<fs::path> masks;
    for (const auto& e : fs::directory_iterator(masks_dir))
      if (e.path().extension() == ".png") masks.push_back(e.path());
    std::sort(masks.begin(), masks.end());
    if (masks.empty()) throw aclseg::DataError("no mask PNGs in " + masks_dir.string());

    std::vector<double> scores;
    std::vector<std::uint8_t> truth;
    for (const auto& mp : masks) {
      std::string stem = mp.stem().string();
      fs::path sp = scores_dir / mp.filename();
      if (!fs::exists(sp) && stem.size() > 3 && stem.ends_with("_GT"))
        sp = scores_dir / (stem.substr(0, stem.size() - 3) + ".png");
      if (!fs::exists(sp)) throw aclseg::DataError("no score PNG for " + mp.string());
      const auto m = aclseg::read_png_rgb(mp);
      const auto s = aclseg::read_png_rgb(sp);
      if (m.height != s.height || m.width != s.width)
        throw aclseg::DataError("score " + sp.string() + " size differs from its mask");
      for (std::size_t i = 0; i < static_cast<std::size_t>(m.height) * m.width; ++i) {
        const int msum = m.pixels[3 * i] + m.pixels[3 * i + 1] + m.pixels[3 * i + 2];
        truth.push_back(msum >= 3 * aclseg::kMaskThreshold ? 1 : 0);
        scores.push_back((s.pixels[3 * i] + s.pixels[3 * i + 1] + s.pixels[3 * i + 2]) / (3.0 * 255.0));
      }
    }
    const auto roc = aclseg::roc_curve(scores, truth, max_thresholds);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, aclseg::roc_to_csv(roc));
    json files = json::object();
    add_file(files, out);
    emit({{"auc", roc.auc}, {"pixels", scores.size()}, {"masks", masks.size()}, {"files", files}},
         result_json);
  });
}

aclseg_status aclseg_hash_file(const char* path, uint64_t* hash) {
  return guarded([&] {
    require(path != nullptr && hash != nullptr, "null argument");
    *hash = aclseg::hash_file(path);
  });
}

}  // extern "C"
