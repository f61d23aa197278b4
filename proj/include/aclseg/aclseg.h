#ifndef ACLSEG_ACLSEG_H
#define ACLSEG_ACLSEG_H

/* C interface to the aclseg cloud segmentation library.
 *
 * Every function returns an aclseg_status. On failure the message of the most
 * recent error on the calling thread is available from aclseg_last_error().
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with aclseg_free_string(). Handles are not thread-safe. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ACLSEG_API __declspec(dllexport)
#else
#define ACLSEG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum aclseg_status {
  ACLSEG_OK = 0,
  ACLSEG_ERR_ARGUMENT = 1, /* invalid argument or configuration */
  ACLSEG_ERR_SHAPE = 2,
  ACLSEG_ERR_DATA = 3, /* malformed or inconsistent input data */
  ACLSEG_ERR_IO = 4,
  ACLSEG_ERR_NUMERIC = 5, /* non-finite values during training */
  ACLSEG_ERR_INTERNAL = 6
} aclseg_status;

typedef struct aclseg_model aclseg_model;

ACLSEG_API const char* aclseg_version(void);
ACLSEG_API const char* aclseg_status_name(aclseg_status status);
ACLSEG_API const char* aclseg_last_error(void);
ACLSEG_API void aclseg_free_string(char* s);

/* Worker threads for the heavy kernels; values < 1 reset to 1. */
ACLSEG_API aclseg_status aclseg_set_threads(int n);

/* ---- model handles ---- */

/* config_json may be NULL or "" for the default configuration. */
ACLSEG_API aclseg_status aclseg_model_create(const char* config_json, aclseg_model** out);
ACLSEG_API aclseg_status aclseg_model_load(const char* checkpoint_path, aclseg_model** out);
ACLSEG_API aclseg_status aclseg_model_save(const aclseg_model* model, const char* checkpoint_path);
ACLSEG_API void aclseg_model_destroy(aclseg_model* model);

ACLSEG_API aclseg_status aclseg_model_config(const aclseg_model* model, char** config_json);
ACLSEG_API aclseg_status aclseg_model_parameter_count(const aclseg_model* model, size_t* count);

/* Toggles the GAM and cluster branches without touching any parameter. */
ACLSEG_API aclseg_status aclseg_model_set_ablation(aclseg_model* model, int use_gam, int use_kmeans);

/* Adds delta to every element of the named parameter. */
ACLSEG_API aclseg_status aclseg_model_perturb(aclseg_model* model, const char* param_name, float delta);

/* Parameter names read by a forward pass under the current flags, as a JSON array. */
ACLSEG_API aclseg_status aclseg_model_inventory(const aclseg_model* model, char** names_json);

/* image: n*h*w*3 floats in [0,1], NHWC, h and w divisible by 16.
 * probs: n*h*w floats receiving the cloud probability. Cluster maps are
 * computed internally when the model uses them. */
ACLSEG_API aclseg_status aclseg_model_predict(aclseg_model* model, const float* image, int n, int h,
                                              int w, float* probs);

/* ---- k-means ---- */

/* rgb: h*w*3 bytes. labels: h*w ints (label 1 = brightest cluster for k = 2).
 * centroids: k*3 doubles. Either output may be NULL. */
ACLSEG_API aclseg_status aclseg_kmeans(const uint8_t* rgb, int h, int w, int k, const char* init,
                                       uint64_t seed, int max_iter, int* labels, double* centroids);

/* ---- file-level workflows ----
 * Each takes a JSON request and returns a JSON result describing the resolved
 * configuration and every file written (with FNV-1a 64 hashes). */

/* {"dataset","out_dir","model_config":{},"train_config":{},"resume"?,"split_ratio"?,"split_seed"?} */
ACLSEG_API aclseg_status aclseg_train(const char* request_json, char** result_json);

/* {"dataset","out_dir","checkpoint"|"predictions","split"?,"threshold"?,"input_size"?,"crop"?,
 *  "max_thresholds"?,"use_gam"?,"use_kmeans"?} -> metrics.json + roc.csv */
ACLSEG_API aclseg_status aclseg_evaluate(const char* request_json, char** result_json);

/* {"checkpoint","images":[...],"out_dir","threshold"?,"input_size"?} */
ACLSEG_API aclseg_status aclseg_infer(const char* request_json, char** result_json);

/* {"image","out_dir","k"?,"init"?,"seed"?,"max_iter"?} -> label PNG + centroid JSON */
ACLSEG_API aclseg_status aclseg_cluster_file(const char* request_json, char** result_json);

/* {"out_dir","spec":{...}} */
ACLSEG_API aclseg_status aclseg_synth(const char* request_json, char** result_json);

/* {"scores","masks","out","max_thresholds"?} -> ROC CSV; result carries the AUC */
ACLSEG_API aclseg_status aclseg_roc(const char* request_json, char** result_json);

ACLSEG_API aclseg_status aclseg_hash_file(const char* path, uint64_t* hash);

#ifdef __cplusplus
}
#endif

#endif
