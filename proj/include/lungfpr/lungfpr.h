/*=========================================================================
 *
 *  Copyright 2026 The lungfpr Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *         https://www.apache.org/licenses/LICENSE-2.0.txt
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 *
 *=========================================================================*/

#ifndef LUNGFPR_H
#define LUNGFPR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(LUNGFPR_BUILDING)
#    define LFPR_API __declspec(dllexport)
#  else
#    define LFPR_API __declspec(dllimport)
#  endif
#else
#  define LFPR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every fallible call returns one; on failure
 * lfpr_last_error() describes it (per thread, until the next failing call). */
typedef enum lfpr_status {
  LFPR_OK = 0,
  LFPR_ERR_INVALID_ARGUMENT = 1,
  LFPR_ERR_PARSE = 2,
  LFPR_ERR_SIZE = 3,
  LFPR_ERR_UNSUPPORTED = 4,
  LFPR_ERR_DEGENERATE_SIZE = 5,
  LFPR_ERR_TILING = 6,
  LFPR_ERR_VALIDATION = 7,
  LFPR_ERR_FRAME = 8,
  LFPR_ERR_BOUNDS = 9,
  LFPR_ERR_SHAPE = 10,
  LFPR_ERR_NUMERIC = 11,
  LFPR_ERR_CONFIG = 12,
  LFPR_ERR_DOMAIN = 13,
  LFPR_ERR_FORMAT = 14,
  LFPR_ERR_UNDEFINED_METRIC = 15,
  LFPR_ERR_IDENTITY = 16,
  LFPR_ERR_SPEC = 17,
  LFPR_ERR_IO = 18,
  LFPR_ERR_INTERNAL = 99
} lfpr_status;

typedef struct lfpr_volume lfpr_volume;
typedef struct lfpr_nodule_list lfpr_nodule_list;
typedef struct lfpr_scan_set lfpr_scan_set;
typedef struct lfpr_model lfpr_model;
typedef struct lfpr_dataset lfpr_dataset;
typedef struct lfpr_froc_report lfpr_froc_report;

LFPR_API const char* lfpr_version(void);
LFPR_API const char* lfpr_last_error(void);
LFPR_API const char* lfpr_status_name(lfpr_status status);
/* Releases strings returned through char** out-parameters. */
LFPR_API void lfpr_string_free(char* s);

/* ---- volumes ---------------------------------------------------------- */

enum { LFPR_AXIS_X = 1, LFPR_AXIS_Y = 2, LFPR_AXIS_Z = 4 };

LFPR_API lfpr_status lfpr_volume_load(const char* mhd_path, lfpr_volume** out);
LFPR_API lfpr_status lfpr_volume_save(const lfpr_volume* volume, const char* mhd_path);
LFPR_API lfpr_status lfpr_volume_info(const lfpr_volume* volume, int dims[3], double spacing[3], double origin[3]);
LFPR_API lfpr_status lfpr_volume_stats(const lfpr_volume* volume, int16_t* min, int16_t* max, double* mean);
/* Copies voxels (x fastest, z slowest) into buffer; capacity in elements. */
LFPR_API lfpr_status lfpr_volume_voxels(const lfpr_volume* volume, int16_t* buffer, size_t capacity);
LFPR_API lfpr_status lfpr_volume_resample(const lfpr_volume* volume, double spacing_mm, lfpr_volume** out);
LFPR_API lfpr_status lfpr_volume_flip(const lfpr_volume* volume, unsigned axes, lfpr_volume** out);
LFPR_API lfpr_status lfpr_volume_world_to_voxel(const lfpr_volume* volume, const double point_mm[3], double out[3]);
LFPR_API void lfpr_volume_free(lfpr_volume* volume);

/* ---- candidate / annotation lists --------------------------------------- */

/* Candidates and ground-truth nodules share one list type; annotations
 * carry score 0. scan_id stays valid while the list is alive and unmodified. */
typedef struct lfpr_nodule {
  const char* scan_id;
  double center_mm[3];
  double diameter_mm;
  double score;
} lfpr_nodule;

LFPR_API lfpr_status lfpr_list_create(lfpr_nodule_list** out);
LFPR_API lfpr_status lfpr_list_append(lfpr_nodule_list* list, const lfpr_nodule* item);
LFPR_API size_t lfpr_list_size(const lfpr_nodule_list* list);
LFPR_API lfpr_status lfpr_list_get(const lfpr_nodule_list* list, size_t index, lfpr_nodule* out);
LFPR_API void lfpr_list_free(lfpr_nodule_list* list);

/* Candidate CSV: seriesuid,coordX,coordY,coordZ[,diameter_mm],probability.
 * warnings (optional) receives newline-separated warnings. */
LFPR_API lfpr_status lfpr_candidates_load_csv(const char* path, lfpr_nodule_list** out, char** warnings);
LFPR_API lfpr_status lfpr_candidates_save_csv(const lfpr_nodule_list* list, const char* path);
/* Annotation CSV: seriesuid,coordX,coordY,coordZ,diameter_mm. */
LFPR_API lfpr_status lfpr_annotations_load_csv(const char* path, lfpr_nodule_list** out);
LFPR_API lfpr_status lfpr_annotations_save_csv(const lfpr_nodule_list* list, const char* path);

/* Keeps candidates with score strictly above min_score. */
LFPR_API lfpr_status lfpr_candidates_threshold(const lfpr_nodule_list* in, double min_score, lfpr_nodule_list** out);
/* Per-scan NMS in each scan's voxel frame; frames come from the scan set. */
LFPR_API lfpr_status lfpr_candidates_nms(const lfpr_nodule_list* in, const lfpr_scan_set* scans, double iou_threshold,
                                         lfpr_nodule_list** out);
LFPR_API lfpr_status lfpr_detect_blobs(const lfpr_volume* volume, const char* scan_id, double intensity_threshold_hu,
                                       double min_diameter_mm, double max_diameter_mm, lfpr_nodule_list** out);

/* ---- scan sets ---------------------------------------------------------- */

/* Every *.mhd in dir, scan id = file stem, sorted by id. Only headers are
 * read here; voxels load on demand. */
LFPR_API lfpr_status lfpr_scan_set_open_dir(const char* dir, lfpr_scan_set** out);
LFPR_API size_t lfpr_scan_set_size(const lfpr_scan_set* set);
LFPR_API const char* lfpr_scan_set_id(const lfpr_scan_set* set, size_t index);
LFPR_API const char* lfpr_scan_set_path(const lfpr_scan_set* set, size_t index);
LFPR_API void lfpr_scan_set_free(lfpr_scan_set* set);

/* ---- location history images -------------------------------------------- */

typedef struct lfpr_lhi_params {
  int tau;
  double delta_threshold;
  int window_slices;
  double patch_scale;
  int out_size;
} lfpr_lhi_params;

LFPR_API void lfpr_lhi_params_default(lfpr_lhi_params* params);
/* Writes out_size*out_size values (row-major) into buffer; normalized != 0
 * divides by tau. z_range (optional) receives the clamped slice range. */
LFPR_API lfpr_status lfpr_lhi_compute(const lfpr_volume* volume, const lfpr_nodule* candidate,
                                      const lfpr_lhi_params* params, int normalized, float* buffer, size_t capacity,
                                      int z_range[2]);
/* Raw decay grid of an explicit slice stack (slices * height * width int16,
 * x fastest); writes height*width ints. */
LFPR_API lfpr_status lfpr_lhi_from_stack(const int16_t* stack, int width, int height, int slices,
                                         const lfpr_lhi_params* params, int* out, size_t capacity);

/* ---- phantoms ----------------------------------------------------------- */

/* options_json holds flat overrides of the generator defaults (may be NULL). */
LFPR_API lfpr_status lfpr_phantom_random_spec(const char* options_json, uint64_t seed, const char* scan_id,
                                              char** spec_json);
LFPR_API lfpr_status lfpr_phantom_generate(const char* spec_json, lfpr_volume** volume, lfpr_nodule_list** nodules,
                                           lfpr_nodule_list** tissues);

/* ---- HS2 classifier ------------------------------------------------------- */

typedef struct lfpr_hs2_arch {
  int input_size;
  int conv1_filters;
  int conv2_filters;
  int fc_widths[3];
} lfpr_hs2_arch;

typedef struct lfpr_train_config {
  double learning_rate;
  double lr_decay;
  int decay_every_epochs;
  int epochs;
  int batch_size;
  uint64_t seed;
  int balance_classes;
} lfpr_train_config;

enum { LFPR_TISSUE = 0, LFPR_NODULE = 1 };

LFPR_API void lfpr_hs2_arch_default(lfpr_hs2_arch* arch);
LFPR_API void lfpr_train_config_default(lfpr_train_config* config);

LFPR_API lfpr_status lfpr_model_create(const lfpr_hs2_arch* arch, uint64_t seed, lfpr_model** out);
LFPR_API lfpr_status lfpr_model_load(const char* path, lfpr_model** out);
LFPR_API lfpr_status lfpr_model_save(const lfpr_model* model, const char* path);
LFPR_API lfpr_status lfpr_model_arch(const lfpr_model* model, lfpr_hs2_arch* arch, uint64_t* seed);
LFPR_API lfpr_status lfpr_model_predict(const lfpr_model* model, const float* image, size_t count, double* p_nodule);
/* loss_history (optional) receives up to capacity per-epoch losses. */
LFPR_API lfpr_status lfpr_model_train(lfpr_model* model, const lfpr_dataset* data, const lfpr_train_config* config,
                                      double* loss_history, size_t capacity);
LFPR_API lfpr_status lfpr_model_evaluate(const lfpr_model* model, const lfpr_dataset* data, double* accuracy,
                                         double* mean_loss);
LFPR_API void lfpr_model_free(lfpr_model* model);

LFPR_API lfpr_status lfpr_dataset_create(lfpr_dataset** out);
LFPR_API lfpr_status lfpr_dataset_add(lfpr_dataset* data, const float* image, size_t count, int label, const char* id);
/* One normalized LHI per object: nodules labelled LFPR_NODULE, tissues LFPR_TISSUE. */
LFPR_API lfpr_status lfpr_dataset_add_objects(lfpr_dataset* data, const lfpr_volume* volume,
                                              const lfpr_nodule_list* nodules, const lfpr_nodule_list* tissues,
                                              const lfpr_lhi_params* params);
/* Seeded shuffle, first ceil(2n/3) to train. */
LFPR_API lfpr_status lfpr_dataset_split(const lfpr_dataset* data, uint64_t seed, lfpr_dataset** train,
                                        lfpr_dataset** test);
LFPR_API size_t lfpr_dataset_size(const lfpr_dataset* data);
LFPR_API lfpr_status lfpr_dataset_counts(const lfpr_dataset* data, size_t* nodules, size_t* tissues);
LFPR_API uint64_t lfpr_dataset_hash(const lfpr_dataset* data);
/* Float32 patch files plus index.csv (candidate_id,file,label). */
LFPR_API lfpr_status lfpr_dataset_dump(const lfpr_dataset* data, const char* dir);
LFPR_API void lfpr_dataset_free(lfpr_dataset* data);

/* ---- evaluation ----------------------------------------------------------- */

LFPR_API lfpr_status lfpr_froc(const lfpr_nodule_list* candidates, const lfpr_nodule_list* ground_truth,
                               size_t scan_count, lfpr_froc_report** out);
LFPR_API lfpr_status lfpr_froc_levels(const lfpr_froc_report* report, double levels[7], double* cpm);
LFPR_API size_t lfpr_froc_point_count(const lfpr_froc_report* report);
LFPR_API lfpr_status lfpr_froc_point(const lfpr_froc_report* report, size_t index, double* threshold,
                                     double* fps_per_scan, double* sensitivity);
/* Any path may be NULL to skip that file. */
LFPR_API lfpr_status lfpr_froc_write(const lfpr_froc_report* report, const char* csv_path, const char* json_path,
                                     const char* curve_path);
LFPR_API void lfpr_froc_free(lfpr_froc_report* report);

LFPR_API lfpr_status lfpr_cpm(const double* levels, size_t count, double* out);
LFPR_API lfpr_status lfpr_check_reported_cpm(const double* levels, size_t count, double reported, double* computed,
                                             int* discrepancy);
LFPR_API lfpr_status lfpr_sensitivity_specificity(size_t tp, size_t fn, size_t tn, size_t fp, double* sensitivity,
                                                  double* specificity);
/* JSON report of FP counts and sensitivities before/after HS2 filtering. */
LFPR_API lfpr_status lfpr_fp_reduction(const lfpr_nodule_list* before, const lfpr_nodule_list* after,
                                       const lfpr_nodule_list* ground_truth, double score_threshold,
                                       char** report_json);

/* ---- pipeline ------------------------------------------------------------- */

typedef struct lfpr_pipeline_config {
  double min_score;
  double nms_iou;
  lfpr_lhi_params lhi;
  double blob_threshold_hu;
  double blob_min_diameter_mm;
  double blob_max_diameter_mm;
  double keep_threshold;
  int jobs;
} lfpr_pipeline_config;

LFPR_API void lfpr_pipeline_config_default(lfpr_pipeline_config* config);
/* candidates NULL: blob detector. ground_truth may be NULL (no FROC).
 * summary_json (optional) lists the written files and headline numbers. */
LFPR_API lfpr_status lfpr_pipeline_run(const lfpr_scan_set* scans, const lfpr_nodule_list* candidates,
                                       const lfpr_nodule_list* ground_truth, const lfpr_model* model,
                                       const lfpr_pipeline_config* config, const char* out_dir, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* LUNGFPR_H */
