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

#include "lungfpr/lungfpr.h"

#include "candidates.hpp"
#include "error.hpp"
#include "fileio.hpp"
#include "froc.hpp"
#include "hs2.hpp"
#include "lhi.hpp"
#include "phantom.hpp"
#include "pipeline.hpp"
#include "volume_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <new>
#include <string>

using namespace lungfpr;

struct lfpr_volume {
  CtVolume v;
};

struct lfpr_nodule_list {
  std::vector<NoduleCandidate> items;
};

struct lfpr_scan_set {
  std::vector<ScanRef> scans;
  FrameLookup frames;
};

struct lfpr_model {
  Hs2Model m;
};

struct lfpr_dataset {
  Hs2Dataset d;
};

struct lfpr_froc_report {
  FrocReport r;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
lfpr_status guard(Fn&& fn) noexcept
{
  try {
    fn();
    return LFPR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<lfpr_status>(static_cast<int>(e.kind()));
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return LFPR_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return LFPR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LFPR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return LFPR_ERR_INTERNAL;
  }
}

template <typename T>
const T& need(const T* p, const char* what)
{
  if (!p)
    fail(ErrorKind::InvalidArgument, std::string(what) + " is NULL");
  return *p;
}

template <typename T>
T& need(T* p, const char* what)
{
  if (!p)
    fail(ErrorKind::InvalidArgument, std::string(what) + " is NULL");
  return *p;
}

// Strings and buffers are checked but passed through as pointers.
template <typename T>
T* nonnull(T* p, const char* what)
{
  if (!p)
    fail(ErrorKind::InvalidArgument, std::string(what) + " is NULL");
  return p;
}

char* dup_string(const std::string& s)
{
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out)
    throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

LhiParams to_core(const lfpr_lhi_params* p)
{
  LhiParams out;
  if (p) {
    out.tau = p->tau;
    out.delta_threshold = p->delta_threshold;
    out.window_slices = p->window_slices;
    out.patch_scale = p->patch_scale;
    out.out_size = p->out_size;
  }
  out.validate();
  return out;
}

NoduleCandidate to_core(const lfpr_nodule& n)
{
  NoduleCandidate c;
  c.scan_id = n.scan_id ? n.scan_id : "";
  c.center_mm = {n.center_mm[0], n.center_mm[1], n.center_mm[2]};
  c.diameter_mm = n.diameter_mm;
  c.score = n.score;
  return c;
}

std::vector<GroundTruthNodule> as_ground_truth(const lfpr_nodule_list* list)
{
  std::vector<GroundTruthNodule> out;
  if (!list)
    return out;
  for (const auto& c : list->items)
    out.push_back({c.scan_id, c.center_mm, c.diameter_mm});
  return out;
}

lfpr_nodule_list* from_ground_truth(const std::vector<GroundTruthNodule>& gt)
{
  auto* l = new lfpr_nodule_list;
  for (const auto& g : gt)
    l->items.push_back({g.scan_id, g.center_mm, g.diameter_mm, 0.0});
  return l;
}

template <typename T>
void set_out(T** out, T* value)
{
  if (!out) {
    delete value;
    fail(ErrorKind::InvalidArgument, "output handle pointer is NULL");
  }
  *out = value;
}

} // namespace

extern "C" {

const char* lfpr_version(void)
{
  return "0.1.0";
}

const char* lfpr_last_error(void)
{
  return g_last_error.c_str();
}

const char* lfpr_status_name(lfpr_status s)
{
  switch (s) {
  case LFPR_OK: return "ok";
  case LFPR_ERR_INVALID_ARGUMENT: return "invalid argument";
  case LFPR_ERR_PARSE: return "parse error";
  case LFPR_ERR_SIZE: return "size error";
  case LFPR_ERR_UNSUPPORTED: return "unsupported format";
  case LFPR_ERR_DEGENERATE_SIZE: return "degenerate size";
  case LFPR_ERR_TILING: return "tiling error";
  case LFPR_ERR_VALIDATION: return "validation error";
  case LFPR_ERR_FRAME: return "frame error";
  case LFPR_ERR_BOUNDS: return "bounds error";
  case LFPR_ERR_SHAPE: return "shape error";
  case LFPR_ERR_NUMERIC: return "numeric error";
  case LFPR_ERR_CONFIG: return "config error";
  case LFPR_ERR_DOMAIN: return "domain error";
  case LFPR_ERR_FORMAT: return "format error";
  case LFPR_ERR_UNDEFINED_METRIC: return "undefined metric";
  case LFPR_ERR_IDENTITY: return "identity error";
  case LFPR_ERR_SPEC: return "spec error";
  case LFPR_ERR_IO: return "I/O error";
  case LFPR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void lfpr_string_free(char* s)
{
  std::free(s);
}

// ---- volumes

lfpr_status lfpr_volume_load(const char* mhd_path, lfpr_volume** out)
{
  return guard([&] { set_out(out, new lfpr_volume{load_mhd(nonnull(mhd_path, "path"))}); });
}

lfpr_status lfpr_volume_save(const lfpr_volume* volume, const char* mhd_path)
{
  return guard([&] { save_mhd(need(volume, "volume").v, nonnull(mhd_path, "path")); });
}

lfpr_status lfpr_volume_info(const lfpr_volume* volume, int dims[3], double spacing[3], double origin[3])
{
  return guard([&] {
    const auto& v = need(volume, "volume").v;
    for (int a = 0; a < 3; ++a) {
      if (dims)
        dims[a] = v.dims()[a];
      if (spacing)
        spacing[a] = v.spacing()[a];
      if (origin)
        origin[a] = v.origin()[a];
    }
  });
}

lfpr_status lfpr_volume_stats(const lfpr_volume* volume, int16_t* min, int16_t* max, double* mean)
{
  return guard([&] {
    const auto s = volume_stats(need(volume, "volume").v);
    if (min)
      *min = s.min;
    if (max)
      *max = s.max;
    if (mean)
      *mean = s.mean;
  });
}

lfpr_status lfpr_volume_voxels(const lfpr_volume* volume, int16_t* buffer, size_t capacity)
{
  return guard([&] {
    const auto vox = need(volume, "volume").v.voxels();
    if (!buffer || capacity < vox.size())
      fail(ErrorKind::Size, "voxel buffer holds " + std::to_string(capacity) + " values, need " +
                                std::to_string(vox.size()));
    std::memcpy(buffer, vox.data(), vox.size() * sizeof(int16_t));
  });
}

lfpr_status lfpr_volume_resample(const lfpr_volume* volume, double spacing_mm, lfpr_volume** out)
{
  return guard([&] { set_out(out, new lfpr_volume{resample_isotropic(need(volume, "volume").v, spacing_mm)}); });
}

lfpr_status lfpr_volume_flip(const lfpr_volume* volume, unsigned axes, lfpr_volume** out)
{
  return guard([&] {
    if (axes & ~7u)
      fail(ErrorKind::InvalidArgument, "flip axes must be a combination of LFPR_AXIS_X/Y/Z");
    set_out(out, new lfpr_volume{flip_volume(need(volume, "volume").v, axes)});
  });
}

lfpr_status lfpr_volume_world_to_voxel(const lfpr_volume* volume, const double point_mm[3], double out[3])
{
  return guard([&] {
    const auto p = need(volume, "volume").v.world_to_voxel(
        {nonnull(point_mm, "point")[0], point_mm[1], point_mm[2]});
    nonnull(out, "output")[0] = p[0];
    out[1] = p[1];
    out[2] = p[2];
  });
}

void lfpr_volume_free(lfpr_volume* volume)
{
  delete volume;
}

// ---- lists

lfpr_status lfpr_list_create(lfpr_nodule_list** out)
{
  return guard([&] { set_out(out, new lfpr_nodule_list); });
}

lfpr_status lfpr_list_append(lfpr_nodule_list* list, const lfpr_nodule* item)
{
  return guard([&] { need(list, "list").items.push_back(to_core(need(item, "item"))); });
}

size_t lfpr_list_size(const lfpr_nodule_list* list)
{
  return list ? list->items.size() : 0;
}

lfpr_status lfpr_list_get(const lfpr_nodule_list* list, size_t index, lfpr_nodule* out)
{
  return guard([&] {
    const auto& items = need(list, "list").items;
    if (index >= items.size())
      fail(ErrorKind::Bounds, "list index " + std::to_string(index) + " out of range");
    const auto& c = items[index];
    auto& o = need(out, "output");
    o.scan_id = c.scan_id.c_str();
    o.center_mm[0] = c.center_mm[0];
    o.center_mm[1] = c.center_mm[1];
    o.center_mm[2] = c.center_mm[2];
    o.diameter_mm = c.diameter_mm;
    o.score = c.score;
  });
}

void lfpr_list_free(lfpr_nodule_list* list)
{
  delete list;
}

lfpr_status lfpr_candidates_load_csv(const char* path, lfpr_nodule_list** out, char** warnings)
{
  return guard([&] {
    auto r = load_candidates_csv(read_text_file(nonnull(path, "path")));
    std::string w;
    for (const auto& s : r.warnings)
      w += s + "\n";
    auto* list = new lfpr_nodule_list{std::move(r.candidates)};
    set_out(out, list);
    if (warnings)
      *warnings = dup_string(w);
  });
}

lfpr_status lfpr_candidates_save_csv(const lfpr_nodule_list* list, const char* path)
{
  return guard([&] { write_text_file(nonnull(path, "path"), format_candidates_csv(need(list, "list").items)); });
}

lfpr_status lfpr_annotations_load_csv(const char* path, lfpr_nodule_list** out)
{
  return guard([&] { set_out(out, from_ground_truth(load_annotations_csv(read_text_file(nonnull(path, "path"))))); });
}

lfpr_status lfpr_annotations_save_csv(const lfpr_nodule_list* list, const char* path)
{
  return guard([&] { write_text_file(nonnull(path, "path"), format_annotations_csv(as_ground_truth(&need(list, "list")))); });
}

lfpr_status lfpr_candidates_threshold(const lfpr_nodule_list* in, double min_score, lfpr_nodule_list** out)
{
  return guard([&] { set_out(out, new lfpr_nodule_list{threshold_candidates(need(in, "list").items, min_score)}); });
}

lfpr_status lfpr_candidates_nms(const lfpr_nodule_list* in, const lfpr_scan_set* scans, double iou_threshold,
                                lfpr_nodule_list** out)
{
  return guard([&] {
    set_out(out, new lfpr_nodule_list{
                     dedup_candidates(need(in, "list").items, need(scans, "scan set").frames, iou_threshold)});
  });
}

lfpr_status lfpr_detect_blobs(const lfpr_volume* volume, const char* scan_id, double intensity_threshold_hu,
                              double min_diameter_mm, double max_diameter_mm, lfpr_nodule_list** out)
{
  return guard([&] {
    const BlobParams p{intensity_threshold_hu, min_diameter_mm, max_diameter_mm};
    set_out(out, new lfpr_nodule_list{detect_blobs(need(volume, "volume").v, nonnull(scan_id, "scan id"), p)});
  });
}

// ---- scan sets

lfpr_status lfpr_scan_set_open_dir(const char* dir, lfpr_scan_set** out)
{
  return guard([&] {
    auto* set = new lfpr_scan_set;
    try {
      set->scans = list_scans(nonnull(dir, "directory"));
      for (const auto& s : set->scans)
        set->frames.emplace(s.scan_id, load_mhd_frame(s.mhd_path));
    } catch (...) {
      delete set;
      throw;
    }
    set_out(out, set);
  });
}

size_t lfpr_scan_set_size(const lfpr_scan_set* set)
{
  return set ? set->scans.size() : 0;
}

const char* lfpr_scan_set_id(const lfpr_scan_set* set, size_t index)
{
  return set && index < set->scans.size() ? set->scans[index].scan_id.c_str() : nullptr;
}

const char* lfpr_scan_set_path(const lfpr_scan_set* set, size_t index)
{
  return set && index < set->scans.size() ? set->scans[index].mhd_path.c_str() : nullptr;
}

void lfpr_scan_set_free(lfpr_scan_set* set)
{
  delete set;
}

// ---- LHI

void lfpr_lhi_params_default(lfpr_lhi_params* params)
{
  if (!params)
    return;
  const LhiParams d;
  *params = {d.tau, d.delta_threshold, d.window_slices, d.patch_scale, d.out_size};
}

lfpr_status lfpr_lhi_compute(const lfpr_volume* volume, const lfpr_nodule* candidate, const lfpr_lhi_params* params,
                             int normalized, float* buffer, size_t capacity, int z_range[2])
{
  return guard([&] {
    const auto p = to_core(params);
    const auto img = lhi_for_candidate(need(volume, "volume").v, to_core(need(candidate, "candidate")), p);
    const auto values = normalized ? img.normalized() : img.values;
    if (!buffer || capacity < values.size())
      fail(ErrorKind::Size, "LHI buffer holds " + std::to_string(capacity) + " values, need " +
                                std::to_string(values.size()));
    std::memcpy(buffer, values.data(), values.size() * sizeof(float));
    if (z_range) {
      z_range[0] = img.z_first;
      z_range[1] = img.z_last;
    }
  });
}

lfpr_status lfpr_lhi_from_stack(const int16_t* stack, int width, int height, int slices, const lfpr_lhi_params* params,
                                int* out, size_t capacity)
{
  return guard([&] {
    if (width < 1 || height < 1 || slices < 1)
      fail(ErrorKind::Shape, "slice stack dimensions must be positive");
    const std::size_t n = static_cast<std::size_t>(width) * height * slices;
    SliceStack st(width, height, slices, std::vector<std::int16_t>(nonnull(stack, "stack"), stack + n));
    const auto f = compute_lhi(st, to_core(params));
    if (!out || capacity < f.size())
      fail(ErrorKind::Size, "LHI buffer is too small");
    std::copy(f.begin(), f.end(), out);
  });
}

// ---- phantoms

lfpr_status lfpr_phantom_random_spec(const char* options_json, uint64_t seed, const char* scan_id, char** spec_json)
{
  return guard([&] {
    RandomPhantomOptions o;
    if (options_json && *options_json) {
      const auto j = nlohmann::json::parse(options_json);
      if (!j.is_object())
        fail(ErrorKind::Spec, "phantom options must be a JSON object");
      const auto triple = [&](const char* key, auto& dst) {
        if (j.contains(key)) {
          const auto& a = j.at(key);
          if (!a.is_array() || a.size() != 3)
            fail(ErrorKind::Spec, std::string(key) + " must be an array of 3 numbers");
          for (int k = 0; k < 3; ++k)
            a.at(k).get_to(dst[k]);
        }
      };
      triple("dims", o.dims);
      triple("spacing", o.spacing);
      const auto num = [&](const char* key, auto& dst) {
        if (j.contains(key))
          j.at(key).get_to(dst);
      };
      num("nodules_min", o.nodules_min);
      num("nodules_max", o.nodules_max);
      num("tubes", o.tubes);
      num("nodule_diameter_min_mm", o.nodule_diameter_min_mm);
      num("nodule_diameter_max_mm", o.nodule_diameter_max_mm);
      num("tube_radius_min_mm", o.tube_radius_min_mm);
      num("tube_radius_max_mm", o.tube_radius_max_mm);
      num("tube_length_min_mm", o.tube_length_min_mm);
      num("tube_length_max_mm", o.tube_length_max_mm);
      num("tube_drift_vox_per_slice", o.tube_drift_vox_per_slice);
      num("sphere_rate_vox_per_slice", o.sphere_rate_vox_per_slice);
      num("intensity_min_hu", o.intensity_min_hu);
      num("intensity_max_hu", o.intensity_max_hu);
      num("background_hu", o.background_hu);
      num("noise_sigma_hu", o.noise_sigma_hu);
      num("separation_vox", o.separation_vox);
    }
    const auto spec = random_phantom_spec(o, seed, nonnull(scan_id, "scan id"));
    need(spec_json, "output") = dup_string(phantom_spec_to_json(spec));
  });
}

lfpr_status lfpr_phantom_generate(const char* spec_json, lfpr_volume** volume, lfpr_nodule_list** nodules,
                                  lfpr_nodule_list** tissues)
{
  return guard([&] {
    auto ph = generate_phantom(phantom_spec_from_json(nonnull(spec_json, "spec")));
    if (!volume)
      fail(ErrorKind::InvalidArgument, "volume output is NULL");
    auto* v = new lfpr_volume{std::move(ph.volume)};
    auto* n = from_ground_truth(ph.nodules);
    auto* t = from_ground_truth(ph.tissues);
    *volume = v;
    if (nodules)
      *nodules = n;
    else
      delete n;
    if (tissues)
      *tissues = t;
    else
      delete t;
  });
}

// ---- HS2

void lfpr_hs2_arch_default(lfpr_hs2_arch* arch)
{
  if (!arch)
    return;
  const Hs2Architecture a;
  *arch = {a.input_size, a.conv1_filters, a.conv2_filters, {a.fc_widths[0], a.fc_widths[1], a.fc_widths[2]}};
}

void lfpr_train_config_default(lfpr_train_config* config)
{
  if (!config)
    return;
  const TrainConfig c;
  *config = {c.learning_rate, c.lr_decay, c.decay_every_epochs, c.epochs, c.batch_size, c.seed, c.balance_classes ? 1 : 0};
}

lfpr_status lfpr_model_create(const lfpr_hs2_arch* arch, uint64_t seed, lfpr_model** out)
{
  return guard([&] {
    Hs2Architecture a;
    if (arch) {
      a.input_size = arch->input_size;
      a.conv1_filters = arch->conv1_filters;
      a.conv2_filters = arch->conv2_filters;
      a.fc_widths = {arch->fc_widths[0], arch->fc_widths[1], arch->fc_widths[2]};
    }
    set_out(out, new lfpr_model{Hs2Model(a, seed)});
  });
}

lfpr_status lfpr_model_load(const char* path, lfpr_model** out)
{
  return guard([&] { set_out(out, new lfpr_model{load_model(read_binary_file(nonnull(path, "path")))}); });
}

lfpr_status lfpr_model_save(const lfpr_model* model, const char* path)
{
  return guard([&] { write_binary_file(nonnull(path, "path"), save_model(need(model, "model").m)); });
}

lfpr_status lfpr_model_arch(const lfpr_model* model, lfpr_hs2_arch* arch, uint64_t* seed)
{
  return guard([&] {
    const auto& m = need(model, "model").m;
    const auto& a = m.architecture();
    if (arch)
      *arch = {a.input_size, a.conv1_filters, a.conv2_filters, {a.fc_widths[0], a.fc_widths[1], a.fc_widths[2]}};
    if (seed)
      *seed = m.seed();
  });
}

lfpr_status lfpr_model_predict(const lfpr_model* model, const float* image, size_t count, double* p_nodule)
{
  return guard([&] {
    const auto p = need(model, "model").m.forward(std::span<const float>(nonnull(image, "image"), count));
    *nonnull(p_nodule, "output") = p.p_nodule;
  });
}

lfpr_status lfpr_model_train(lfpr_model* model, const lfpr_dataset* data, const lfpr_train_config* config,
                             double* loss_history, size_t capacity)
{
  return guard([&] {
    TrainConfig c;
    if (config) {
      c.learning_rate = config->learning_rate;
      c.lr_decay = config->lr_decay;
      c.decay_every_epochs = config->decay_every_epochs;
      c.epochs = config->epochs;
      c.batch_size = config->batch_size;
      c.seed = config->seed;
      c.balance_classes = config->balance_classes != 0;
    }
    const auto r = train(need(model, "model").m, need(data, "dataset").d, c);
    if (loss_history)
      for (std::size_t i = 0; i < r.loss_history.size() && i < capacity; ++i)
        loss_history[i] = r.loss_history[i];
  });
}

lfpr_status lfpr_model_evaluate(const lfpr_model* model, const lfpr_dataset* data, double* accuracy, double* mean_loss)
{
  return guard([&] {
    const auto e = evaluate(need(model, "model").m, need(data, "dataset").d);
    if (accuracy)
      *accuracy = e.accuracy;
    if (mean_loss)
      *mean_loss = e.mean_loss;
  });
}

void lfpr_model_free(lfpr_model* model)
{
  delete model;
}

lfpr_status lfpr_dataset_create(lfpr_dataset** out)
{
  return guard([&] { set_out(out, new lfpr_dataset); });
}

lfpr_status lfpr_dataset_add(lfpr_dataset* data, const float* image, size_t count, int label, const char* id)
{
  return guard([&] {
    if (label != LFPR_TISSUE && label != LFPR_NODULE)
      fail(ErrorKind::InvalidArgument, "label must be LFPR_TISSUE or LFPR_NODULE");
    LabeledPatch p;
    p.image.assign(nonnull(image, "image"), image + count);
    p.label = static_cast<PatchClass>(label);
    p.id = id ? id : "";
    need(data, "dataset").d.push_back(std::move(p));
  });
}

lfpr_status lfpr_dataset_add_objects(lfpr_dataset* data, const lfpr_volume* volume, const lfpr_nodule_list* nodules,
                                     const lfpr_nodule_list* tissues, const lfpr_lhi_params* params)
{
  return guard([&] {
    auto more = object_patches(need(volume, "volume").v, as_ground_truth(nodules), as_ground_truth(tissues),
                               to_core(params));
    auto& d = need(data, "dataset").d;
    d.insert(d.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  });
}

lfpr_status lfpr_dataset_split(const lfpr_dataset* data, uint64_t seed, lfpr_dataset** train_out, lfpr_dataset** test_out)
{
  return guard([&] {
    if (!train_out || !test_out)
      fail(ErrorKind::InvalidArgument, "split outputs are NULL");
    auto s = split_dataset(need(data, "dataset").d, seed);
    *train_out = new lfpr_dataset{std::move(s.train)};
    *test_out = new lfpr_dataset{std::move(s.test)};
  });
}

size_t lfpr_dataset_size(const lfpr_dataset* data)
{
  return data ? data->d.size() : 0;
}

lfpr_status lfpr_dataset_counts(const lfpr_dataset* data, size_t* nodules, size_t* tissues)
{
  return guard([&] {
    std::size_t n = 0, t = 0;
    for (const auto& p : need(data, "dataset").d)
      (p.label == PatchClass::Nodule ? n : t) += 1;
    if (nodules)
      *nodules = n;
    if (tissues)
      *tissues = t;
  });
}

uint64_t lfpr_dataset_hash(const lfpr_dataset* data)
{
  return data ? dataset_hash(data->d) : 0;
}

lfpr_status lfpr_dataset_dump(const lfpr_dataset* data, const char* dir)
{
  return guard([&] {
    std::vector<PatchDumpEntry> entries;
    for (const auto& p : need(data, "dataset").d)
      entries.push_back({p.id, p.label == PatchClass::Nodule ? "nodule" : "tissue", p.image});
    write_patch_dump(nonnull(dir, "directory"), entries);
  });
}

void lfpr_dataset_free(lfpr_dataset* data)
{
  delete data;
}

// ---- evaluation

lfpr_status lfpr_froc(const lfpr_nodule_list* candidates, const lfpr_nodule_list* ground_truth, size_t scan_count,
                      lfpr_froc_report** out)
{
  return guard([&] {
    set_out(out, new lfpr_froc_report{froc(need(candidates, "candidates").items,
                                           as_ground_truth(&need(ground_truth, "ground truth")), scan_count)});
  });
}

lfpr_status lfpr_froc_levels(const lfpr_froc_report* report, double levels[7], double* cpm_out)
{
  return guard([&] {
    const auto& r = need(report, "report").r;
    if (levels)
      std::copy(r.level_sensitivities.begin(), r.level_sensitivities.end(), levels);
    if (cpm_out)
      *cpm_out = r.cpm;
  });
}

size_t lfpr_froc_point_count(const lfpr_froc_report* report)
{
  return report ? report->r.operating_points.size() : 0;
}

lfpr_status lfpr_froc_point(const lfpr_froc_report* report, size_t index, double* threshold, double* fps_per_scan,
                            double* sensitivity)
{
  return guard([&] {
    const auto& pts = need(report, "report").r.operating_points;
    if (index >= pts.size())
      fail(ErrorKind::Bounds, "operating point index out of range");
    if (threshold)
      *threshold = pts[index].threshold;
    if (fps_per_scan)
      *fps_per_scan = pts[index].fps_per_scan;
    if (sensitivity)
      *sensitivity = pts[index].sensitivity;
  });
}

lfpr_status lfpr_froc_write(const lfpr_froc_report* report, const char* csv_path, const char* json_path,
                            const char* curve_path)
{
  return guard([&] {
    const auto& r = need(report, "report").r;
    if (csv_path)
      write_text_file(csv_path, format_froc_csv(r));
    if (json_path)
      write_text_file(json_path, format_froc_json(r));
    if (curve_path)
      write_text_file(curve_path, format_froc_curve(r));
  });
}

void lfpr_froc_free(lfpr_froc_report* report)
{
  delete report;
}

lfpr_status lfpr_cpm(const double* levels, size_t count, double* out)
{
  return guard([&] { *nonnull(out, "output") = cpm(std::span<const double>(nonnull(levels, "levels"), count)); });
}

lfpr_status lfpr_check_reported_cpm(const double* levels, size_t count, double reported, double* computed,
                                    int* discrepancy)
{
  return guard([&] {
    const auto c = check_reported_cpm(std::span<const double>(nonnull(levels, "levels"), count), reported);
    if (computed)
      *computed = c.computed;
    if (discrepancy)
      *discrepancy = c.discrepancy ? 1 : 0;
  });
}

lfpr_status lfpr_sensitivity_specificity(size_t tp, size_t fn, size_t tn, size_t fp, double* sensitivity,
                                         double* specificity)
{
  return guard([&] {
    const auto s = sensitivity_specificity(tp, fn, tn, fp);
    if (sensitivity)
      *sensitivity = s.sensitivity;
    if (specificity)
      *specificity = s.specificity;
  });
}

lfpr_status lfpr_fp_reduction(const lfpr_nodule_list* before, const lfpr_nodule_list* after,
                              const lfpr_nodule_list* ground_truth, double score_threshold, char** report_json)
{
  return guard([&] {
    const auto r = fp_reduction_report(need(before, "before").items, need(after, "after").items,
                                       as_ground_truth(ground_truth), score_threshold);
    need(report_json, "output") = dup_string(format_fp_reduction_json(r));
  });
}

// ---- pipeline

void lfpr_pipeline_config_default(lfpr_pipeline_config* config)
{
  if (!config)
    return;
  const PipelineConfig d;
  config->min_score = d.min_score;
  config->nms_iou = d.nms_iou;
  lfpr_lhi_params_default(&config->lhi);
  config->blob_threshold_hu = d.blobs.intensity_threshold_hu;
  config->blob_min_diameter_mm = d.blobs.min_diameter_mm;
  config->blob_max_diameter_mm = d.blobs.max_diameter_mm;
  config->keep_threshold = d.keep_threshold;
  config->jobs = d.jobs;
}

lfpr_status lfpr_pipeline_run(const lfpr_scan_set* scans, const lfpr_nodule_list* candidates,
                              const lfpr_nodule_list* ground_truth, const lfpr_model* model,
                              const lfpr_pipeline_config* config, const char* out_dir, char** summary_json)
{
  return guard([&] {
    PipelineConfig c;
    if (config) {
      c.min_score = config->min_score;
      c.nms_iou = config->nms_iou;
      c.lhi = to_core(&config->lhi);
      c.blobs = {config->blob_threshold_hu, config->blob_min_diameter_mm, config->blob_max_diameter_mm};
      c.keep_threshold = config->keep_threshold;
      c.jobs = config->jobs;
    }
    std::optional<std::vector<NoduleCandidate>> supplied;
    if (candidates)
      supplied = candidates->items;
    const auto r = run_pipeline(need(scans, "scan set").scans, supplied, as_ground_truth(ground_truth),
                                need(model, "model").m, c);
    const auto files = write_pipeline_outputs(r, nonnull(out_dir, "output directory"));

    nlohmann::ordered_json j;
    j["files"] = files;
    j["scan_count"] = r.scan_count;
    j["candidates_raw"] = r.raw.size();
    j["candidates_before"] = r.before.size();
    j["candidates_after"] = r.after.size();
    if (r.fp_report) {
      j["fp_before"] = r.fp_report->fp_before;
      j["fp_after"] = r.fp_report->fp_after;
      j["fp_reduction_percent"] = r.fp_report->reduction_percent;
      j["sensitivity_before"] = r.fp_report->sensitivity_before;
      j["sensitivity_after"] = r.fp_report->sensitivity_after;
    }
    if (r.froc_before && r.froc_after) {
      j["cpm_before"] = r.froc_before->cpm;
      j["cpm_after"] = r.froc_after->cpm;
    }
    if (std::isfinite(r.candidate_accuracy))
      j["candidate_accuracy"] = r.candidate_accuracy;
    if (summary_json)
      *summary_json = dup_string(j.dump(2) + "\n");
  });
}

} // extern "C"
