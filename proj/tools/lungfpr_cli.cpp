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

// lungfpr command-line front end. Everything goes through the C API.

#include "lungfpr/lungfpr.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Failure : std::runtime_error {
  int code;
  Failure(const std::string& msg, int c) : std::runtime_error(msg), code(c) {}
};

void check(lfpr_status s)
{
  if (s != LFPR_OK)
    throw Failure(lfpr_last_error(), s == LFPR_ERR_IO ? kExitIo : kExitValidation);
}

[[noreturn]] void usage_error(const std::string& msg)
{
  throw Failure(msg, kExitValidation);
}

template <typename T, void (*Free)(T*)>
struct Freer {
  void operator()(T* p) const { Free(p); }
};
using Volume = std::unique_ptr<lfpr_volume, Freer<lfpr_volume, lfpr_volume_free>>;
using List = std::unique_ptr<lfpr_nodule_list, Freer<lfpr_nodule_list, lfpr_list_free>>;
using ScanSet = std::unique_ptr<lfpr_scan_set, Freer<lfpr_scan_set, lfpr_scan_set_free>>;
using Model = std::unique_ptr<lfpr_model, Freer<lfpr_model, lfpr_model_free>>;
using Dataset = std::unique_ptr<lfpr_dataset, Freer<lfpr_dataset, lfpr_dataset_free>>;
using Froc = std::unique_ptr<lfpr_froc_report, Freer<lfpr_froc_report, lfpr_froc_free>>;
using CString = std::unique_ptr<char, Freer<char, lfpr_string_free>>;

Volume load_volume(const fs::path& p)
{
  lfpr_volume* v = nullptr;
  check(lfpr_volume_load(p.c_str(), &v));
  return Volume(v);
}

List new_list()
{
  lfpr_nodule_list* l = nullptr;
  check(lfpr_list_create(&l));
  return List(l);
}

List load_candidates(const fs::path& p)
{
  lfpr_nodule_list* l = nullptr;
  char* warnings = nullptr;
  check(lfpr_candidates_load_csv(p.c_str(), &l, &warnings));
  List out(l);
  CString w(warnings);
  if (w && *w)
    std::cerr << w.get();
  return out;
}

List load_annotations(const fs::path& p)
{
  lfpr_nodule_list* l = nullptr;
  check(lfpr_annotations_load_csv(p.c_str(), &l));
  return List(l);
}

ScanSet open_scans(const fs::path& dir)
{
  lfpr_scan_set* s = nullptr;
  check(lfpr_scan_set_open_dir(dir.c_str(), &s));
  return ScanSet(s);
}

Model load_model(const fs::path& p)
{
  lfpr_model* m = nullptr;
  check(lfpr_model_load(p.c_str(), &m));
  return Model(m);
}

std::vector<lfpr_nodule> items(const lfpr_nodule_list* l)
{
  std::vector<lfpr_nodule> out(lfpr_list_size(l));
  for (std::size_t i = 0; i < out.size(); ++i)
    check(lfpr_list_get(l, i, &out[i]));
  return out;
}

void append_all(lfpr_nodule_list* dst, const lfpr_nodule_list* src)
{
  for (const auto& n : items(src))
    check(lfpr_list_append(dst, &n));
}

std::string num(double v)
{
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits = 3)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_file(const fs::path& p, const std::string& body)
{
  std::ofstream f(p, std::ios::binary);
  if (!f || !f.write(body.data(), static_cast<std::streamsize>(body.size())))
    throw Failure("cannot write '" + p.string() + "'", kExitIo);
}

void make_dirs(const fs::path& p)
{
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec)
    throw Failure("cannot create directory '" + p.string() + "': " + ec.message(), kExitIo);
}

// ---- config files

/// Flat JSON object, keys mirror the long flag names of the subcommand being
/// run ('_' and '-' both accepted).
class JsonConfig : public CLI::Config {
public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool, bool, std::string) const override
  {
    json j;
    for (const auto* opt : app->get_options())
      if (opt->get_configurable() && !opt->get_lnames().empty() && opt->count() > 0)
        j[opt->get_lnames().front()] = opt->as<std::string>();
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override
  {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
      throw CLI::ConversionError("config file must hold a flat JSON object");

    std::vector<std::string> parents;
    for (const CLI::App* app = root_; app && !app->get_subcommands().empty();) {
      app = app->get_subcommands().front();
      parents.push_back(app->get_name());
    }

    std::vector<CLI::ConfigItem> out;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      const auto scalar = [&](const nlohmann::json& v) {
        if (v.is_string())
          return v.get<std::string>();
        if (v.is_object() || v.is_null() || v.is_array())
          throw CLI::ConversionError("config key '" + key + "' must be a scalar or an array of scalars");
        return v.dump();
      };
      if (value.is_array())
        for (const auto& v : value)
          item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      out.push_back(std::move(item));
    }
    return out;
  }

private:
  const CLI::App* root_;
};

// ---- manifests

std::string utc_now()
{
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void fnv1a(std::uint64_t& h, const char* data, std::size_t n)
{
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ull;
  }
}

// Content hash of a file, or of every file below a directory (names included).
std::string hash_path(const fs::path& p)
{
  std::uint64_t h = 0xcbf29ce484222325ull;
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(p, ec)) {
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file())
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  std::vector<char> buf(1 << 16);
  for (const auto& f : files) {
    const auto rel = fs::is_directory(p, ec) ? fs::relative(f, p).generic_string() : std::string();
    fnv1a(h, rel.data(), rel.size());
    std::ifstream in(f, std::ios::binary);
    if (!in)
      throw Failure("cannot read '" + f.string() + "'", kExitIo);
    while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0)
      fnv1a(h, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return hex64(h);
}

json typed(const std::string& s)
{
  auto v = json::parse(s, nullptr, false);
  if (!v.is_discarded() && (v.is_number() || v.is_boolean()))
    return v;
  return s;
}

class Manifest {
public:
  Manifest(const CLI::App* sub, std::string name) : sub_(sub), name_(std::move(name)), started_(utc_now()) {}

  void input(const std::string& key, const fs::path& p)
  {
    inputs_[key] = p.string();
    hashes_[key] = hash_path(p);
  }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void seed(const std::string& key, std::uint64_t v) { seeds_[key] = v; }
  void hash(const std::string& key, std::uint64_t v) { hashes_[key] = hex64(v); }
  void hash(const std::string& key, const fs::path& p) { hashes_[key] = hash_path(p); }
  void note(const std::string& key, json v) { extra_[key] = std::move(v); }

  void write(const fs::path& path) const
  {
    json config;
    for (const auto* opt : sub_->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames().front() == "help")
        continue;
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& res = opt->results();
        if (res.size() == 1) {
          config[name] = typed(res.front());
        } else {
          json arr = json::array();
          for (const auto& r : res)
            arr.push_back(typed(r));
          config[name] = arr;
        }
      } else if (!opt->get_default_str().empty()) {
        config[name] = typed(opt->get_default_str());
      }
    }
    for (const auto& o : outputs_) {
      std::error_code ec;
      if (!fs::exists(o, ec))
        throw Failure("declared output '" + o + "' was not written", kExitIo);
    }
    json j;
    j["tool"] = "lungfpr";
    j["version"] = lfpr_version();
    j["subcommand"] = name_;
    j["started_utc"] = started_;
    j["finished_utc"] = utc_now();
    j["config"] = config;
    j["seeds"] = seeds_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["dataset_hashes"] = hashes_;
    for (const auto& [k, v] : extra_.items())
      j[k] = v;
    write_file(path, j.dump(2) + "\n");
  }

private:
  const CLI::App* sub_;
  std::string name_;
  std::string started_;
  json inputs_ = json::object(), seeds_ = json::object(), hashes_ = json::object(), extra_ = json::object();
  std::vector<std::string> outputs_;
};

fs::path manifest_for_file(const std::string& flag, const fs::path& out)
{
  return flag.empty() ? fs::path(out.string() + ".manifest.json") : fs::path(flag);
}

fs::path manifest_for_dir(const std::string& flag, const fs::path& dir)
{
  return flag.empty() ? dir / "manifest.json" : fs::path(flag);
}

// ---- shared option groups

void add_lhi_options(CLI::App* sub, lfpr_lhi_params& p)
{
  lfpr_lhi_params_default(&p);
  sub->add_option("--tau", p.tau, "LHI decay start value")->capture_default_str();
  sub->add_option("--delta-threshold", p.delta_threshold, "LHI intensity change threshold (HU)")->capture_default_str();
  sub->add_option("--window", p.window_slices, "slices in the LHI window (odd)")->capture_default_str();
  sub->add_option("--patch-scale", p.patch_scale, "crop side as a multiple of the candidate diameter")
      ->capture_default_str();
  sub->add_option("--lhi-size", p.out_size, "LHI side length after resizing")->capture_default_str();
}

void add_manifest_option(CLI::App* sub, std::string& path)
{
  sub->add_option("--manifest", path, "where to write the run manifest");
}

// Labels by containment in any ground-truth sphere of the same scan.
bool inside_any(const lfpr_nodule& c, const std::vector<lfpr_nodule>& gt)
{
  for (const auto& g : gt) {
    if (std::string_view(g.scan_id) != c.scan_id)
      continue;
    const double dx = c.center_mm[0] - g.center_mm[0], dy = c.center_mm[1] - g.center_mm[1],
                 dz = c.center_mm[2] - g.center_mm[2];
    if (std::sqrt(dx * dx + dy * dy + dz * dz) <= g.diameter_mm / 2.0)
      return true;
  }
  return false;
}

// Groups list entries by scan id (sorted), keeping input order inside a scan.
std::map<std::string, std::vector<std::size_t>> by_scan(const std::vector<lfpr_nodule>& v)
{
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out[v[i].scan_id].push_back(i);
  return out;
}

std::map<std::string, fs::path> scan_paths(const lfpr_scan_set* set)
{
  std::map<std::string, fs::path> out;
  for (std::size_t i = 0; i < lfpr_scan_set_size(set); ++i)
    out[lfpr_scan_set_id(set, i)] = lfpr_scan_set_path(set, i);
  return out;
}

const fs::path& scan_path(const std::map<std::string, fs::path>& paths, const std::string& id)
{
  const auto it = paths.find(id);
  if (it == paths.end())
    throw Failure("scan '" + id + "' has no .mhd file in the scan directory", kExitIo);
  return it->second;
}

std::vector<float> lhi_image(const lfpr_volume* v, const lfpr_nodule& c, const lfpr_lhi_params& p, bool normalized,
                             int z_range[2])
{
  std::vector<float> img(static_cast<std::size_t>(p.out_size) * p.out_size);
  check(lfpr_lhi_compute(v, &c, &p, normalized ? 1 : 0, img.data(), img.size(), z_range));
  return img;
}

// ---- subcommands

struct PhantomGen {
  std::string out, options, spec, prefix = "phantom", manifest;
  int count = 1;
  std::uint64_t seed = 1;
};

void run_phantom_gen(const CLI::App* sub, const PhantomGen& o)
{
  Manifest m(sub, "phantom gen");
  m.seed("seed", o.seed);
  std::string options_json;
  if (!o.options.empty()) {
    std::ifstream in(o.options, std::ios::binary);
    if (!in)
      throw Failure("cannot read options file '" + o.options + "'", kExitIo);
    options_json.assign(std::istreambuf_iterator<char>(in), {});
    m.input("options", o.options);
  }
  std::string fixed_spec;
  if (!o.spec.empty()) {
    std::ifstream in(o.spec, std::ios::binary);
    if (!in)
      throw Failure("cannot read spec file '" + o.spec + "'", kExitIo);
    fixed_spec.assign(std::istreambuf_iterator<char>(in), {});
    m.input("spec", o.spec);
  }
  if (o.count < 1)
    usage_error("--count must be >= 1");

  const fs::path root(o.out);
  make_dirs(root / "scans");
  make_dirs(root / "specs");
  auto nodules = new_list(), tissues = new_list();
  const int n = fixed_spec.empty() ? o.count : 1;
  for (int i = 0; i < n; ++i) {
    std::string spec_json = fixed_spec;
    std::string id;
    if (spec_json.empty()) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%03d", i);
      id = o.prefix + buf;
      char* s = nullptr;
      check(lfpr_phantom_random_spec(options_json.empty() ? nullptr : options_json.c_str(), o.seed, id.c_str(), &s));
      spec_json = CString(s).get();
    } else {
      id = nlohmann::json::parse(spec_json).value("scan_id", std::string());
    }
    lfpr_volume* v = nullptr;
    lfpr_nodule_list *nl = nullptr, *tl = nullptr;
    check(lfpr_phantom_generate(spec_json.c_str(), &v, &nl, &tl));
    Volume vol(v);
    List nod(nl), tis(tl);
    const auto mhd = root / "scans" / (id + ".mhd");
    check(lfpr_volume_save(vol.get(), mhd.c_str()));
    write_file(root / "specs" / (id + ".json"), spec_json);
    append_all(nodules.get(), nod.get());
    append_all(tissues.get(), tis.get());
  }
  const auto ann = root / "annotations.csv", tis = root / "tissues.csv";
  check(lfpr_annotations_save_csv(nodules.get(), ann.c_str()));
  check(lfpr_annotations_save_csv(tissues.get(), tis.c_str()));
  for (const auto& p : {root / "scans", root / "specs", ann, tis})
    m.output(p);
  m.hash("scans", root / "scans");
  const auto mpath = manifest_for_dir(o.manifest, root);
  m.write(mpath);
  std::cout << "generated " << n << " scans, " << lfpr_list_size(nodules.get()) << " nodules, "
            << lfpr_list_size(tissues.get()) << " tissue objects in " << root.string() << "\n";
}

struct VolumeInfo {
  std::string input, manifest;
  bool as_json = false;
};

void run_volume_info(const CLI::App* sub, const VolumeInfo& o)
{
  Manifest m(sub, "volume info");
  m.input("volume", o.input);
  const auto v = load_volume(o.input);
  int dims[3];
  double spacing[3], origin[3], mean = 0;
  int16_t lo = 0, hi = 0;
  check(lfpr_volume_info(v.get(), dims, spacing, origin));
  check(lfpr_volume_stats(v.get(), &lo, &hi, &mean));
  json j;
  j["dims"] = {dims[0], dims[1], dims[2]};
  j["spacing_mm"] = {spacing[0], spacing[1], spacing[2]};
  j["origin_mm"] = {origin[0], origin[1], origin[2]};
  j["min_hu"] = lo;
  j["max_hu"] = hi;
  j["mean_hu"] = mean;
  if (o.as_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "dims     " << dims[0] << " x " << dims[1] << " x " << dims[2] << "\n"
              << "spacing  " << num(spacing[0]) << " " << num(spacing[1]) << " " << num(spacing[2]) << " mm\n"
              << "origin   " << num(origin[0]) << " " << num(origin[1]) << " " << num(origin[2]) << " mm\n"
              << "HU range " << lo << " .. " << hi << ", mean " << fixed(mean, 2) << "\n";
  }
  if (!o.manifest.empty()) {
    m.note("result", j);
    m.write(o.manifest);
  }
}

struct VolumeResample {
  std::string input, out, manifest;
  double spacing = 1.0;
};

void run_volume_resample(const CLI::App* sub, const VolumeResample& o)
{
  Manifest m(sub, "volume resample");
  m.input("volume", o.input);
  const auto v = load_volume(o.input);
  lfpr_volume* r = nullptr;
  check(lfpr_volume_resample(v.get(), o.spacing, &r));
  const Volume res(r);
  check(lfpr_volume_save(res.get(), o.out.c_str()));
  int dims[3];
  double spacing[3], origin[3];
  check(lfpr_volume_info(res.get(), dims, spacing, origin));
  m.output(o.out);
  m.write(manifest_for_file(o.manifest, o.out));
  std::cout << "wrote " << o.out << " (" << dims[0] << " x " << dims[1] << " x " << dims[2] << ")\n";
}

struct CandFilter {
  std::string input, out, manifest;
  double min_score = 0.1;
};

void run_candidates_filter(const CLI::App* sub, const CandFilter& o)
{
  Manifest m(sub, "candidates filter");
  m.input("candidates", o.input);
  const auto in = load_candidates(o.input);
  lfpr_nodule_list* l = nullptr;
  check(lfpr_candidates_threshold(in.get(), o.min_score, &l));
  List out(l);
  check(lfpr_candidates_save_csv(out.get(), o.out.c_str()));
  m.output(o.out);
  m.write(manifest_for_file(o.manifest, o.out));
  std::cout << "kept " << lfpr_list_size(out.get()) << " of " << lfpr_list_size(in.get()) << " candidates\n";
}

struct CandNms {
  std::string input, scans, out, manifest;
  double iou = 0.1;
};

void run_candidates_nms(const CLI::App* sub, const CandNms& o)
{
  Manifest m(sub, "candidates nms");
  m.input("candidates", o.input);
  m.input("scans", o.scans);
  const auto in = load_candidates(o.input);
  const auto set = open_scans(o.scans);
  lfpr_nodule_list* l = nullptr;
  check(lfpr_candidates_nms(in.get(), set.get(), o.iou, &l));
  List out(l);
  check(lfpr_candidates_save_csv(out.get(), o.out.c_str()));
  m.output(o.out);
  m.write(manifest_for_file(o.manifest, o.out));
  std::cout << "kept " << lfpr_list_size(out.get()) << " of " << lfpr_list_size(in.get()) << " candidates\n";
}

struct BlobFlags {
  double threshold_hu = -400.0, min_diameter = 3.0, max_diameter = 30.0;
};

void add_blob_options(CLI::App* sub, BlobFlags& b)
{
  sub->add_option("--blob-threshold", b.threshold_hu, "blob detector intensity threshold (HU)")->capture_default_str();
  sub->add_option("--blob-min-diameter", b.min_diameter, "smallest blob kept (mm)")->capture_default_str();
  sub->add_option("--blob-max-diameter", b.max_diameter, "largest blob kept (mm)")->capture_default_str();
}

struct CandDetect {
  std::string scans, out, manifest;
  BlobFlags blobs;
};

void run_candidates_detect(const CLI::App* sub, const CandDetect& o)
{
  Manifest m(sub, "candidates detect");
  m.input("scans", o.scans);
  const auto set = open_scans(o.scans);
  auto all = new_list();
  for (std::size_t i = 0; i < lfpr_scan_set_size(set.get()); ++i) {
    const auto v = load_volume(lfpr_scan_set_path(set.get(), i));
    lfpr_nodule_list* l = nullptr;
    check(lfpr_detect_blobs(v.get(), lfpr_scan_set_id(set.get(), i), o.blobs.threshold_hu, o.blobs.min_diameter,
                            o.blobs.max_diameter, &l));
    List found(l);
    append_all(all.get(), found.get());
  }
  check(lfpr_candidates_save_csv(all.get(), o.out.c_str()));
  m.output(o.out);
  m.write(manifest_for_file(o.manifest, o.out));
  std::cout << "detected " << lfpr_list_size(all.get()) << " candidates in " << lfpr_scan_set_size(set.get())
            << " scans\n";
}

struct LhiExtract {
  std::string scans, candidates, annotations, out, manifest;
  lfpr_lhi_params lhi{};
  bool raw = false;
};

void run_lhi_extract(const CLI::App* sub, const LhiExtract& o)
{
  Manifest m(sub, "lhi extract");
  m.input("scans", o.scans);
  m.input("candidates", o.candidates);
  const auto set = open_scans(o.scans);
  const auto paths = scan_paths(set.get());
  const auto cands = load_candidates(o.candidates);
  const auto cv = items(cands.get());
  std::vector<lfpr_nodule> gt;
  List gt_list;
  if (!o.annotations.empty()) {
    m.input("annotations", o.annotations);
    gt_list = load_annotations(o.annotations);
    gt = items(gt_list.get());
  }
  const fs::path root(o.out);
  make_dirs(root / "patches");
  std::vector<std::string> rows(cv.size());
  for (const auto& [scan, idx] : by_scan(cv)) {
    const auto v = load_volume(scan_path(paths, scan));
    for (const auto i : idx) {
      int z[2];
      const auto img = lhi_image(v.get(), cv[i], o.lhi, !o.raw, z);
      const std::string id = scan + ":" + std::to_string(i);
      const std::string file = "patches/" + std::to_string(i) + ".f32";
      write_file(root / file, std::string(reinterpret_cast<const char*>(img.data()), img.size() * sizeof(float)));
      const std::string label = gt_list ? (inside_any(cv[i], gt) ? "nodule" : "tissue") : "";
      rows[i] = id + "," + file + "," + label + "," + std::to_string(z[0]) + "," + std::to_string(z[1]) + "\n";
    }
  }
  std::string index = "candidate_id,file,label,z_first,z_last\n";
  for (const auto& r : rows)
    index += r;
  write_file(root / "index.csv", index);
  m.output(root / "index.csv");
  m.output(root / "patches");
  m.note("patch_format", "float32 little-endian, " + std::to_string(o.lhi.out_size) + "x" +
                             std::to_string(o.lhi.out_size) + " row-major");
  m.write(manifest_for_dir(o.manifest, root));
  std::cout << "wrote " << cv.size() << " LHI patches to " << root.string() << "\n";
}

struct Hs2Train {
  std::string scans, annotations, tissues, model, report, manifest;
  lfpr_lhi_params lhi{};
  lfpr_hs2_arch arch{};
  lfpr_train_config train{};
  std::uint64_t init_seed = 1;
  std::optional<std::uint64_t> split_seed;
  bool holdout = true;
  bool balance = true;
};

void run_hs2_train(const CLI::App* sub, Hs2Train o)
{
  Manifest m(sub, "hs2 train");
  m.input("scans", o.scans);
  m.input("annotations", o.annotations);
  m.input("tissues", o.tissues);
  o.train.balance_classes = o.balance ? 1 : 0;
  o.arch.input_size = o.lhi.out_size;

  const auto set = open_scans(o.scans);
  const auto paths = scan_paths(set.get());
  const auto nod = load_annotations(o.annotations), tis = load_annotations(o.tissues);
  const auto nv = items(nod.get()), tv = items(tis.get());
  const auto nb = by_scan(nv), tb = by_scan(tv);
  std::set<std::string> ids;
  for (const auto& [k, _] : nb)
    ids.insert(k);
  for (const auto& [k, _] : tb)
    ids.insert(k);

  lfpr_dataset* d = nullptr;
  check(lfpr_dataset_create(&d));
  Dataset all(d);
  for (const auto& id : ids) {
    const auto v = load_volume(scan_path(paths, id));
    auto sn = new_list(), st = new_list();
    if (const auto it = nb.find(id); it != nb.end())
      for (const auto i : it->second)
        check(lfpr_list_append(sn.get(), &nv[i]));
    if (const auto it = tb.find(id); it != tb.end())
      for (const auto i : it->second)
        check(lfpr_list_append(st.get(), &tv[i]));
    check(lfpr_dataset_add_objects(all.get(), v.get(), sn.get(), st.get(), &o.lhi));
  }

  Dataset train_set, test_set;
  const std::uint64_t split_seed = o.split_seed.value_or(o.train.seed);
  if (o.holdout) {
    lfpr_dataset *tr = nullptr, *te = nullptr;
    check(lfpr_dataset_split(all.get(), split_seed, &tr, &te));
    train_set.reset(tr);
    test_set.reset(te);
  } else {
    train_set = std::move(all);
  }

  lfpr_model* mp = nullptr;
  check(lfpr_model_create(&o.arch, o.init_seed, &mp));
  Model model(mp);
  std::vector<double> losses(static_cast<std::size_t>(std::max(o.train.epochs, 0)));
  check(lfpr_model_train(model.get(), train_set.get(), &o.train, losses.data(), losses.size()));
  check(lfpr_model_save(model.get(), o.model.c_str()));

  json r;
  const auto counts = [&](const lfpr_dataset* ds) {
    std::size_t n = 0, t = 0;
    check(lfpr_dataset_counts(ds, &n, &t));
    json c;
    c["nodules"] = n;
    c["tissues"] = t;
    c["hash"] = hex64(lfpr_dataset_hash(ds));
    return c;
  };
  double train_acc = 0, train_loss = 0;
  check(lfpr_model_evaluate(model.get(), train_set.get(), &train_acc, &train_loss));
  r["train"] = counts(train_set.get());
  r["train"]["accuracy"] = train_acc;
  r["train"]["mean_loss"] = train_loss;
  m.hash("train_patches", lfpr_dataset_hash(train_set.get()));
  if (test_set) {
    double acc = 0, loss = 0;
    check(lfpr_model_evaluate(model.get(), test_set.get(), &acc, &loss));
    r["test"] = counts(test_set.get());
    r["test"]["accuracy"] = acc;
    r["test"]["mean_loss"] = loss;
    m.hash("test_patches", lfpr_dataset_hash(test_set.get()));
  }
  r["loss_history"] = losses;
  const fs::path report = o.report.empty() ? fs::path(o.model + ".report.json") : fs::path(o.report);
  write_file(report, r.dump(2) + "\n");

  m.seed("init_seed", o.init_seed);
  m.seed("train_seed", o.train.seed);
  if (o.holdout)
    m.seed("split_seed", split_seed);
  m.output(o.model);
  m.output(report);
  m.write(manifest_for_file(o.manifest, o.model));
  std::cout << "trained on " << lfpr_dataset_size(train_set.get()) << " patches, final loss "
            << (losses.empty() ? std::string("n/a") : fixed(losses.back(), 4)) << ", train accuracy "
            << fixed(train_acc) << "\n";
  if (test_set)
    std::cout << "held-out accuracy " << fixed(r["test"]["accuracy"].get<double>()) << " on "
              << lfpr_dataset_size(test_set.get()) << " patches\n";
}

struct Hs2Predict {
  std::string model, scans, candidates, nodules, tissues, annotations, out, manifest;
  lfpr_lhi_params lhi{};
  double keep_threshold = 0.5;
};

void run_hs2_predict(const CLI::App* sub, const Hs2Predict& o)
{
  Manifest m(sub, "hs2 predict");
  m.input("model", o.model);
  m.input("scans", o.scans);
  if (o.candidates.empty() && o.nodules.empty() && o.tissues.empty())
    usage_error("hs2 predict needs --candidates or --nodules/--tissues");
  if (!o.candidates.empty() && (!o.nodules.empty() || !o.tissues.empty()))
    usage_error("--candidates cannot be combined with --nodules/--tissues");

  const auto model = load_model(o.model);
  const auto set = open_scans(o.scans);
  const auto paths = scan_paths(set.get());

  // label: -1 unknown, 0 tissue, 1 nodule
  std::vector<lfpr_nodule> cv;
  std::vector<int> labels;
  List keep_alive[3];
  if (!o.candidates.empty()) {
    m.input("candidates", o.candidates);
    keep_alive[0] = load_candidates(o.candidates);
    cv = items(keep_alive[0].get());
    labels.assign(cv.size(), -1);
    if (!o.annotations.empty()) {
      m.input("annotations", o.annotations);
      keep_alive[1] = load_annotations(o.annotations);
      const auto gt = items(keep_alive[1].get());
      for (std::size_t i = 0; i < cv.size(); ++i)
        labels[i] = inside_any(cv[i], gt) ? 1 : 0;
    }
  } else {
    if (!o.nodules.empty()) {
      m.input("nodules", o.nodules);
      keep_alive[1] = load_annotations(o.nodules);
      for (const auto& n : items(keep_alive[1].get())) {
        cv.push_back(n);
        labels.push_back(1);
      }
    }
    if (!o.tissues.empty()) {
      m.input("tissues", o.tissues);
      keep_alive[2] = load_annotations(o.tissues);
      for (const auto& n : items(keep_alive[2].get())) {
        cv.push_back(n);
        labels.push_back(0);
      }
    }
  }

  std::vector<double> p(cv.size());
  for (const auto& [scan, idx] : by_scan(cv)) {
    const auto v = load_volume(scan_path(paths, scan));
    for (const auto i : idx) {
      int z[2];
      const auto img = lhi_image(v.get(), cv[i], o.lhi, true, z);
      check(lfpr_model_predict(model.get(), img.data(), img.size(), &p[i]));
    }
  }

  std::size_t labelled = 0, correct = 0, tp = 0, fn = 0, tn = 0, fp = 0;
  std::string csv = "seriesuid,coordX,coordY,coordZ,diameter_mm,probability,p_nodule,kept,label\n";
  for (std::size_t i = 0; i < cv.size(); ++i) {
    const auto& c = cv[i];
    const bool kept = p[i] >= o.keep_threshold;
    csv += std::string(c.scan_id) + "," + num(c.center_mm[0]) + "," + num(c.center_mm[1]) + "," +
           num(c.center_mm[2]) + "," + num(c.diameter_mm) + "," + num(c.score) + "," + num(p[i]) + "," +
           (kept ? "1" : "0") + "," + (labels[i] < 0 ? "" : labels[i] ? "nodule" : "tissue") + "\n";
    if (labels[i] >= 0) {
      ++labelled;
      correct += (labels[i] == 1) == kept ? 1 : 0;
      if (labels[i] == 1)
        (kept ? tp : fn) += 1;
      else
        (kept ? fp : tn) += 1;
    }
  }
  write_file(o.out, csv);
  m.output(o.out);
  std::uint64_t mseed = 0;
  check(lfpr_model_arch(model.get(), nullptr, &mseed));
  m.seed("model_init_seed", mseed);
  if (labelled > 0) {
    json metrics;
    metrics["labelled"] = labelled;
    metrics["accuracy"] = static_cast<double>(correct) / static_cast<double>(labelled);
    double sens = 0, spec = 0;
    if (tp + fn > 0 && tn + fp > 0) {
      check(lfpr_sensitivity_specificity(tp, fn, tn, fp, &sens, &spec));
      metrics["sensitivity"] = sens;
      metrics["specificity"] = spec;
    }
    metrics["tp"] = tp;
    metrics["fn"] = fn;
    metrics["tn"] = tn;
    metrics["fp"] = fp;
    m.note("metrics", metrics);
    std::cout << "accuracy " << fixed(metrics["accuracy"].get<double>()) << " on " << labelled
              << " labelled patches (tp " << tp << ", fn " << fn << ", tn " << tn << ", fp " << fp << ")\n";
  } else {
    std::cout << "scored " << cv.size() << " candidates\n";
  }
  m.write(manifest_for_file(o.manifest, o.out));
}

std::size_t resolve_scan_count(std::size_t given, const std::string& scans_dir)
{
  if (!scans_dir.empty())
    return lfpr_scan_set_size(open_scans(scans_dir).get());
  if (given == 0)
    usage_error("pass --scan-count or --scans to set the number of scans");
  return given;
}

struct EvalFroc {
  std::string candidates, annotations, scans, out, manifest;
  std::size_t scan_count = 0;
};

void run_eval_froc(const CLI::App* sub, const EvalFroc& o)
{
  Manifest m(sub, "eval froc");
  m.input("candidates", o.candidates);
  m.input("annotations", o.annotations);
  const auto cands = load_candidates(o.candidates);
  const auto gt = load_annotations(o.annotations);
  const auto n = resolve_scan_count(o.scan_count, o.scans);
  lfpr_froc_report* r = nullptr;
  check(lfpr_froc(cands.get(), gt.get(), n, &r));
  Froc rep(r);
  const fs::path root(o.out);
  make_dirs(root);
  const auto csv = root / "froc.csv", js = root / "froc.json", dat = root / "froc.dat";
  check(lfpr_froc_write(rep.get(), csv.c_str(), js.c_str(), dat.c_str()));
  double levels[7], cpm = 0;
  check(lfpr_froc_levels(rep.get(), levels, &cpm));
  for (const auto& p : {csv, js, dat})
    m.output(p);
  m.write(manifest_for_dir(o.manifest, root));
  std::cout << "CPM " << fixed(cpm) << "\n";
  const char* names[7] = {"1/8", "1/4", "1/2", "1", "2", "4", "8"};
  for (int i = 0; i < 7; ++i)
    std::cout << "  sensitivity @ " << names[i] << " FP/scan: " << fixed(levels[i]) << "\n";
}

struct EvalFp {
  std::string before, after, annotations, out, manifest;
  double threshold = 0.0;
};

void run_eval_fp_report(const CLI::App* sub, const EvalFp& o)
{
  Manifest m(sub, "eval fp-report");
  m.input("before", o.before);
  m.input("after", o.after);
  m.input("annotations", o.annotations);
  const auto b = load_candidates(o.before), a = load_candidates(o.after);
  const auto gt = load_annotations(o.annotations);
  char* s = nullptr;
  check(lfpr_fp_reduction(b.get(), a.get(), gt.get(), o.threshold, &s));
  const std::string report = CString(s).get();
  write_file(o.out, report);
  m.output(o.out);
  m.write(manifest_for_file(o.manifest, o.out));
  std::cout << report;
}

struct EvalCpm {
  std::vector<double> levels;
  std::optional<double> reported;
  std::string out, manifest;
};

void run_eval_cpm(const CLI::App* sub, const EvalCpm& o)
{
  Manifest m(sub, "eval cpm");
  json j;
  double value = 0;
  check(lfpr_cpm(o.levels.data(), o.levels.size(), &value));
  j["levels"] = o.levels;
  j["cpm"] = value;
  std::cout << "CPM " << fixed(value) << "\n";
  if (o.reported) {
    int discrepancy = 0;
    check(lfpr_check_reported_cpm(o.levels.data(), o.levels.size(), *o.reported, &value, &discrepancy));
    j["reported"] = *o.reported;
    j["discrepancy"] = discrepancy != 0;
    if (discrepancy)
      std::cout << "discrepancy: reported " << fixed(*o.reported) << " but the levels average to " << fixed(value)
                << "\n";
    else
      std::cout << "reported " << fixed(*o.reported) << " agrees\n";
  }
  if (!o.out.empty()) {
    write_file(o.out, j.dump(2) + "\n");
    m.output(o.out);
  }
  if (!o.out.empty() || !o.manifest.empty())
    m.write(o.manifest.empty() ? manifest_for_file("", o.out) : fs::path(o.manifest));
}

struct PipelineRun {
  std::string scans, model, candidates, annotations, out, manifest;
  double min_score = 0.1, nms_iou = 0.1, keep_threshold = 0.5;
  lfpr_lhi_params lhi{};
  BlobFlags blobs;
  int jobs = 1;
};

void run_pipeline(const CLI::App* sub, const PipelineRun& o)
{
  Manifest m(sub, "pipeline run");
  m.input("scans", o.scans);
  m.input("model", o.model);
  const auto set = open_scans(o.scans);
  const auto model = load_model(o.model);
  List cands, gt;
  if (!o.candidates.empty()) {
    m.input("candidates", o.candidates);
    cands = load_candidates(o.candidates);
  }
  if (!o.annotations.empty()) {
    m.input("annotations", o.annotations);
    gt = load_annotations(o.annotations);
  }
  lfpr_pipeline_config cfg;
  lfpr_pipeline_config_default(&cfg);
  cfg.min_score = o.min_score;
  cfg.nms_iou = o.nms_iou;
  cfg.lhi = o.lhi;
  cfg.blob_threshold_hu = o.blobs.threshold_hu;
  cfg.blob_min_diameter_mm = o.blobs.min_diameter;
  cfg.blob_max_diameter_mm = o.blobs.max_diameter;
  cfg.keep_threshold = o.keep_threshold;
  cfg.jobs = o.jobs;

  char* s = nullptr;
  check(lfpr_pipeline_run(set.get(), cands.get(), gt.get(), model.get(), &cfg, o.out.c_str(), &s));
  const std::string summary = CString(s).get();
  const auto j = nlohmann::json::parse(summary);
  const fs::path root(o.out);
  for (const auto& f : j.at("files"))
    m.output(root / f.get<std::string>());
  std::uint64_t mseed = 0;
  check(lfpr_model_arch(model.get(), nullptr, &mseed));
  m.seed("model_init_seed", mseed);
  m.write(manifest_for_dir(o.manifest, root));
  std::cout << summary;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Lung nodule candidate processing, LHI false-positive reduction and FROC scoring"};
  app.name("lungfpr");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lfpr_version()));
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file with flat keys mirroring the subcommand flags; flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();

  // phantom
  auto* phantom = app.add_subcommand("phantom", "synthetic volumes with known objects")->require_subcommand(1);
  PhantomGen pg;
  auto* pgen = phantom->add_subcommand("gen", "write seeded phantom scans plus nodule/tissue CSVs");
  pgen->add_option("--out", pg.out, "output directory")->required();
  pgen->add_option("--count", pg.count, "number of scans")->capture_default_str();
  pgen->add_option("--seed", pg.seed, "generator seed")->capture_default_str();
  pgen->add_option("--prefix", pg.prefix, "scan id prefix")->capture_default_str();
  pgen->add_option("--options", pg.options, "JSON overrides for the random generator");
  pgen->add_option("--spec", pg.spec, "explicit phantom spec JSON (generates one scan)");
  add_manifest_option(pgen, pg.manifest);
  pgen->callback([&] { run_phantom_gen(pgen, pg); });

  // volume
  auto* volume = app.add_subcommand("volume", "CT volume inspection")->require_subcommand(1);
  VolumeInfo vi;
  auto* vinfo = volume->add_subcommand("info", "print geometry and HU statistics of an .mhd volume");
  vinfo->add_option("input,--input", vi.input, ".mhd file")->required();
  vinfo->add_flag("--json", vi.as_json, "print JSON");
  add_manifest_option(vinfo, vi.manifest);
  vinfo->callback([&] { run_volume_info(vinfo, vi); });
  VolumeResample vr;
  auto* vres = volume->add_subcommand("resample", "trilinear resampling to isotropic spacing");
  vres->add_option("input,--input", vr.input, ".mhd file")->required();
  vres->add_option("--out", vr.out, "output .mhd")->required();
  vres->add_option("--spacing", vr.spacing, "target spacing (mm)")->capture_default_str()->check(CLI::PositiveNumber);
  add_manifest_option(vres, vr.manifest);
  vres->callback([&] { run_volume_resample(vres, vr); });

  // candidates
  auto* cand = app.add_subcommand("candidates", "candidate list processing")->require_subcommand(1);
  CandFilter cf;
  auto* cfilter = cand->add_subcommand("filter", "drop candidates at or below a score");
  cfilter->add_option("--input", cf.input, "candidate CSV")->required();
  cfilter->add_option("--out", cf.out, "output CSV")->required();
  cfilter->add_option("--min-score", cf.min_score, "keep scores strictly above this")->capture_default_str();
  add_manifest_option(cfilter, cf.manifest);
  cfilter->callback([&] { run_candidates_filter(cfilter, cf); });

  CandNms cn;
  auto* cnms = cand->add_subcommand("nms", "per-scan 3D non-maximum suppression");
  cnms->add_option("--input", cn.input, "candidate CSV")->required();
  cnms->add_option("--scans", cn.scans, "directory of .mhd scans (voxel frames)")->required();
  cnms->add_option("--out", cn.out, "output CSV")->required();
  cnms->add_option("--nms-iou", cn.iou, "suppress overlaps above this IoU")->capture_default_str();
  add_manifest_option(cnms, cn.manifest);
  cnms->callback([&] { run_candidates_nms(cnms, cn); });

  CandDetect cd;
  auto* cdetect = cand->add_subcommand("detect", "threshold + connected-component blob candidates");
  cdetect->add_option("--scans", cd.scans, "directory of .mhd scans")->required();
  cdetect->add_option("--out", cd.out, "output CSV")->required();
  add_blob_options(cdetect, cd.blobs);
  add_manifest_option(cdetect, cd.manifest);
  cdetect->callback([&] { run_candidates_detect(cdetect, cd); });

  // lhi
  auto* lhi = app.add_subcommand("lhi", "location history images")->require_subcommand(1);
  LhiExtract le;
  auto* lextract = lhi->add_subcommand("extract", "write one LHI patch per candidate");
  lextract->add_option("--scans", le.scans, "directory of .mhd scans")->required();
  lextract->add_option("--candidates", le.candidates, "candidate CSV")->required();
  lextract->add_option("--annotations", le.annotations, "annotation CSV used to label patches");
  lextract->add_option("--out", le.out, "output directory")->required();
  lextract->add_flag("--raw", le.raw, "write raw decay values instead of [0, 1]");
  add_lhi_options(lextract, le.lhi);
  add_manifest_option(lextract, le.manifest);
  lextract->callback([&] { run_lhi_extract(lextract, le); });

  // hs2
  auto* hs2 = app.add_subcommand("hs2", "LHI classifier")->require_subcommand(1);
  Hs2Train ht;
  lfpr_hs2_arch_default(&ht.arch);
  lfpr_train_config_default(&ht.train);
  auto* htrain = hs2->add_subcommand("train", "train on labelled nodule and tissue objects");
  htrain->add_option("--scans", ht.scans, "directory of .mhd scans")->required();
  htrain->add_option("--annotations", ht.annotations, "nodule CSV (positives)")->required();
  htrain->add_option("--tissues", ht.tissues, "tissue CSV (negatives)")->required();
  htrain->add_option("--model", ht.model, "output model file")->required();
  htrain->add_option("--report", ht.report, "training report JSON (default <model>.report.json)");
  htrain->add_option("--conv1", ht.arch.conv1_filters, "first conv layer filters")->capture_default_str();
  htrain->add_option("--conv2", ht.arch.conv2_filters, "second conv layer filters")->capture_default_str();
  htrain->add_option("--fc1", ht.arch.fc_widths[0], "first FC width")->capture_default_str();
  htrain->add_option("--fc2", ht.arch.fc_widths[1], "second FC width")->capture_default_str();
  htrain->add_option("--fc3", ht.arch.fc_widths[2], "third FC width")->capture_default_str();
  htrain->add_option("--lr", ht.train.learning_rate, "learning rate")->capture_default_str();
  htrain->add_option("--lr-decay", ht.train.lr_decay, "multiplicative decay")->capture_default_str();
  htrain->add_option("--decay-every", ht.train.decay_every_epochs, "epochs between decays")->capture_default_str();
  htrain->add_option("--epochs", ht.train.epochs, "training epochs")->capture_default_str();
  htrain->add_option("--batch-size", ht.train.batch_size, "minibatch size")->capture_default_str();
  htrain->add_option("--seed", ht.train.seed, "shuffle seed")->capture_default_str();
  htrain->add_option("--init-seed", ht.init_seed, "weight initialisation seed")->capture_default_str();
  htrain->add_option("--split-seed", ht.split_seed, "train/test split seed (default: --seed)");
  htrain->add_flag("--holdout,!--no-holdout", ht.holdout, "keep a third of the patches for testing")
      ->capture_default_str();
  htrain->add_flag("--balance,!--no-balance", ht.balance, "oversample the minority class")->capture_default_str();
  add_lhi_options(htrain, ht.lhi);
  add_manifest_option(htrain, ht.manifest);
  htrain->callback([&] { run_hs2_train(htrain, ht); });

  Hs2Predict hp;
  auto* hpredict = hs2->add_subcommand("predict", "score candidates or labelled objects with a model");
  hpredict->add_option("--model", hp.model, "model file")->required();
  hpredict->add_option("--scans", hp.scans, "directory of .mhd scans")->required();
  hpredict->add_option("--candidates", hp.candidates, "candidate CSV");
  hpredict->add_option("--annotations", hp.annotations, "label --candidates by GT containment");
  hpredict->add_option("--nodules", hp.nodules, "annotation CSV of nodule objects");
  hpredict->add_option("--tissues", hp.tissues, "annotation CSV of tissue objects");
  hpredict->add_option("--out", hp.out, "predictions CSV")->required();
  hpredict->add_option("--keep-threshold", hp.keep_threshold, "p(nodule) needed to keep")->capture_default_str();
  add_lhi_options(hpredict, hp.lhi);
  add_manifest_option(hpredict, hp.manifest);
  hpredict->callback([&] { run_hs2_predict(hpredict, hp); });

  // eval
  auto* eval = app.add_subcommand("eval", "FROC / CPM scoring")->require_subcommand(1);
  EvalFroc ef;
  auto* efroc = eval->add_subcommand("froc", "FROC curve and CPM");
  efroc->add_option("--candidates", ef.candidates, "candidate CSV")->required();
  efroc->add_option("--annotations", ef.annotations, "annotation CSV")->required();
  efroc->add_option("--scan-count", ef.scan_count, "number of scans evaluated");
  efroc->add_option("--scans", ef.scans, "scan directory (sets the scan count)");
  efroc->add_option("--out", ef.out, "output directory")->required();
  add_manifest_option(efroc, ef.manifest);
  efroc->callback([&] { run_eval_froc(efroc, ef); });

  EvalFp ep;
  auto* efp = eval->add_subcommand("fp-report", "false positives before/after filtering");
  efp->add_option("--before", ep.before, "candidate CSV before filtering")->required();
  efp->add_option("--after", ep.after, "candidate CSV after filtering")->required();
  efp->add_option("--annotations", ep.annotations, "annotation CSV")->required();
  efp->add_option("--threshold", ep.threshold, "operating score threshold")->capture_default_str();
  efp->add_option("--out", ep.out, "report JSON")->required();
  add_manifest_option(efp, ep.manifest);
  efp->callback([&] { run_eval_fp_report(efp, ep); });

  EvalCpm ec;
  auto* ecpm = eval->add_subcommand("cpm", "average sensitivity over the seven FP/scan levels");
  ecpm->add_option("--levels", ec.levels, "seven sensitivities, comma separated")->required()->delimiter(',');
  ecpm->add_option("--reported", ec.reported, "published CPM to check against");
  ecpm->add_option("--out", ec.out, "result JSON");
  add_manifest_option(ecpm, ec.manifest);
  ecpm->callback([&] { run_eval_cpm(ecpm, ec); });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "end-to-end candidate filtering")->require_subcommand(1);
  PipelineRun pr;
  lfpr_lhi_params_default(&pr.lhi);
  auto* prun = pipeline->add_subcommand("run", "candidates, threshold, NMS, LHI, HS2, FROC before/after");
  prun->add_option("--scans", pr.scans, "directory of .mhd scans")->required();
  prun->add_option("--model", pr.model, "HS2 model file")->required();
  prun->add_option("--candidates", pr.candidates, "candidate CSV (default: blob detector)");
  prun->add_option("--annotations", pr.annotations, "annotation CSV (enables FROC)");
  prun->add_option("--out", pr.out, "output directory")->required();
  prun->add_option("--min-score", pr.min_score, "candidate score threshold")->capture_default_str();
  prun->add_option("--nms-iou", pr.nms_iou, "NMS IoU threshold")->capture_default_str();
  prun->add_option("--keep-threshold", pr.keep_threshold, "p(nodule) needed to keep")->capture_default_str();
  prun->add_option("--jobs", pr.jobs, "scans processed in parallel")->capture_default_str();
  add_blob_options(prun, pr.blobs);
  add_lhi_options(prun, pr.lhi);
  add_manifest_option(prun, pr.manifest);
  prun->callback([&] { run_pipeline(prun, pr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ConfigError& e) {
    std::string msg = e.what();
    if (const auto at = msg.find("INI was not able to parse "); at != std::string::npos)
      msg.replace(at, 26, "unknown key ");
    std::cerr << "lungfpr: error: config file: " << msg << "\n";
    return kExitValidation;
  } catch (const CLI::FileError& e) {
    std::cerr << "lungfpr: error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    std::cerr << "lungfpr: error: " << e.what() << " (see --help)\n";
    return kExitValidation;
  } catch (const Failure& e) {
    std::cerr << "lungfpr: error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "lungfpr: error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
