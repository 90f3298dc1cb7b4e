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

// Drives the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lungfpr/lungfpr.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("lungfpr_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

lfpr_nodule nodule(const char* scan, double x, double y, double z, double d, double score)
{
  lfpr_nodule n{};
  n.scan_id = scan;
  n.center_mm[0] = x;
  n.center_mm[1] = y;
  n.center_mm[2] = z;
  n.diameter_mm = d;
  n.score = score;
  return n;
}

} // namespace

TEST_CASE("version and status names")
{
  CHECK(std::string(lfpr_version()) == "0.1.0");
  CHECK(std::string(lfpr_status_name(LFPR_ERR_IO)) == "I/O error");
  CHECK(std::string(lfpr_status_name(LFPR_OK)) == "ok");
}

TEST_CASE("errors surface as status codes with a message")
{
  lfpr_volume* v = nullptr;
  CHECK(lfpr_volume_load("/nonexistent/file.mhd", &v) == LFPR_ERR_IO);
  CHECK(v == nullptr);
  CHECK(std::strlen(lfpr_last_error()) > 0);

  CHECK(lfpr_volume_load(nullptr, &v) == LFPR_ERR_INVALID_ARGUMENT);
  CHECK(lfpr_list_create(nullptr) == LFPR_ERR_INVALID_ARGUMENT);

  double out = 0;
  const double six[6] = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(lfpr_cpm(six, 6, &out) != LFPR_OK);
}

TEST_CASE("CPM arithmetic and reported-value check")
{
  const double dou[7] = {0.659, 0.745, 0.819, 0.865, 0.906, 0.933, 0.946};
  double cpm = 0;
  REQUIRE(lfpr_cpm(dou, 7, &cpm) == LFPR_OK);
  CHECK(std::fabs(cpm - 0.839) <= 5e-4);

  const double hs2[7] = {0.904, 0.914, 0.933, 0.957, 0.971, 0.971, 0.971};
  double computed = 0;
  int flag = 0;
  REQUIRE(lfpr_check_reported_cpm(hs2, 7, 0.952, &computed, &flag) == LFPR_OK);
  CHECK(std::fabs(computed - 0.946) <= 5e-4);
  CHECK(flag == 1);
}

TEST_CASE("sensitivity and specificity")
{
  double se = 0, sp = 0;
  REQUIRE(lfpr_sensitivity_specificity(8, 2, 90, 10, &se, &sp) == LFPR_OK);
  CHECK(se == doctest::Approx(0.8));
  CHECK(sp == doctest::Approx(0.9));
  CHECK(lfpr_sensitivity_specificity(0, 0, 5, 5, &se, &sp) == LFPR_ERR_UNDEFINED_METRIC);
}

TEST_CASE("lists round-trip through CSV")
{
  const auto dir = scratch("lists");
  lfpr_nodule_list* l = nullptr;
  REQUIRE(lfpr_list_create(&l) == LFPR_OK);
  auto a = nodule("s1", 1.25, -3.5, 10.0, 6.0, 0.75);
  auto b = nodule("s2", 0.1, 0.2, 0.3, 5.0, 0.05);
  REQUIRE(lfpr_list_append(l, &a) == LFPR_OK);
  REQUIRE(lfpr_list_append(l, &b) == LFPR_OK);
  CHECK(lfpr_list_size(l) == 2);

  const auto path = (dir / "c.csv").string();
  REQUIRE(lfpr_candidates_save_csv(l, path.c_str()) == LFPR_OK);
  lfpr_nodule_list* back = nullptr;
  char* warnings = nullptr;
  REQUIRE(lfpr_candidates_load_csv(path.c_str(), &back, &warnings) == LFPR_OK);
  CHECK(std::string(warnings).empty());
  lfpr_string_free(warnings);
  REQUIRE(lfpr_list_size(back) == 2);
  lfpr_nodule got{};
  REQUIRE(lfpr_list_get(back, 0, &got) == LFPR_OK);
  CHECK(std::string(got.scan_id) == "s1");
  CHECK(got.center_mm[1] == -3.5);
  CHECK(got.score == 0.75);
  CHECK(lfpr_list_get(back, 2, &got) == LFPR_ERR_BOUNDS);

  lfpr_nodule_list* kept = nullptr;
  REQUIRE(lfpr_candidates_threshold(back, 0.1, &kept) == LFPR_OK);
  CHECK(lfpr_list_size(kept) == 1);

  lfpr_list_free(kept);
  lfpr_list_free(back);
  lfpr_list_free(l);
}

TEST_CASE("perfect detector scores CPM 1")
{
  lfpr_nodule_list *gt = nullptr, *cands = nullptr;
  REQUIRE(lfpr_list_create(&gt) == LFPR_OK);
  REQUIRE(lfpr_list_create(&cands) == LFPR_OK);
  for (int i = 0; i < 3; ++i) {
    const auto g = nodule("scan", 10.0 * i, 0, 0, 8.0, 0);
    const auto c = nodule("scan", 10.0 * i, 0, 0, 8.0, 0.9);
    REQUIRE(lfpr_list_append(gt, &g) == LFPR_OK);
    REQUIRE(lfpr_list_append(cands, &c) == LFPR_OK);
  }
  lfpr_froc_report* r = nullptr;
  REQUIRE(lfpr_froc(cands, gt, 1, &r) == LFPR_OK);
  double levels[7], cpm = 0;
  REQUIRE(lfpr_froc_levels(r, levels, &cpm) == LFPR_OK);
  CHECK(cpm == 1.0);
  CHECK(lfpr_froc_point_count(r) >= 1);

  const auto dir = scratch("froc");
  const auto json = (dir / "f.json").string();
  REQUIRE(lfpr_froc_write(r, nullptr, json.c_str(), nullptr) == LFPR_OK);
  CHECK(fs::exists(json));
  CHECK(!fs::exists(dir / "f.csv"));

  char* report = nullptr;
  REQUIRE(lfpr_fp_reduction(cands, cands, gt, 0.0, &report) == LFPR_OK);
  CHECK(std::string(report).find("\"fp_before\"") != std::string::npos);
  lfpr_string_free(report);

  lfpr_froc_free(r);
  lfpr_list_free(cands);
  lfpr_list_free(gt);
}

TEST_CASE("LHI of a slice stack")
{
  lfpr_lhi_params p;
  lfpr_lhi_params_default(&p);
  // One pixel jumps by 100 HU three slices before the end, the rest is flat.
  const int w = 4, h = 3, s = p.window_slices;
  std::vector<int16_t> stack(static_cast<std::size_t>(w * h * s), -800);
  for (int z = s - 3; z < s; ++z)
    stack[static_cast<std::size_t>(z * w * h + 1 * w + 2)] = -700;
  std::vector<int> f(static_cast<std::size_t>(w * h));
  REQUIRE(lfpr_lhi_from_stack(stack.data(), w, h, s, &p, f.data(), f.size()) == LFPR_OK);
  // decays from tau over the last two slices
  CHECK(f[static_cast<std::size_t>(1 * w + 2)] == p.tau - 2);
  CHECK(f[0] == 0);
  CHECK(lfpr_lhi_from_stack(stack.data(), w, h, s, &p, f.data(), 3) == LFPR_ERR_SIZE);
}

TEST_CASE("phantom, blobs, LHI, model and pipeline")
{
  const auto dir = scratch("pipeline");
  char* spec = nullptr;
  const char* options = R"({"dims": [64, 64, 40], "nodules_min": 1, "nodules_max": 1, "tubes": 1,
                            "nodule_diameter_min_mm": 8, "nodule_diameter_max_mm": 8})";
  REQUIRE(lfpr_phantom_random_spec(options, 5, "ph0", &spec) == LFPR_OK);
  lfpr_volume* v = nullptr;
  lfpr_nodule_list *nod = nullptr, *tis = nullptr;
  REQUIRE(lfpr_phantom_generate(spec, &v, &nod, &tis) == LFPR_OK);
  lfpr_string_free(spec);
  CHECK(lfpr_list_size(nod) == 1);
  CHECK(lfpr_list_size(tis) == 1);

  int dims[3];
  REQUIRE(lfpr_volume_info(v, dims, nullptr, nullptr) == LFPR_OK);
  CHECK(dims[0] == 64);
  CHECK(dims[2] == 40);

  lfpr_nodule_list* blobs = nullptr;
  REQUIRE(lfpr_detect_blobs(v, "ph0", -400, 3, 30, &blobs) == LFPR_OK);
  CHECK(lfpr_list_size(blobs) == 2);

  lfpr_lhi_params p;
  lfpr_lhi_params_default(&p);
  p.out_size = 16;
  lfpr_nodule n{};
  REQUIRE(lfpr_list_get(nod, 0, &n) == LFPR_OK);
  std::vector<float> img(16 * 16);
  int zr[2];
  REQUIRE(lfpr_lhi_compute(v, &n, &p, 1, img.data(), img.size(), zr) == LFPR_OK);
  CHECK(zr[1] - zr[0] == p.window_slices - 1);
  for (float x : img) {
    CHECK(x >= 0.0f);
    CHECK(x <= 1.0f);
  }

  lfpr_hs2_arch arch;
  lfpr_hs2_arch_default(&arch);
  arch.input_size = 16;
  arch.conv1_filters = 3;
  arch.conv2_filters = 4;
  arch.fc_widths[0] = 16;
  arch.fc_widths[1] = 8;
  arch.fc_widths[2] = 4;
  lfpr_model* m = nullptr;
  REQUIRE(lfpr_model_create(&arch, 3, &m) == LFPR_OK);

  lfpr_dataset* d = nullptr;
  REQUIRE(lfpr_dataset_create(&d) == LFPR_OK);
  REQUIRE(lfpr_dataset_add_objects(d, v, nod, tis, &p) == LFPR_OK);
  std::size_t nn = 0, nt = 0;
  REQUIRE(lfpr_dataset_counts(d, &nn, &nt) == LFPR_OK);
  CHECK(nn == 1);
  CHECK(nt == 1);
  CHECK(lfpr_dataset_add(d, img.data(), img.size(), 7, "bad") == LFPR_ERR_INVALID_ARGUMENT);

  lfpr_train_config tc;
  lfpr_train_config_default(&tc);
  tc.epochs = 2;
  tc.batch_size = 2;
  double losses[2] = {0, 0};
  REQUIRE(lfpr_model_train(m, d, &tc, losses, 2) == LFPR_OK);
  CHECK(std::isfinite(losses[1]));

  double p1 = 0, p2 = 0;
  REQUIRE(lfpr_model_predict(m, img.data(), img.size(), &p1) == LFPR_OK);
  const auto model_path = (dir / "m.bin").string();
  REQUIRE(lfpr_model_save(m, model_path.c_str()) == LFPR_OK);
  lfpr_model* m2 = nullptr;
  REQUIRE(lfpr_model_load(model_path.c_str(), &m2) == LFPR_OK);
  REQUIRE(lfpr_model_predict(m2, img.data(), img.size(), &p2) == LFPR_OK);
  CHECK(p1 == p2);
  CHECK(lfpr_model_predict(m2, img.data(), 10, &p2) != LFPR_OK);

  fs::create_directories(dir / "scans");
  const auto mhd = (dir / "scans" / "ph0.mhd").string();
  REQUIRE(lfpr_volume_save(v, mhd.c_str()) == LFPR_OK);
  lfpr_scan_set* set = nullptr;
  REQUIRE(lfpr_scan_set_open_dir((dir / "scans").c_str(), &set) == LFPR_OK);
  CHECK(lfpr_scan_set_size(set) == 1);
  CHECK(std::string(lfpr_scan_set_id(set, 0)) == "ph0");
  CHECK(lfpr_scan_set_id(set, 1) == nullptr);

  lfpr_pipeline_config cfg;
  lfpr_pipeline_config_default(&cfg);
  cfg.lhi = p;
  char* summary = nullptr;
  const auto out = (dir / "out").string();
  REQUIRE(lfpr_pipeline_run(set, nullptr, nod, m2, &cfg, out.c_str(), &summary) == LFPR_OK);
  CHECK(std::string(summary).find("\"candidates_raw\": 2") != std::string::npos);
  lfpr_string_free(summary);
  CHECK(fs::exists(dir / "out" / "fp_report.json"));
  CHECK(fs::exists(dir / "out" / "froc_after.csv"));

  cfg.lhi.out_size = 48;
  CHECK(lfpr_pipeline_run(set, nullptr, nod, m2, &cfg, out.c_str(), nullptr) == LFPR_ERR_CONFIG);

  lfpr_scan_set_free(set);
  lfpr_model_free(m2);
  lfpr_model_free(m);
  lfpr_dataset_free(d);
  lfpr_list_free(blobs);
  lfpr_list_free(tis);
  lfpr_list_free(nod);
  lfpr_volume_free(v);
}
