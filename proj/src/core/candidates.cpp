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

#include "candidates.hpp"

#include "error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace lungfpr {

namespace {

struct Columns {
  int uid = -1, x = -1, y = -1, z = -1, diameter = -1, probability = -1;
  std::size_t count = 0;
};

Columns locate_columns(std::string_view header, bool need_probability)
{
  Columns c;
  const auto names = text::split(header, ',');
  c.count = names.size();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto n = text::trim(names[i]);
    const int idx = static_cast<int>(i);
    if (n == "seriesuid")
      c.uid = idx;
    else if (n == "coordX")
      c.x = idx;
    else if (n == "coordY")
      c.y = idx;
    else if (n == "coordZ")
      c.z = idx;
    else if (n == "diameter_mm")
      c.diameter = idx;
    else if (n == "probability")
      c.probability = idx;
  }
  std::string missing;
  if (c.uid < 0)
    missing += " seriesuid";
  if (c.x < 0)
    missing += " coordX";
  if (c.y < 0)
    missing += " coordY";
  if (c.z < 0)
    missing += " coordZ";
  if (need_probability && c.probability < 0)
    missing += " probability";
  if (!need_probability && c.diameter < 0)
    missing += " diameter_mm";
  if (!missing.empty())
    fail(ErrorKind::Parse, "CSV header is missing column(s):" + missing);
  return c;
}

double field_number(const std::vector<std::string_view>& f, int col, std::size_t row, const char* name)
{
  const auto v = text::parse_double(f[col]);
  if (!v || !std::isfinite(*v))
    fail(ErrorKind::Parse, "row " + std::to_string(row) + ": " + name + " is not a number ('" +
                               std::string(text::trim(f[col])) + "')");
  return *v;
}

template <typename RowFn>
void for_each_row(std::string_view csv, bool need_probability, RowFn&& fn)
{
  const auto ls = text::lines(csv);
  std::size_t first = 0;
  while (first < ls.size() && text::trim(ls[first]).empty())
    ++first;
  if (first == ls.size())
    fail(ErrorKind::Parse, "CSV is empty (no header row)");
  const auto cols = locate_columns(ls[first], need_probability);
  std::size_t row = 0;
  for (std::size_t i = first + 1; i < ls.size(); ++i) {
    if (text::trim(ls[i]).empty())
      continue;
    ++row;
    const auto f = text::split(ls[i], ',');
    if (f.size() != cols.count)
      fail(ErrorKind::Parse, "row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields, expected " +
                                 std::to_string(cols.count));
    fn(cols, f, row);
  }
}

std::string fmt(double v)
{
  return text::format_double(v);
}

} // namespace

CsvLoadResult load_candidates_csv(std::string_view csv)
{
  CsvLoadResult out;
  bool has_diameter = true;
  for_each_row(csv, true, [&](const Columns& c, const std::vector<std::string_view>& f, std::size_t row) {
    NoduleCandidate cand;
    cand.scan_id = std::string(text::trim(f[c.uid]));
    cand.center_mm = {field_number(f, c.x, row, "coordX"), field_number(f, c.y, row, "coordY"),
                      field_number(f, c.z, row, "coordZ")};
    if (c.diameter >= 0) {
      cand.diameter_mm = field_number(f, c.diameter, row, "diameter_mm");
      if (!(cand.diameter_mm > 0.0))
        fail(ErrorKind::Validation, "row " + std::to_string(row) + ": diameter_mm must be > 0");
    } else {
      has_diameter = false;
      cand.diameter_mm = kDefaultCandidateDiameterMm;
    }
    cand.score = field_number(f, c.probability, row, "probability");
    if (cand.score < 0.0 || cand.score > 1.0)
      fail(ErrorKind::Validation, "row " + std::to_string(row) + ": probability " + fmt(cand.score) +
                                      " is outside [0, 1]");
    out.candidates.push_back(std::move(cand));
  });
  if (!has_diameter)
    out.warnings.push_back("candidate CSV has no diameter_mm column; using " + fmt(kDefaultCandidateDiameterMm) +
                           " mm for every row");
  return out;
}

std::string format_candidates_csv(const std::vector<NoduleCandidate>& cs)
{
  std::string out = "seriesuid,coordX,coordY,coordZ,diameter_mm,probability\n";
  for (const auto& c : cs)
    out += c.scan_id + "," + fmt(c.center_mm[0]) + "," + fmt(c.center_mm[1]) + "," + fmt(c.center_mm[2]) + "," +
           fmt(c.diameter_mm) + "," + fmt(c.score) + "\n";
  return out;
}

std::vector<GroundTruthNodule> load_annotations_csv(std::string_view csv)
{
  std::vector<GroundTruthNodule> out;
  for_each_row(csv, false, [&](const Columns& c, const std::vector<std::string_view>& f, std::size_t row) {
    GroundTruthNodule g;
    g.scan_id = std::string(text::trim(f[c.uid]));
    g.center_mm = {field_number(f, c.x, row, "coordX"), field_number(f, c.y, row, "coordY"),
                   field_number(f, c.z, row, "coordZ")};
    g.diameter_mm = field_number(f, c.diameter, row, "diameter_mm");
    if (!(g.diameter_mm > 0.0))
      fail(ErrorKind::Validation, "row " + std::to_string(row) + ": diameter_mm must be > 0");
    out.push_back(std::move(g));
  });
  return out;
}

std::string format_annotations_csv(const std::vector<GroundTruthNodule>& gs)
{
  std::string out = "seriesuid,coordX,coordY,coordZ,diameter_mm\n";
  for (const auto& g : gs)
    out += g.scan_id + "," + fmt(g.center_mm[0]) + "," + fmt(g.center_mm[1]) + "," + fmt(g.center_mm[2]) + "," +
           fmt(g.diameter_mm) + "\n";
  return out;
}

std::vector<NoduleCandidate> threshold_candidates(const std::vector<NoduleCandidate>& cs, double min_score)
{
  std::vector<NoduleCandidate> out;
  std::copy_if(cs.begin(), cs.end(), std::back_inserter(out), [&](const auto& c) { return c.score > min_score; });
  return out;
}

Box3 candidate_voxel_box(const NoduleCandidate& c, const VolumeFrame& frame)
{
  return {frame.world_to_voxel(c.center_mm), c.diameter_mm / frame.inplane_spacing()};
}

std::vector<NoduleCandidate> dedup_candidates(const std::vector<NoduleCandidate>& cs, const FrameLookup& frames,
                                              double iou_threshold)
{
  std::map<std::string, std::vector<std::size_t>> by_scan;
  for (std::size_t i = 0; i < cs.size(); ++i)
    by_scan[cs[i].scan_id].push_back(i);

  std::vector<NoduleCandidate> out;
  for (const auto& [scan, idx] : by_scan) {
    const auto it = frames.find(scan);
    if (it == frames.end())
      fail(ErrorKind::Frame, "no volume header for scan '" + scan + "'");
    std::vector<ScoredBox> boxes;
    boxes.reserve(idx.size());
    for (auto i : idx)
      boxes.push_back({candidate_voxel_box(cs[i], it->second), cs[i].score, scan});
    for (auto k : nms_indices(boxes, iou_threshold))
      out.push_back(cs[idx[k]]);
  }
  return out;
}

std::vector<NoduleCandidate> detect_blobs(const CtVolume& v, std::string_view scan_id, const BlobParams& p)
{
  if (!(p.min_diameter_mm < p.max_diameter_mm))
    fail(ErrorKind::InvalidArgument, "blob min diameter must be below max diameter");
  const auto& d = v.dims();
  const auto vox = v.voxels();
  const double max_intensity = volume_stats(v).max;
  const double voxel_volume = v.spacing()[0] * v.spacing()[1] * v.spacing()[2];

  std::vector<std::int32_t> label(vox.size(), 0);
  std::vector<std::size_t> stack;
  std::vector<NoduleCandidate> out;
  std::int32_t next = 0;

  const std::size_t sx = 1, sy = static_cast<std::size_t>(d[0]), sz = sy * d[1];
  for (std::size_t seed = 0; seed < vox.size(); ++seed) {
    if (label[seed] != 0 || !(vox[seed] > p.intensity_threshold_hu))
      continue;
    label[seed] = ++next;
    stack.assign(1, seed);
    std::size_t count = 0;
    double sum_i = 0.0, cx = 0.0, cy = 0.0, cz = 0.0;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % sy);
      const int y = static_cast<int>((i / sy) % d[1]);
      const int z = static_cast<int>(i / sz);
      ++count;
      sum_i += vox[i];
      cx += x;
      cy += y;
      cz += z;
      const auto visit = [&](bool inside, std::size_t j) {
        if (inside && label[j] == 0 && vox[j] > p.intensity_threshold_hu) {
          label[j] = next;
          stack.push_back(j);
        }
      };
      visit(x > 0, i - sx);
      visit(x + 1 < d[0], i + sx);
      visit(y > 0, i - sy);
      visit(y + 1 < d[1], i + sy);
      visit(z > 0, i - sz);
      visit(z + 1 < d[2], i + sz);
    }
    const double diameter = std::cbrt(6.0 * count * voxel_volume / std::numbers::pi);
    if (diameter < p.min_diameter_mm || diameter > p.max_diameter_mm)
      continue;
    NoduleCandidate c;
    c.scan_id = std::string(scan_id);
    const double n = static_cast<double>(count);
    c.center_mm = v.voxel_to_world({cx / n, cy / n, cz / n});
    c.diameter_mm = diameter;
    c.score = max_intensity > 0.0 ? std::clamp((sum_i / n) / max_intensity, 0.0, 1.0) : 0.0;
    out.push_back(std::move(c));
  }
  return out;
}

} // namespace lungfpr
