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

#include "phantom.hpp"

#include "error.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lungfpr {

namespace {

using nlohmann::json;

constexpr double kMinHu = -1024.0;
constexpr double kMaxHu = 3071.0;

struct VoxelBounds {
  Index3 lo{}, hi{}; // inclusive
};

// Voxel-space description of a rendered object.
struct SphereGeom {
  Vec3 c;         // center in voxels
  double peak;    // peak radius (voxels)
  double waist;   // radius at the center slice
  double rate;
  double half_z;  // slices from center to either end
  double radius_at(double dz) const
  {
    const double a = std::abs(dz);
    return waist > peak - 1e-12 ? peak - rate * a : waist + rate * a;
  }
};

SphereGeom sphere_geom(const SphereObject& s, const PhantomSpec& spec)
{
  const VolumeFrame f{spec.dims, spec.spacing, spec.origin};
  SphereGeom g;
  g.c = f.world_to_voxel(s.center_mm);
  g.peak = s.max_diameter_mm / 2.0 / f.inplane_spacing();
  g.rate = s.rate_vox_per_slice;
  if (s.growth == Growth::Shrinking) {
    g.waist = g.peak;
    g.half_z = g.peak / g.rate;
  } else {
    g.waist = g.peak / 2.0;
    g.half_z = (g.peak - g.waist) / g.rate;
  }
  return g;
}

VoxelBounds sphere_bounds(const SphereGeom& g)
{
  VoxelBounds b;
  for (int a = 0; a < 2; ++a) {
    b.lo[a] = static_cast<int>(std::floor(g.c[a] - g.peak));
    b.hi[a] = static_cast<int>(std::ceil(g.c[a] + g.peak));
  }
  b.lo[2] = static_cast<int>(std::floor(g.c[2] - g.half_z));
  b.hi[2] = static_cast<int>(std::ceil(g.c[2] + g.half_z));
  return b;
}

struct TubeGeom {
  Vec3 start;    // voxels
  double dx, dy; // in-plane drift per slice (voxels)
  double radius; // voxels
  int slices;
};

TubeGeom tube_geom(const TubeObject& t, const PhantomSpec& spec)
{
  const VolumeFrame f{spec.dims, spec.spacing, spec.origin};
  TubeGeom g;
  g.start = f.world_to_voxel(t.start_mm);
  const double dz_mm = t.direction[2];
  g.dx = t.direction[0] / dz_mm * spec.spacing[2] / spec.spacing[0];
  g.dy = t.direction[1] / dz_mm * spec.spacing[2] / spec.spacing[1];
  g.radius = t.radius_mm / f.inplane_spacing();
  g.slices = std::max(1, static_cast<int>(std::lround(std::abs(t.length_mm) / spec.spacing[2])));
  return g;
}

VoxelBounds tube_bounds(const TubeGeom& g)
{
  const double ex = g.start[0] + g.dx * (g.slices - 1);
  const double ey = g.start[1] + g.dy * (g.slices - 1);
  VoxelBounds b;
  b.lo[0] = static_cast<int>(std::floor(std::min(g.start[0], ex) - g.radius));
  b.hi[0] = static_cast<int>(std::ceil(std::max(g.start[0], ex) + g.radius));
  b.lo[1] = static_cast<int>(std::floor(std::min(g.start[1], ey) - g.radius));
  b.hi[1] = static_cast<int>(std::ceil(std::max(g.start[1], ey) + g.radius));
  b.lo[2] = static_cast<int>(std::lround(g.start[2]));
  b.hi[2] = b.lo[2] + g.slices - 1;
  return b;
}

bool inside(const VoxelBounds& b, const Index3& dims)
{
  for (int a = 0; a < 3; ++a)
    if (b.lo[a] < 0 || b.hi[a] > dims[a] - 1)
      return false;
  return true;
}

bool separated(const VoxelBounds& a, const VoxelBounds& b, int gap)
{
  for (int k = 0; k < 3; ++k)
    if (a.hi[k] + gap < b.lo[k] || b.hi[k] + gap < a.lo[k])
      return true;
  return false;
}

const char* growth_name(Growth g)
{
  return g == Growth::Expanding ? "expanding" : "shrinking";
}

Growth growth_from(const std::string& s)
{
  if (s == "expanding")
    return Growth::Expanding;
  if (s == "shrinking")
    return Growth::Shrinking;
  fail(ErrorKind::Spec, "sphere growth must be 'expanding' or 'shrinking', got '" + s + "'");
}

template <typename A>
json arr(const A& a)
{
  return json::array({a[0], a[1], a[2]});
}

Vec3 vec3(const json& j, const char* key)
{
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    fail(ErrorKind::Spec, std::string("phantom spec field '") + key + "' must be an array of 3 numbers");
  return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

} // namespace

void PhantomSpec::validate() const
{
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1)
      fail(ErrorKind::Spec, "phantom dims must be >= 1");
    if (!(spacing[a] > 0.0))
      fail(ErrorKind::Spec, "phantom spacing must be > 0");
  }
  if (!(noise_sigma_hu >= 0.0))
    fail(ErrorKind::Spec, "noise sigma must be >= 0");
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    const auto& s = spheres[i];
    if (s.max_diameter_mm < 3.0 || s.max_diameter_mm > 30.0)
      fail(ErrorKind::Spec, "sphere " + std::to_string(i) + " diameter must be within [3, 30] mm");
    if (!(s.rate_vox_per_slice > 0.0))
      fail(ErrorKind::Spec, "sphere " + std::to_string(i) + " radius rate must be > 0");
    if (!inside(sphere_bounds(sphere_geom(s, *this)), dims))
      fail(ErrorKind::Spec, "sphere " + std::to_string(i) + " extends outside the volume");
  }
  for (std::size_t i = 0; i < tubes.size(); ++i) {
    const auto& t = tubes[i];
    if (t.direction[2] == 0.0)
      fail(ErrorKind::Spec, "tube " + std::to_string(i) + " direction needs a non-zero z component");
    if (!(t.radius_mm > 0.0) || !(t.length_mm > 0.0))
      fail(ErrorKind::Spec, "tube " + std::to_string(i) + " radius and length must be > 0");
    if (!inside(tube_bounds(tube_geom(t, *this)), dims))
      fail(ErrorKind::Spec, "tube " + std::to_string(i) + " extends outside the volume");
  }
}

std::string phantom_spec_to_json(const PhantomSpec& s)
{
  nlohmann::ordered_json j;
  j["scan_id"] = s.scan_id;
  j["dims"] = arr(s.dims);
  j["spacing"] = arr(s.spacing);
  j["origin"] = arr(s.origin);
  j["background_hu"] = s.background_hu;
  j["noise_sigma_hu"] = s.noise_sigma_hu;
  j["seed"] = s.seed;
  j["spheres"] = json::array();
  for (const auto& o : s.spheres)
    j["spheres"].push_back({{"center_mm", arr(o.center_mm)},
                            {"max_diameter_mm", o.max_diameter_mm},
                            {"growth", growth_name(o.growth)},
                            {"intensity_hu", o.intensity_hu},
                            {"rate_vox_per_slice", o.rate_vox_per_slice}});
  j["tubes"] = json::array();
  for (const auto& t : s.tubes)
    j["tubes"].push_back({{"start_mm", arr(t.start_mm)},
                          {"direction", arr(t.direction)},
                          {"radius_mm", t.radius_mm},
                          {"length_mm", t.length_mm},
                          {"intensity_hu", t.intensity_hu}});
  return j.dump(2) + "\n";
}

PhantomSpec phantom_spec_from_json(std::string_view text)
{
  PhantomSpec s;
  try {
    const json j = json::parse(text);
    s.scan_id = j.value("scan_id", s.scan_id);
    if (j.contains("dims")) {
      const auto d = vec3(j, "dims");
      s.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
    }
    if (j.contains("spacing"))
      s.spacing = vec3(j, "spacing");
    if (j.contains("origin"))
      s.origin = vec3(j, "origin");
    s.background_hu = j.value("background_hu", s.background_hu);
    s.noise_sigma_hu = j.value("noise_sigma_hu", s.noise_sigma_hu);
    s.seed = j.value("seed", s.seed);
    for (const auto& o : j.value("spheres", json::array())) {
      SphereObject sp;
      sp.center_mm = vec3(o, "center_mm");
      sp.max_diameter_mm = o.at("max_diameter_mm").get<double>();
      sp.growth = growth_from(o.value("growth", std::string("shrinking")));
      sp.intensity_hu = o.value("intensity_hu", sp.intensity_hu);
      sp.rate_vox_per_slice = o.value("rate_vox_per_slice", sp.rate_vox_per_slice);
      s.spheres.push_back(sp);
    }
    for (const auto& o : j.value("tubes", json::array())) {
      TubeObject t;
      t.start_mm = vec3(o, "start_mm");
      t.direction = vec3(o, "direction");
      t.radius_mm = o.at("radius_mm").get<double>();
      t.length_mm = o.at("length_mm").get<double>();
      t.intensity_hu = o.value("intensity_hu", t.intensity_hu);
      s.tubes.push_back(t);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Spec, std::string("invalid phantom spec JSON: ") + e.what());
  }
  return s;
}

Phantom generate_phantom(const PhantomSpec& spec)
{
  spec.validate();
  const auto& d = spec.dims;
  const std::size_t n = static_cast<std::size_t>(d[0]) * d[1] * d[2];
  std::vector<double> field(n, spec.background_hu);
  const auto idx = [&](int x, int y, int z) { return (static_cast<std::size_t>(z) * d[1] + y) * d[0] + x; };
  const VolumeFrame frame{spec.dims, spec.spacing, spec.origin};
  const double voxel_volume = spec.spacing[0] * spec.spacing[1] * spec.spacing[2];

  std::vector<GroundTruthNodule> nodules, tissues;
  for (const auto& s : spec.spheres) {
    const auto g = sphere_geom(s, spec);
    const auto b = sphere_bounds(g);
    for (int z = b.lo[2]; z <= b.hi[2]; ++z) {
      const double dz = z - g.c[2];
      if (std::abs(dz) > g.half_z + 1e-9)
        continue;
      const double r = g.radius_at(dz);
      if (r <= 0.0)
        continue;
      for (int y = b.lo[1]; y <= b.hi[1]; ++y)
        for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
          const double ex = x - g.c[0], ey = y - g.c[1];
          if (ex * ex + ey * ey <= r * r)
            field[idx(x, y, z)] = s.intensity_hu;
        }
    }
    nodules.push_back({spec.scan_id, s.center_mm, s.max_diameter_mm});
  }

  for (const auto& t : spec.tubes) {
    const auto g = tube_geom(t, spec);
    const auto b = tube_bounds(g);
    double count = 0, sx = 0, sy = 0, sz = 0;
    for (int k = 0; k < g.slices; ++k) {
      const int z = b.lo[2] + k;
      const double cx = g.start[0] + g.dx * k;
      const double cy = g.start[1] + g.dy * k;
      for (int y = b.lo[1]; y <= b.hi[1]; ++y)
        for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
          const double ex = x - cx, ey = y - cy;
          if (ex * ex + ey * ey <= g.radius * g.radius) {
            field[idx(x, y, z)] = t.intensity_hu;
            count += 1;
            sx += x;
            sy += y;
            sz += z;
          }
        }
    }
    if (count == 0)
      fail(ErrorKind::Spec, "tube renders no voxels (radius below one voxel?)");
    const double diameter = std::cbrt(6.0 * count * voxel_volume / std::numbers::pi);
    tissues.push_back({spec.scan_id, frame.voxel_to_world({sx / count, sy / count, sz / count}), diameter});
  }

  std::vector<std::int16_t> vox(n);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma_hu > 0.0 ? spec.noise_sigma_hu : 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double v = field[i];
    if (spec.noise_sigma_hu > 0.0)
      v += noise(rng);
    vox[i] = static_cast<std::int16_t>(std::clamp(std::round(v), kMinHu, kMaxHu));
  }
  return {CtVolume(spec.dims, spec.spacing, spec.origin, std::move(vox)), std::move(nodules), std::move(tissues)};
}

void RandomPhantomOptions::validate() const
{
  if (nodules_min < 0 || nodules_max < nodules_min || tubes < 0)
    fail(ErrorKind::Spec, "object counts must satisfy 0 <= nodules_min <= nodules_max, tubes >= 0");
  if (nodule_diameter_min_mm < 3.0 || nodule_diameter_max_mm > 30.0 ||
      nodule_diameter_max_mm < nodule_diameter_min_mm)
    fail(ErrorKind::Spec, "nodule diameters must lie within [3, 30] mm");
  if (!(tube_radius_min_mm > 0.0) || tube_radius_max_mm < tube_radius_min_mm)
    fail(ErrorKind::Spec, "tube radius range is invalid");
  if (!(tube_length_min_mm > 0.0) || tube_length_max_mm < tube_length_min_mm)
    fail(ErrorKind::Spec, "tube length range is invalid");
}

PhantomSpec random_phantom_spec(const RandomPhantomOptions& o, std::uint64_t seed, std::string scan_id)
{
  o.validate();
  PhantomSpec spec;
  spec.scan_id = std::move(scan_id);
  spec.dims = o.dims;
  spec.spacing = o.spacing;
  spec.background_hu = o.background_hu;
  spec.noise_sigma_hu = o.noise_sigma_hu;
  const std::uint64_t id_hash = text::fnv1a(spec.scan_id.data(), spec.scan_id.size());
  spec.seed = seed ^ (id_hash * 0x9e3779b97f4a7c15ull);
  std::mt19937_64 rng(spec.seed + 1);
  const auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const auto uint = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
  const VolumeFrame frame{spec.dims, spec.spacing, spec.origin};

  std::vector<VoxelBounds> placed;
  const auto try_place = [&](const VoxelBounds& b) {
    if (!inside(b, spec.dims))
      return false;
    for (const auto& p : placed)
      if (!separated(b, p, o.separation_vox))
        return false;
    placed.push_back(b);
    return true;
  };
  constexpr int kAttempts = 2000;

  const int n_nodules = uint(o.nodules_min, o.nodules_max);
  for (int i = 0; i < n_nodules; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
      SphereObject s;
      s.max_diameter_mm = uni(o.nodule_diameter_min_mm, o.nodule_diameter_max_mm);
      s.growth = uint(0, 1) == 0 ? Growth::Shrinking : Growth::Expanding;
      s.intensity_hu = std::round(uni(o.intensity_min_hu, o.intensity_max_hu));
      s.rate_vox_per_slice = o.sphere_rate_vox_per_slice;
      const Vec3 c{static_cast<double>(uint(0, spec.dims[0] - 1)), static_cast<double>(uint(0, spec.dims[1] - 1)),
                   static_cast<double>(uint(0, spec.dims[2] - 1))};
      s.center_mm = frame.voxel_to_world(c);
      if (try_place(sphere_bounds(sphere_geom(s, spec)))) {
        spec.spheres.push_back(s);
        ok = true;
      }
    }
    if (!ok)
      fail(ErrorKind::Spec, "could not place nodule " + std::to_string(i) + " in a " + std::to_string(o.dims[0]) +
                                "x" + std::to_string(o.dims[1]) + "x" + std::to_string(o.dims[2]) + " volume");
  }

  for (int i = 0; i < o.tubes; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
      TubeObject t;
      t.radius_mm = uni(o.tube_radius_min_mm, o.tube_radius_max_mm);
      t.length_mm = uni(o.tube_length_min_mm, o.tube_length_max_mm);
      t.intensity_hu = std::round(uni(o.intensity_min_hu, o.intensity_max_hu));
      const double angle = uni(0.0, 2.0 * std::numbers::pi);
      // Direction in mm per mm of z; drift is specified in voxels per slice.
      const double drift_mm = o.tube_drift_vox_per_slice * frame.inplane_spacing() / spec.spacing[2];
      t.direction = {drift_mm * std::cos(angle), drift_mm * std::sin(angle), 1.0};
      const Vec3 s{static_cast<double>(uint(0, spec.dims[0] - 1)), static_cast<double>(uint(0, spec.dims[1] - 1)),
                   static_cast<double>(uint(0, spec.dims[2] - 1))};
      t.start_mm = frame.voxel_to_world(s);
      if (try_place(tube_bounds(tube_geom(t, spec)))) {
        spec.tubes.push_back(t);
        ok = true;
      }
    }
    if (!ok)
      fail(ErrorKind::Spec, "could not place tube " + std::to_string(i));
  }
  return spec;
}

Hs2Dataset object_patches(const CtVolume& volume, const std::vector<GroundTruthNodule>& nodules,
                          const std::vector<GroundTruthNodule>& tissues, const LhiParams& params)
{
  Hs2Dataset ds;
  const auto add = [&](const GroundTruthNodule& g, PatchClass label, const char* tag, std::size_t i) {
    const NoduleCandidate c{g.scan_id, g.center_mm, g.diameter_mm, 1.0};
    LabeledPatch p;
    p.image = lhi_for_candidate(volume, c, params).normalized();
    p.label = label;
    p.id = g.scan_id + ":" + tag + std::to_string(i);
    ds.push_back(std::move(p));
  };
  for (std::size_t i = 0; i < nodules.size(); ++i)
    add(nodules[i], PatchClass::Nodule, "nodule", i);
  for (std::size_t i = 0; i < tissues.size(); ++i)
    add(tissues[i], PatchClass::Tissue, "tissue", i);
  return ds;
}

LabeledSplit split_dataset(Hs2Dataset ds, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::shuffle(ds.begin(), ds.end(), rng);
  const std::size_t n_train = (ds.size() * 2 + 2) / 3;
  LabeledSplit s;
  s.train.assign(std::make_move_iterator(ds.begin()), std::make_move_iterator(ds.begin() + n_train));
  s.test.assign(std::make_move_iterator(ds.begin() + n_train), std::make_move_iterator(ds.end()));
  return s;
}

LabeledSplit label_patches(const CtVolume& volume, const std::vector<GroundTruthNodule>& nodules,
                           const std::vector<GroundTruthNodule>& tissues, const LhiParams& params, std::uint64_t seed)
{
  if (nodules.empty() || tissues.empty())
    fail(ErrorKind::InvalidArgument, "labelled patches need at least one nodule and one tissue object");
  return split_dataset(object_patches(volume, nodules, tissues, params), seed);
}

} // namespace lungfpr
