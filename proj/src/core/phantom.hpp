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

#pragma once

#include "candidates.hpp"
#include "hs2.hpp"
#include "lhi.hpp"
#include "volume_io.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lungfpr {

enum class Growth { Expanding, Shrinking };

/// Nodule-like object. Its in-plane radius varies linearly with the slice
/// distance |dz| from the center: a shrinking sphere peaks at the center
/// slice and narrows by `rate` voxels per slice; an expanding one has a waist
/// of half the peak radius at the center and widens by `rate` per slice up to
/// the peak radius.
struct SphereObject {
  Vec3 center_mm{};
  double max_diameter_mm = 10.0;
  Growth growth = Growth::Shrinking;
  double intensity_hu = 60.0;
  double rate_vox_per_slice = 0.8;
};

/// Tissue-like object: a constant-radius disk whose center drifts linearly
/// from slice to slice along `direction` (which must have a z component).
struct TubeObject {
  Vec3 start_mm{};
  Vec3 direction{1.5, 0.0, 1.0};
  double radius_mm = 3.0;
  double length_mm = 16.0; // extent along z
  double intensity_hu = 60.0;
};

struct PhantomSpec {
  std::string scan_id = "phantom";
  Index3 dims{64, 64, 48};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  double background_hu = -900.0;
  double noise_sigma_hu = 20.0;
  std::vector<SphereObject> spheres;
  std::vector<TubeObject> tubes;
  std::uint64_t seed = 1;

  void validate() const;
};

std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(std::string_view json_text);

struct Phantom {
  CtVolume volume;
  std::vector<GroundTruthNodule> nodules;
  /// One box per tube: rendered centroid and equivalent-sphere diameter.
  std::vector<GroundTruthNodule> tissues;
};

Phantom generate_phantom(const PhantomSpec& spec);

struct RandomPhantomOptions {
  Index3 dims{128, 128, 80};
  Vec3 spacing{1.0, 1.0, 1.0};
  int nodules_min = 2;
  int nodules_max = 3;
  int tubes = 5;
  double nodule_diameter_min_mm = 6.0;
  double nodule_diameter_max_mm = 16.0;
  double tube_radius_min_mm = 2.0;
  double tube_radius_max_mm = 4.0;
  double tube_length_min_mm = 12.0;
  double tube_length_max_mm = 20.0;
  double tube_drift_vox_per_slice = 1.5;
  double sphere_rate_vox_per_slice = 0.8;
  double intensity_min_hu = 40.0;
  double intensity_max_hu = 100.0;
  double background_hu = -900.0;
  double noise_sigma_hu = 20.0;
  int separation_vox = 4;

  void validate() const;
};

/// Places non-touching objects at integer voxel positions, fully inside the
/// grid. Deterministic in (options, seed, scan_id).
PhantomSpec random_phantom_spec(const RandomPhantomOptions& options, std::uint64_t seed, std::string scan_id);

struct LabeledSplit {
  Hs2Dataset train;
  Hs2Dataset test;
};

/// One normalized LHI per planted object (nodules labelled Nodule, tissues
/// Tissue), shuffled with `seed` and split 2:1 into train/test.
LabeledSplit label_patches(const CtVolume& volume, const std::vector<GroundTruthNodule>& nodules,
                           const std::vector<GroundTruthNodule>& tissues, const LhiParams& params,
                           std::uint64_t seed);

/// Unsplit variant: dataset in object order (nodules first).
Hs2Dataset object_patches(const CtVolume& volume, const std::vector<GroundTruthNodule>& nodules,
                          const std::vector<GroundTruthNodule>& tissues, const LhiParams& params);

/// Seeded shuffle + 2:1 split of an existing dataset.
LabeledSplit split_dataset(Hs2Dataset dataset, std::uint64_t seed);

} // namespace lungfpr
