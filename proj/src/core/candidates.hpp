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

#include "geometry.hpp"
#include "types.hpp"
#include "volume_io.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lungfpr {

/// Detector output in world millimetres.
struct NoduleCandidate {
  std::string scan_id;
  Vec3 center_mm{};
  double diameter_mm = 5.0;
  double score = 0.0;

  friend bool operator==(const NoduleCandidate&, const NoduleCandidate&) = default;
};

struct GroundTruthNodule {
  std::string scan_id;
  Vec3 center_mm{};
  double diameter_mm = 0.0;

  friend bool operator==(const GroundTruthNodule&, const GroundTruthNodule&) = default;
};

inline constexpr double kDefaultCandidateDiameterMm = 5.0;
inline constexpr double kDefaultMinScore = 0.1;

struct CsvLoadResult {
  std::vector<NoduleCandidate> candidates;
  std::vector<std::string> warnings;
};

/// Header: seriesuid,coordX,coordY,coordZ[,diameter_mm],probability. Columns
/// are located by name; a missing diameter column falls back to 5 mm.
CsvLoadResult load_candidates_csv(std::string_view text);
std::string format_candidates_csv(const std::vector<NoduleCandidate>& candidates);

std::vector<GroundTruthNodule> load_annotations_csv(std::string_view text);
std::string format_annotations_csv(const std::vector<GroundTruthNodule>& nodules);

/// Keeps candidates with score strictly above min_score.
std::vector<NoduleCandidate> threshold_candidates(const std::vector<NoduleCandidate>& candidates,
                                                  double min_score = kDefaultMinScore);

using FrameLookup = std::map<std::string, VolumeFrame, std::less<>>;

/// Cube box of a candidate in the voxel grid of `frame`. The side is the
/// diameter over the mean in-plane spacing.
Box3 candidate_voxel_box(const NoduleCandidate& c, const VolumeFrame& frame);

/// Per-scan NMS in the voxel frame. Survivors come out grouped by scan (in
/// scan-id order), each group by descending score.
std::vector<NoduleCandidate> dedup_candidates(const std::vector<NoduleCandidate>& candidates,
                                              const FrameLookup& frames, double iou_threshold = kDefaultNmsIou);

struct BlobParams {
  double intensity_threshold_hu = -400.0;
  double min_diameter_mm = 3.0;
  double max_diameter_mm = 30.0;
};

/// Threshold + 6-connected components. Each component yields one candidate
/// at its centroid with the equivalent-sphere diameter; the score is the
/// component mean intensity over the volume maximum, clamped to [0, 1].
std::vector<NoduleCandidate> detect_blobs(const CtVolume& volume, std::string_view scan_id, const BlobParams& params);

} // namespace lungfpr
