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

#include "types.hpp"

#include <string>
#include <vector>

namespace lungfpr {

/// Axis-aligned cube: the detector's [x, y, z, d] box. Center and side
/// share one frame (voxels or mm); mixing frames is the caller's bug.
struct Box3 {
  Vec3 center{};
  double side = 1.0;

  double volume() const noexcept { return side * side * side; }
  friend bool operator==(const Box3&, const Box3&) = default;
};

struct ScoredBox {
  Box3 box;
  double score = 0.0;
  std::string scan_id;
};

/// Anchor cube edge lengths in voxels.
struct AnchorSet {
  std::vector<double> sides{3, 5, 10, 15, 20, 25, 30};

  void validate() const;
};

enum class SampleLabel { Negative, Ignored, Positive };

struct SampleThresholds {
  double negative_below = 0.02;
  double positive_above = 0.4;
};

double iou3(const Box3& a, const Box3& b) noexcept;

inline constexpr double kDefaultNmsIou = 0.1;

/// Greedy suppression. Boxes are visited by descending score (equal scores:
/// lower (z, y, x) center first); a box is dropped when its IoU with any
/// kept box exceeds the threshold. Returns indices into `candidates` in
/// visiting order.
std::vector<std::size_t> nms_indices(const std::vector<ScoredBox>& candidates, double iou_threshold);

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& candidates, double iou_threshold);

std::vector<SampleLabel> assign_samples(const std::vector<Box3>& proposals, const std::vector<Box3>& ground_truth,
                                        const SampleThresholds& thresholds = {});

struct TilingOptions {
  int window = 96;
  int min_overlap = 32;
  /// When set, an axis shorter than the window gets one window at 0 that
  /// reaches past the end (the caller pads); otherwise that is an error.
  bool allow_padding = false;
};

std::vector<int> tile_axis(int dim, const TilingOptions& opts);
std::vector<Index3> tile_volume(const Index3& dims, const TilingOptions& opts = {});

std::vector<Box3> generate_anchors(const AnchorSet& anchors, int feature_stride, const Index3& dims);

} // namespace lungfpr
