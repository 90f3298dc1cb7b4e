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
#include "volume_io.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lungfpr {

struct LhiParams {
  /// Decay ceiling: a pixel that just changed holds this value.
  int tau = 10;
  /// HU difference between consecutive slices that counts as a change.
  double delta_threshold = 30.0;
  int window_slices = 11;
  /// Crop side as a multiple of the candidate diameter.
  double patch_scale = 2.0;
  int out_size = 48;

  void validate() const;
};

/// Consecutive in-plane crops, slice-major, x fastest.
class SliceStack {
public:
  SliceStack(int width, int height, int slices, std::vector<std::int16_t> data);

  /// Fails with a shape error unless every slice holds width*height values.
  static SliceStack from_slices(int width, int height, const std::vector<std::vector<std::int16_t>>& slices);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int slices() const noexcept { return slices_; }
  std::int16_t at(int x, int y, int s) const noexcept
  {
    return data_[(static_cast<std::size_t>(s) * height_ + y) * width_ + x];
  }
  std::span<const std::int16_t> data() const noexcept { return data_; }

private:
  int width_, height_, slices_;
  std::vector<std::int16_t> data_;
};

/// Change indicator between slice s and its predecessor; 0 on the first slice.
int psi(const SliceStack& stack, int x, int y, int s, double delta_threshold);

/// Integer history grid (height*width, row-major) after the last slice of
/// the stack. Every value lies in [0, tau].
std::vector<int> compute_lhi(const SliceStack& stack, const LhiParams& params);

struct PatchWindow {
  int x0 = 0, y0 = 0;   // top-left voxel of the crop
  int side = 0;
  int z_center = 0;     // candidate slice
  int z_first = 0, z_last = 0; // clamped slice range actually read
};

PatchWindow patch_window(const CtVolume& volume, const NoduleCandidate& candidate, const LhiParams& params);

SliceStack extract_patch_stack(const CtVolume& volume, const NoduleCandidate& candidate, const LhiParams& params);

inline constexpr std::int16_t kPatchPadHu = -1000;

struct LocationHistoryImage {
  int size = 0;
  int tau = 1;
  std::vector<float> values; // size*size, row-major, in [0, tau]
  std::string scan_id;
  int z_first = 0, z_last = 0;

  /// values / tau; the classifier input.
  std::vector<float> normalized() const;
};

/// Half-pixel-centred bilinear resampling of a square float grid.
std::vector<float> resize_bilinear(std::span<const float> src, int src_size, int dst_size);

LocationHistoryImage lhi_for_candidate(const CtVolume& volume, const NoduleCandidate& candidate,
                                       const LhiParams& params);

/// Ratio of the principal second moments of the pixels with f > tau/2.
/// Returns NaN when fewer than two pixels qualify.
double high_f_elongation(const LocationHistoryImage& image);

struct PatchDumpEntry {
  std::string candidate_id;
  std::string label;
  std::vector<float> values;
};

/// One little-endian float32 file per entry plus index.csv
/// (candidate_id,file,label).
void write_patch_dump(const std::filesystem::path& dir, const std::vector<PatchDumpEntry>& entries);

} // namespace lungfpr
