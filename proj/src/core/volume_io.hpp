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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lungfpr {

/// Placement of a voxel grid in world millimetres.
struct VolumeFrame {
  Index3 dims{};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{};

  Vec3 world_to_voxel(const Vec3& point_mm) const noexcept
  {
    return {(point_mm[0] - origin[0]) / spacing[0], (point_mm[1] - origin[1]) / spacing[1],
            (point_mm[2] - origin[2]) / spacing[2]};
  }
  Vec3 voxel_to_world(const Vec3& index) const noexcept
  {
    return {origin[0] + index[0] * spacing[0], origin[1] + index[1] * spacing[1], origin[2] + index[2] * spacing[2]};
  }
  double inplane_spacing() const noexcept { return 0.5 * (spacing[0] + spacing[1]); }
};

/// CT volume in Hounsfield units. Voxels are stored slice-major: x varies
/// fastest, z slowest. Immutable once built.
class CtVolume {
public:
  CtVolume(Index3 dims, Vec3 spacing, Vec3 origin, std::vector<std::int16_t> voxels);

  /// Constant-filled volume.
  CtVolume(Index3 dims, Vec3 spacing, Vec3 origin, std::int16_t fill);

  const Index3& dims() const noexcept { return dims_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const Vec3& origin() const noexcept { return origin_; }
  std::span<const std::int16_t> voxels() const noexcept { return voxels_; }
  std::size_t size() const noexcept { return voxels_.size(); }

  std::size_t index(int x, int y, int z) const noexcept
  {
    return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
  }
  std::int16_t at(int x, int y, int z) const noexcept { return voxels_[index(x, y, z)]; }

  bool contains(int x, int y, int z) const noexcept
  {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_[0] && y < dims_[1] && z < dims_[2];
  }

  VolumeFrame frame() const noexcept { return {dims_, spacing_, origin_}; }
  Vec3 world_to_voxel(const Vec3& point_mm) const noexcept { return frame().world_to_voxel(point_mm); }
  Vec3 voxel_to_world(const Vec3& index) const noexcept { return frame().voxel_to_world(index); }

  friend bool operator==(const CtVolume&, const CtVolume&) = default;

private:
  Index3 dims_;
  Vec3 spacing_;
  Vec3 origin_;
  std::vector<std::int16_t> voxels_;
};

/// Key/value view of a MetaImage header, keys in file order.
struct VolumeHeader {
  std::vector<std::pair<std::string, std::string>> fields;

  const std::string* find(std::string_view key) const;
};

VolumeHeader parse_mhd_header(std::string_view header_text);

/// Bytes per element for a MET_* type name; 0 when unsupported.
std::size_t element_width(std::string_view element_type);

CtVolume parse_mhd(std::string_view header_text, std::span<const std::byte> raw);

struct MhdPayload {
  std::string header;
  std::vector<std::byte> raw;
};

/// raw_file_name goes into ElementDataFile.
MhdPayload write_mhd(const CtVolume& volume, std::string_view raw_file_name = "volume.raw");

/// Reads `<name>.mhd` and the payload it references (relative paths resolve
/// against the header's directory; "LOCAL" reads the bytes after the header).
CtVolume load_mhd(const std::filesystem::path& mhd_path);

/// Geometry of an .mhd file without reading its payload.
VolumeFrame load_mhd_frame(const std::filesystem::path& mhd_path);

/// Writes `<stem>.mhd` plus `<stem>.raw` next to it.
void save_mhd(const CtVolume& volume, const std::filesystem::path& mhd_path);

CtVolume resample_isotropic(const CtVolume& volume, double target_spacing_mm);

/// Mirrors the volume along every axis in `axes` (bitmask of Axis).
CtVolume flip_volume(const CtVolume& volume, unsigned axes);

/// World-coordinate counterpart of flip_volume: maps a point in the
/// original volume onto the same anatomical location in the flipped one.
Vec3 flip_point(const CtVolume& volume, unsigned axes, const Vec3& point_mm);

struct VolumeStats {
  std::int16_t min = 0;
  std::int16_t max = 0;
  double mean = 0.0;
};

VolumeStats volume_stats(const CtVolume& volume);

} // namespace lungfpr
