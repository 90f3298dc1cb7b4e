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

#include "lhi.hpp"

#include "error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace lungfpr {

void LhiParams::validate() const
{
  if (tau < 1)
    fail(ErrorKind::InvalidArgument, "tau must be >= 1");
  if (!(delta_threshold > 0.0))
    fail(ErrorKind::InvalidArgument, "delta threshold must be > 0");
  if (window_slices < 1 || window_slices % 2 == 0)
    fail(ErrorKind::InvalidArgument, "window_slices must be odd and positive");
  if (!(patch_scale >= 1.0))
    fail(ErrorKind::InvalidArgument, "patch_scale must be >= 1");
  if (out_size < 1)
    fail(ErrorKind::InvalidArgument, "out_size must be >= 1");
}

SliceStack::SliceStack(int width, int height, int slices, std::vector<std::int16_t> data)
  : width_(width), height_(height), slices_(slices), data_(std::move(data))
{
  if (width < 1 || height < 1 || slices < 1)
    fail(ErrorKind::Shape, "slice stack dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height * slices)
    fail(ErrorKind::Shape, "slice stack holds " + std::to_string(data_.size()) + " values, expected " +
                               std::to_string(static_cast<std::size_t>(width) * height * slices));
}

SliceStack SliceStack::from_slices(int width, int height, const std::vector<std::vector<std::int16_t>>& slices)
{
  std::vector<std::int16_t> data;
  data.reserve(static_cast<std::size_t>(width) * height * slices.size());
  for (std::size_t s = 0; s < slices.size(); ++s) {
    if (slices[s].size() != static_cast<std::size_t>(width) * height)
      fail(ErrorKind::Shape, "slice " + std::to_string(s) + " has " + std::to_string(slices[s].size()) +
                                 " pixels, expected " + std::to_string(width * height));
    data.insert(data.end(), slices[s].begin(), slices[s].end());
  }
  return SliceStack(width, height, static_cast<int>(slices.size()), std::move(data));
}

int psi(const SliceStack& stack, int x, int y, int s, double delta_threshold)
{
  if (s <= 0)
    return 0;
  const int diff = static_cast<int>(stack.at(x, y, s)) - static_cast<int>(stack.at(x, y, s - 1));
  return std::abs(diff) > delta_threshold ? 1 : 0;
}

std::vector<int> compute_lhi(const SliceStack& stack, const LhiParams& p)
{
  p.validate();
  if (stack.slices() != p.window_slices)
    fail(ErrorKind::Shape, "stack has " + std::to_string(stack.slices()) + " slices, expected " +
                               std::to_string(p.window_slices));
  const std::size_t plane = static_cast<std::size_t>(stack.width()) * stack.height();
  const auto data = stack.data();
  std::vector<int> f(plane, 0);
  for (int s = 1; s < stack.slices(); ++s) {
    const auto* cur = data.data() + s * plane;
    const auto* prev = cur - plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const int diff = static_cast<int>(cur[i]) - static_cast<int>(prev[i]);
      f[i] = std::abs(diff) > p.delta_threshold ? p.tau : std::max(0, f[i] - 1);
    }
  }
  return f;
}

PatchWindow patch_window(const CtVolume& v, const NoduleCandidate& c, const LhiParams& p)
{
  p.validate();
  if (!(c.diameter_mm > 0.0))
    fail(ErrorKind::InvalidArgument, "candidate diameter must be > 0");
  const auto frame = v.frame();
  const Vec3 iv = frame.world_to_voxel(c.center_mm);
  const int cx = static_cast<int>(std::floor(iv[0] + 0.5));
  const int cy = static_cast<int>(std::floor(iv[1] + 0.5));
  const int cz = static_cast<int>(std::floor(iv[2] + 0.5));
  if (!v.contains(cx, cy, cz))
    fail(ErrorKind::Bounds, "candidate center (" + std::to_string(cx) + ", " + std::to_string(cy) + ", " +
                                std::to_string(cz) + ") lies outside the volume");

  // Tolerance keeps exact multiples (10 mm at 1 mm spacing) from rounding up.
  const double d_vox = std::ceil(c.diameter_mm / frame.inplane_spacing() - 1e-9);
  PatchWindow w;
  w.side = std::max(1, static_cast<int>(std::ceil(p.patch_scale * d_vox - 1e-9)));
  w.x0 = cx - w.side / 2;
  w.y0 = cy - w.side / 2;
  w.z_center = cz;
  const int half = p.window_slices / 2;
  w.z_first = std::clamp(cz - half, 0, v.dims()[2] - 1);
  w.z_last = std::clamp(cz + half, 0, v.dims()[2] - 1);
  return w;
}

SliceStack extract_patch_stack(const CtVolume& v, const NoduleCandidate& c, const LhiParams& p)
{
  const auto w = patch_window(v, c, p);
  const int half = p.window_slices / 2;
  std::vector<std::int16_t> data;
  data.reserve(static_cast<std::size_t>(w.side) * w.side * p.window_slices);
  for (int k = -half; k <= half; ++k) {
    const int z = std::clamp(w.z_center + k, 0, v.dims()[2] - 1);
    for (int y = w.y0; y < w.y0 + w.side; ++y)
      for (int x = w.x0; x < w.x0 + w.side; ++x)
        data.push_back(v.contains(x, y, z) ? v.at(x, y, z) : kPatchPadHu);
  }
  return SliceStack(w.side, w.side, p.window_slices, std::move(data));
}

std::vector<float> LocationHistoryImage::normalized() const
{
  std::vector<float> out(values.size());
  const float t = static_cast<float>(tau);
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = values[i] / t;
  return out;
}

std::vector<float> resize_bilinear(std::span<const float> src, int n, int m)
{
  if (n < 1 || m < 1 || src.size() != static_cast<std::size_t>(n) * n)
    fail(ErrorKind::Shape, "resize input is not a square grid of the stated size");
  struct Tap {
    int i0, i1;
    float w;
  };
  std::vector<Tap> taps(m);
  const double scale = static_cast<double>(n) / m;
  for (int o = 0; o < m; ++o) {
    const double pos = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
    const int i0 = static_cast<int>(std::floor(pos));
    taps[o] = {i0, std::min(i0 + 1, n - 1), static_cast<float>(pos - i0)};
  }
  std::vector<float> out(static_cast<std::size_t>(m) * m);
  for (int y = 0; y < m; ++y) {
    const auto& ty = taps[y];
    for (int x = 0; x < m; ++x) {
      const auto& tx = taps[x];
      const auto at = [&](int yy, int xx) { return src[static_cast<std::size_t>(yy) * n + xx]; };
      const float top = (1.0f - tx.w) * at(ty.i0, tx.i0) + tx.w * at(ty.i0, tx.i1);
      const float bot = (1.0f - tx.w) * at(ty.i1, tx.i0) + tx.w * at(ty.i1, tx.i1);
      out[static_cast<std::size_t>(y) * m + x] = (1.0f - ty.w) * top + ty.w * bot;
    }
  }
  return out;
}

LocationHistoryImage lhi_for_candidate(const CtVolume& v, const NoduleCandidate& c, const LhiParams& p)
{
  const auto w = patch_window(v, c, p);
  const auto stack = extract_patch_stack(v, c, p);
  const auto f = compute_lhi(stack, p);
  std::vector<float> grid(f.begin(), f.end());

  LocationHistoryImage img;
  img.size = p.out_size;
  img.tau = p.tau;
  img.values = resize_bilinear(grid, stack.width(), p.out_size);
  const float t = static_cast<float>(p.tau);
  for (auto& x : img.values)
    x = std::clamp(x, 0.0f, t);
  img.scan_id = c.scan_id;
  img.z_first = w.z_first;
  img.z_last = w.z_last;
  return img;
}

double high_f_elongation(const LocationHistoryImage& img)
{
  const float cut = img.tau / 2.0f;
  double n = 0, sx = 0, sy = 0;
  for (int y = 0; y < img.size; ++y)
    for (int x = 0; x < img.size; ++x)
      if (img.values[static_cast<std::size_t>(y) * img.size + x] > cut) {
        n += 1;
        sx += x;
        sy += y;
      }
  if (n < 2)
    return std::numeric_limits<double>::quiet_NaN();
  const double mx = sx / n, my = sy / n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (int y = 0; y < img.size; ++y)
    for (int x = 0; x < img.size; ++x)
      if (img.values[static_cast<std::size_t>(y) * img.size + x] > cut) {
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
      }
  cxx /= n;
  cyy /= n;
  cxy /= n;
  const double tr = cxx + cyy;
  const double disc = std::sqrt(std::max(0.0, (cxx - cyy) * (cxx - cyy) / 4.0 + cxy * cxy));
  const double l1 = tr / 2.0 + disc;
  const double l2 = tr / 2.0 - disc;
  if (l2 <= 1e-12)
    return std::numeric_limits<double>::infinity();
  return l1 / l2;
}

void write_patch_dump(const std::filesystem::path& dir, const std::vector<PatchDumpEntry>& entries)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
  std::string index = "candidate_id,file,label\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    char name[32];
    std::snprintf(name, sizeof(name), "patch_%06zu.f32", i);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out)
      fail(ErrorKind::Io, "cannot write '" + (dir / name).string() + "'");
    for (float v : e.values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                   static_cast<char>((bits >> 16) & 0xff), static_cast<char>(bits >> 24)};
      out.write(b, 4);
    }
    if (!out)
      fail(ErrorKind::Io, "failed writing '" + (dir / name).string() + "'");
    index += e.candidate_id + "," + name + "," + e.label + "\n";
  }
  std::ofstream idx(dir / "index.csv", std::ios::binary);
  idx << index;
  if (!idx)
    fail(ErrorKind::Io, "cannot write '" + (dir / "index.csv").string() + "'");
}

} // namespace lungfpr
