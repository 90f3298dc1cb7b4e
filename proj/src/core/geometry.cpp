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

#include "geometry.hpp"

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace lungfpr {

void AnchorSet::validate() const
{
  if (sides.empty())
    fail(ErrorKind::InvalidArgument, "anchor set is empty");
  for (std::size_t i = 0; i < sides.size(); ++i) {
    if (!(sides[i] > 0.0))
      fail(ErrorKind::InvalidArgument, "anchor sides must be > 0");
    if (i > 0 && !(sides[i] > sides[i - 1]))
      fail(ErrorKind::InvalidArgument, "anchor sides must be strictly increasing");
  }
}

double iou3(const Box3& a, const Box3& b) noexcept
{
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(a.center[k] - a.side / 2, b.center[k] - b.side / 2);
    const double hi = std::min(a.center[k] + a.side / 2, b.center[k] + b.side / 2);
    if (hi <= lo)
      return 0.0;
    inter *= hi - lo;
  }
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0)
    return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms_indices(const std::vector<ScoredBox>& c, double iou_threshold)
{
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
    fail(ErrorKind::InvalidArgument, "NMS IoU threshold must be in [0, 1]");
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (c[i].score != c[j].score)
      return c[i].score > c[j].score;
    const auto& a = c[i].box.center;
    const auto& b = c[j].box.center;
    return std::tie(a[2], a[1], a[0]) < std::tie(b[2], b[1], b[0]);
  });

  std::vector<std::size_t> kept;
  for (auto i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](std::size_t k) { return iou3(c[i].box, c[k].box) > iou_threshold; });
    if (!suppressed)
      kept.push_back(i);
  }
  return kept;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& candidates, double iou_threshold)
{
  std::vector<ScoredBox> out;
  for (auto i : nms_indices(candidates, iou_threshold))
    out.push_back(candidates[i]);
  return out;
}

std::vector<SampleLabel> assign_samples(const std::vector<Box3>& proposals, const std::vector<Box3>& gt,
                                        const SampleThresholds& th)
{
  std::vector<SampleLabel> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) {
    double best = 0.0;
    for (const auto& g : gt)
      best = std::max(best, iou3(p, g));
    if (best < th.negative_below)
      out.push_back(SampleLabel::Negative);
    else if (best > th.positive_above)
      out.push_back(SampleLabel::Positive);
    else
      out.push_back(SampleLabel::Ignored);
  }
  return out;
}

std::vector<int> tile_axis(int dim, const TilingOptions& o)
{
  if (o.window < 1)
    fail(ErrorKind::InvalidArgument, "window must be >= 1");
  if (o.min_overlap < 0 || o.min_overlap >= o.window)
    fail(ErrorKind::InvalidArgument, "min_overlap must be in [0, window)");
  if (dim < 1)
    fail(ErrorKind::InvalidArgument, "dimension must be >= 1");
  if (dim < o.window) {
    if (!o.allow_padding)
      fail(ErrorKind::Tiling, "dimension " + std::to_string(dim) + " is smaller than the window " +
                                  std::to_string(o.window) + " and padding is disabled");
    return {0};
  }
  const int stride = o.window - o.min_overlap;
  std::vector<int> origins;
  for (int s = 0; s + o.window < dim; s += stride)
    origins.push_back(s);
  const int last = dim - o.window;
  if (origins.empty() || origins.back() != last)
    origins.push_back(last);
  return origins;
}

std::vector<Index3> tile_volume(const Index3& dims, const TilingOptions& opts)
{
  const auto xs = tile_axis(dims[0], opts);
  const auto ys = tile_axis(dims[1], opts);
  const auto zs = tile_axis(dims[2], opts);
  std::vector<Index3> out;
  out.reserve(xs.size() * ys.size() * zs.size());
  for (int z : zs)
    for (int y : ys)
      for (int x : xs)
        out.push_back({x, y, z});
  return out;
}

std::vector<Box3> generate_anchors(const AnchorSet& anchors, int stride, const Index3& dims)
{
  anchors.validate();
  if (stride < 1)
    fail(ErrorKind::InvalidArgument, "feature stride must be >= 1");
  Index3 cells{};
  for (int a = 0; a < 3; ++a)
    cells[a] = (dims[a] + stride - 1) / stride;
  std::vector<Box3> out;
  out.reserve(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2] * anchors.sides.size());
  for (int z = 0; z < cells[2]; ++z)
    for (int y = 0; y < cells[1]; ++y)
      for (int x = 0; x < cells[0]; ++x)
        for (double side : anchors.sides)
          out.push_back({{(x + 0.5) * stride, (y + 0.5) * stride, (z + 0.5) * stride}, side});
  return out;
}

} // namespace lungfpr
