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

#include "error.hpp"
#include "lhi.hpp"
#include "oracles.hpp"
#include "phantom.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace lungfpr;

namespace {

SliceStack stack_from(const std::vector<std::vector<std::vector<int>>>& s)
{
  const int h = int(s[0].size()), w = int(s[0][0].size());
  std::vector<std::int16_t> data;
  for (const auto& plane : s)
    for (const auto& row : plane)
      for (int v : row)
        data.push_back(static_cast<std::int16_t>(v));
  return SliceStack(w, h, int(s.size()), std::move(data));
}

std::vector<std::vector<std::vector<int>>> random_stack(std::mt19937_64& rng, int slices, int size)
{
  std::uniform_int_distribution<int> v(-1000, 400), jump(0, 3);
  using Plane = std::vector<std::vector<int>>;
  const auto n = static_cast<std::size_t>(size);
  std::vector<Plane> s(static_cast<std::size_t>(slices), Plane(n, std::vector<int>(n)));
  for (int z = 0; z < slices; ++z)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        s[std::size_t(z)][std::size_t(y)][std::size_t(x)] =
            z > 0 && jump(rng) != 0 ? s[std::size_t(z - 1)][std::size_t(y)][std::size_t(x)] + jump(rng) * 15 : v(rng);
  return s;
}

} // namespace

TEST_CASE("psi semantics")
{
  LhiParams p;
  const auto st = stack_from({{{0, 0}}, {{0, 30}}, {{31, 30}}});
  CHECK(psi(st, 0, 0, 0, 30) == 0);
  CHECK(psi(st, 0, 0, 1, 30) == 0);  // identical
  CHECK(psi(st, 1, 0, 1, 30) == 0);  // exactly the threshold
  CHECK(psi(st, 0, 0, 2, 30) == 1);  // threshold + 1
}

TEST_CASE("compute_lhi hand examples")
{
  LhiParams p;
  p.tau = 5;
  std::vector<std::vector<std::vector<int>>> s(11, {{0}});
  CHECK(compute_lhi(stack_from(s), p) == std::vector<int>{0});
  for (std::size_t z = 2; z < 11; ++z)
    s[z][0][0] = 100; // change between slices 1 and 2 only
  CHECK(compute_lhi(stack_from(s), p) == std::vector<int>{0});
  // The same change seen two slices before the end leaves 5 - 2 = 3.
  std::vector<std::vector<std::vector<int>>> late(11, {{0}});
  for (std::size_t z = 8; z < 11; ++z)
    late[z][0][0] = 100;
  CHECK(compute_lhi(stack_from(late), p) == std::vector<int>{3});
  std::vector<std::vector<std::vector<int>>> flicker(11, {{0}});
  for (std::size_t z = 0; z < 11; ++z)
    flicker[z][0][0] = z % 2 ? 100 : 0;
  CHECK(compute_lhi(stack_from(flicker), p) == std::vector<int>{5});
}

TEST_CASE("compute_lhi rejects bad shapes")
{
  LhiParams p;
  std::vector<std::vector<std::vector<int>>> s(9, {{0}});
  CHECK_THROWS_AS(compute_lhi(stack_from(s), p), Error);
  try {
    SliceStack::from_slices(2, 2, {std::vector<std::int16_t>(4), std::vector<std::int16_t>(3)});
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("compute_lhi equals the per-pixel oracle")
{
  std::mt19937_64 rng(1);
  LhiParams p;
  for (int trial = 0; trial < 50; ++trial) {
    p.tau = 1 + int(rng() % 12);
    p.delta_threshold = double(rng() % 60) + 0.5 * double(rng() % 2);
    if (p.delta_threshold <= 0)
      p.delta_threshold = 1;
    const auto s = random_stack(rng, 11, 12);
    const auto got = compute_lhi(stack_from(s), p);
    const auto ref = oracle::lhi(s, p.tau, p.delta_threshold);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x)
        CHECK(got[std::size_t(y) * 12 + x] == ref[std::size_t(y)][std::size_t(x)]);
  }
}

TEST_CASE("lhi is local and bounded")
{
  std::mt19937_64 rng(2);
  LhiParams p;
  auto s = random_stack(rng, 11, 6);
  const auto base = compute_lhi(stack_from(s), p);
  for (int v : base) {
    CHECK(v >= 0);
    CHECK(v <= p.tau);
  }
  for (auto& plane : s)
    std::swap(plane[0][0], plane[5][5]);
  const auto swapped = compute_lhi(stack_from(s), p);
  CHECK(swapped[0] == base[35]);
  CHECK(swapped[35] == base[0]);
  for (std::size_t i = 1; i < 35; ++i)
    CHECK(swapped[i] == base[i]);
}

TEST_CASE("decay drops by min(k, f) over k quiet slices")
{
  LhiParams p;
  for (int change_at = 1; change_at <= 10; ++change_at) {
    std::vector<std::vector<std::vector<int>>> s(11, {{0}});
    for (int z = change_at; z < 11; ++z)
      s[std::size_t(z)][0][0] = 500;
    const int quiet = 10 - change_at;
    CHECK(compute_lhi(stack_from(s), p)[0] == std::max(0, p.tau - quiet));
  }
}

TEST_CASE("patch extraction geometry")
{
  std::vector<std::int16_t> data(40 * 40 * 30);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<std::int16_t>(i % 2000 - 1000);
  const CtVolume v({40, 40, 30}, {1, 1, 1}, {0, 0, 0}, data);
  LhiParams p;
  const NoduleCandidate mid{"s", {20, 20, 15}, 10.0, 0.9};
  const auto st = extract_patch_stack(v, mid, p);
  CHECK(st.width() == 20);
  CHECK(st.slices() == 11);
  const auto w = patch_window(v, mid, p);
  for (int s = 0; s < 11; ++s)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x)
        CHECK(st.at(x, y, s) == v.at(w.x0 + x, w.y0 + y, 15 - 5 + s));

  const NoduleCandidate low{"s", {20, 20, 2}, 10.0, 0.9};
  const auto lo = extract_patch_stack(v, low, p);
  CHECK(lo.slices() == 11);
  const auto wl = patch_window(v, low, p);
  CHECK(wl.z_first == 0);
  CHECK(lo.at(3, 3, 0) == lo.at(3, 3, 3)); // slices -3..0 replicate slice 0

  const NoduleCandidate corner{"s", {0, 0, 15}, 10.0, 0.9};
  CHECK(extract_patch_stack(v, corner, p).at(0, 0, 5) == kPatchPadHu);

  try {
    extract_patch_stack(v, {"s", {100, 0, 0}, 5, 0.5}, p);
    FAIL("expected a bounds error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Bounds);
  }
}

TEST_CASE("lhi_for_candidate basics")
{
  const CtVolume flat({40, 40, 30}, {1, 1, 1}, {0, 0, 0}, std::int16_t{-700});
  const auto img = lhi_for_candidate(flat, {"s", {20, 20, 15}, 8.0, 0.5}, {});
  CHECK(img.size == 48);
  CHECK(img.values.size() == 48u * 48u);
  for (float x : img.values)
    CHECK(x == 0.0f);

  std::mt19937_64 rng(3);
  std::vector<float> g(48 * 48);
  for (auto& x : g)
    x = float(rng() % 11);
  const auto same = resize_bilinear(g, 48, 48);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(std::fabs(same[i] - g[i]) <= 1e-6);
}

TEST_CASE("sphere histories are rounder than tube histories")
{
  LhiParams p;
  std::vector<double> sphere_e, tube_e;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    RandomPhantomOptions o;
    o.dims = {96, 96, 64};
    o.noise_sigma_hu = 0;
    const auto spec = random_phantom_spec(o, seed, "e" + std::to_string(seed));
    const auto ph = generate_phantom(spec);
    for (const auto& n : ph.nodules)
      sphere_e.push_back(high_f_elongation(lhi_for_candidate(ph.volume, {n.scan_id, n.center_mm, n.diameter_mm, 1}, p)));
    for (const auto& t : ph.tissues)
      tube_e.push_back(high_f_elongation(lhi_for_candidate(ph.volume, {t.scan_id, t.center_mm, t.diameter_mm, 1}, p)));
  }
  const auto median = [](std::vector<double> v) {
    std::erase_if(v, [](double x) { return std::isnan(x); });
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(sphere_e) < median(tube_e));
}

TEST_CASE("patch dump layout")
{
  const auto dir = std::filesystem::temp_directory_path() / "lungfpr_dump_test";
  std::filesystem::remove_all(dir);
  write_patch_dump(dir, {{"c0", "nodule", std::vector<float>(4, 1.5f)}, {"c1", "tissue", std::vector<float>(4, 0.0f)}});
  CHECK(std::filesystem::file_size(dir / "patch_000000.f32") == 16);
  std::ifstream idx(dir / "index.csv");
  std::string header, row;
  std::getline(idx, header);
  std::getline(idx, row);
  CHECK(header == "candidate_id,file,label");
  CHECK(row == "c0,patch_000000.f32,nodule");
  std::filesystem::remove_all(dir);
}
