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

#include "volume_io.hpp"

#include "error.hpp"
#include "text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace lungfpr {

namespace {

std::size_t voxel_count(const Index3& dims)
{
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
}

void check_geometry(const Index3& dims, const Vec3& spacing)
{
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1)
      fail(ErrorKind::InvalidArgument, "volume dimension " + std::to_string(a) + " must be >= 1");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      fail(ErrorKind::InvalidArgument, "volume spacing " + std::to_string(a) + " must be > 0");
  }
}

bool parse_bool(std::string_view v)
{
  return v == "True" || v == "true" || v == "TRUE" || v == "1";
}

std::vector<double> parse_numbers(const VolumeHeader& h, std::string_view key, std::size_t count)
{
  const std::string* raw = h.find(key);
  if (!raw)
    return {};
  const auto parts = text::split_ws(*raw);
  if (parts.size() != count)
    fail(ErrorKind::Parse, std::string(key) + " expects " + std::to_string(count) + " values, got '" + *raw + "'");
  std::vector<double> out;
  for (auto p : parts) {
    const auto v = text::parse_double(p);
    if (!v || !std::isfinite(*v))
      fail(ErrorKind::Parse, std::string(key) + " has non-numeric value '" + std::string(p) + "'");
    out.push_back(*v);
  }
  return out;
}

template <typename T>
T load_element(const std::byte* p, bool big_endian)
{
  std::array<std::byte, sizeof(T)> buf;
  std::memcpy(buf.data(), p, sizeof(T));
  const bool host_big = std::endian::native == std::endian::big;
  if (big_endian != host_big)
    std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

template <typename T>
std::int16_t to_hu(T v)
{
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v))
      fail(ErrorKind::Numeric, "non-finite voxel value in payload");
    const double r = std::round(static_cast<double>(v));
    return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
  } else {
    const long long w = static_cast<long long>(v);
    return static_cast<std::int16_t>(std::clamp<long long>(w, -32768, 32767));
  }
}

template <typename T>
void convert(std::span<const std::byte> raw, bool big_endian, std::vector<std::int16_t>& out)
{
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = to_hu(load_element<T>(raw.data() + i * sizeof(T), big_endian));
}

struct ParsedGeometry {
  Index3 dims{};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::string element_type;
  bool big_endian = false;
};

ParsedGeometry interpret_header(const VolumeHeader& h)
{
  ParsedGeometry g;
  if (const auto* obj = h.find("ObjectType"); obj && *obj != "Image")
    fail(ErrorKind::Unsupported, "ObjectType '" + *obj + "' is not Image");

  const auto* ndims = h.find("NDims");
  if (!ndims)
    fail(ErrorKind::Parse, "header is missing NDims");
  const auto nd = text::parse_int(*ndims);
  if (!nd)
    fail(ErrorKind::Parse, "NDims is not an integer: '" + *ndims + "'");
  if (*nd != 3)
    fail(ErrorKind::Unsupported, "only 3-dimensional volumes are supported (NDims = " + *ndims + ")");

  const auto* dimsize = h.find("DimSize");
  if (!dimsize)
    fail(ErrorKind::Parse, "header is missing DimSize");
  const auto dparts = text::split_ws(*dimsize);
  if (dparts.size() != 3)
    fail(ErrorKind::Parse, "DimSize expects 3 values, got '" + *dimsize + "'");
  for (int a = 0; a < 3; ++a) {
    const auto v = text::parse_int(dparts[a]);
    if (!v)
      fail(ErrorKind::Parse, "DimSize has non-integer value '" + std::string(dparts[a]) + "'");
    if (*v < 1 || *v > std::numeric_limits<int>::max())
      fail(ErrorKind::Parse, "DimSize entries must be positive, got '" + *dimsize + "'");
    g.dims[a] = static_cast<int>(*v);
  }

  auto spacing = parse_numbers(h, "ElementSpacing", 3);
  if (spacing.empty())
    spacing = parse_numbers(h, "ElementSize", 3);
  if (!spacing.empty()) {
    for (int a = 0; a < 3; ++a) {
      if (!(spacing[a] > 0.0))
        fail(ErrorKind::Parse, "ElementSpacing entries must be > 0");
      g.spacing[a] = spacing[a];
    }
  }

  for (const char* key : {"Offset", "Position", "Origin"}) {
    const auto o = parse_numbers(h, key, 3);
    if (!o.empty()) {
      g.origin = {o[0], o[1], o[2]};
      break;
    }
  }

  for (const char* key : {"TransformMatrix", "Rotation", "Orientation"}) {
    const auto m = parse_numbers(h, key, 9);
    if (m.empty())
      continue;
    for (int i = 0; i < 9; ++i) {
      const double expect = (i % 4 == 0) ? 1.0 : 0.0;
      if (std::abs(m[i] - expect) > 1e-6)
        fail(ErrorKind::Unsupported, std::string(key) + " is not the identity; oriented volumes are not supported");
    }
  }

  if (const auto* ch = h.find("ElementNumberOfChannels"); ch && text::trim(*ch) != "1")
    fail(ErrorKind::Unsupported, "multi-channel volumes are not supported");
  if (const auto* c = h.find("CompressedData"); c && parse_bool(*c))
    fail(ErrorKind::Unsupported, "compressed MetaImage payloads are not supported");

  for (const char* key : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
    if (const auto* b = h.find(key)) {
      g.big_endian = parse_bool(*b);
      break;
    }
  }

  const auto* et = h.find("ElementType");
  if (!et)
    fail(ErrorKind::Parse, "header is missing ElementType");
  if (element_width(*et) == 0)
    fail(ErrorKind::Unsupported, "unsupported ElementType '" + *et + "'");
  g.element_type = *et;
  return g;
}

std::vector<char> read_file(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in)
    fail(ErrorKind::Io, "cannot open '" + p.string() + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    fail(ErrorKind::Io, "failed reading '" + p.string() + "'");
  return data;
}

} // namespace

CtVolume::CtVolume(Index3 dims, Vec3 spacing, Vec3 origin, std::vector<std::int16_t> voxels)
  : dims_(dims), spacing_(spacing), origin_(origin), voxels_(std::move(voxels))
{
  check_geometry(dims_, spacing_);
  if (voxels_.size() != voxel_count(dims_))
    fail(ErrorKind::Size, "voxel count " + std::to_string(voxels_.size()) + " does not match dims (expected " +
                              std::to_string(voxel_count(dims_)) + ")");
}

CtVolume::CtVolume(Index3 dims, Vec3 spacing, Vec3 origin, std::int16_t fill)
  : dims_(dims), spacing_(spacing), origin_(origin)
{
  check_geometry(dims_, spacing_);
  voxels_.assign(voxel_count(dims_), fill);
}

const std::string* VolumeHeader::find(std::string_view key) const
{
  for (const auto& [k, v] : fields)
    if (k == key)
      return &v;
  return nullptr;
}

VolumeHeader parse_mhd_header(std::string_view header_text)
{
  VolumeHeader h;
  const auto ls = text::lines(header_text);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto line = text::trim(ls[i]);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || text::trim(line.substr(0, eq)).empty())
      fail(ErrorKind::Parse, "malformed header line " + std::to_string(i + 1) + ": '" + std::string(line) + "'");
    h.fields.emplace_back(std::string(text::trim(line.substr(0, eq))), std::string(text::trim(line.substr(eq + 1))));
  }
  return h;
}

std::size_t element_width(std::string_view t)
{
  if (t == "MET_CHAR" || t == "MET_UCHAR")
    return 1;
  if (t == "MET_SHORT" || t == "MET_USHORT")
    return 2;
  if (t == "MET_INT" || t == "MET_UINT" || t == "MET_FLOAT")
    return 4;
  if (t == "MET_DOUBLE")
    return 8;
  return 0;
}

CtVolume parse_mhd(std::string_view header_text, std::span<const std::byte> raw)
{
  const auto g = interpret_header(parse_mhd_header(header_text));
  const std::size_t n = voxel_count(g.dims);
  const std::size_t width = element_width(g.element_type);
  const std::size_t expected = n * width;
  if (raw.size() != expected)
    fail(ErrorKind::Size, "raw payload has " + std::to_string(raw.size()) + " bytes, expected " +
                              std::to_string(expected));

  std::vector<std::int16_t> vox(n);
  const auto& t = g.element_type;
  if (t == "MET_CHAR")
    convert<std::int8_t>(raw, g.big_endian, vox);
  else if (t == "MET_UCHAR")
    convert<std::uint8_t>(raw, g.big_endian, vox);
  else if (t == "MET_SHORT")
    convert<std::int16_t>(raw, g.big_endian, vox);
  else if (t == "MET_USHORT")
    convert<std::uint16_t>(raw, g.big_endian, vox);
  else if (t == "MET_INT")
    convert<std::int32_t>(raw, g.big_endian, vox);
  else if (t == "MET_UINT")
    convert<std::uint32_t>(raw, g.big_endian, vox);
  else if (t == "MET_FLOAT")
    convert<float>(raw, g.big_endian, vox);
  else
    convert<double>(raw, g.big_endian, vox);
  return CtVolume(g.dims, g.spacing, g.origin, std::move(vox));
}

MhdPayload write_mhd(const CtVolume& v, std::string_view raw_file_name)
{
  const auto vec = [](const auto& a) {
    return text::format_double(a[0]) + " " + text::format_double(a[1]) + " " + text::format_double(a[2]);
  };
  std::ostringstream h;
  h << "ObjectType = Image\n"
    << "NDims = 3\n"
    << "BinaryData = True\n"
    << "BinaryDataByteOrderMSB = False\n"
    << "CompressedData = False\n"
    << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
    << "Offset = " << vec(v.origin()) << "\n"
    << "CenterOfRotation = 0 0 0\n"
    << "AnatomicalOrientation = RAI\n"
    << "ElementSpacing = " << vec(v.spacing()) << "\n"
    << "DimSize = " << v.dims()[0] << " " << v.dims()[1] << " " << v.dims()[2] << "\n"
    << "ElementType = MET_SHORT\n"
    << "ElementDataFile = " << raw_file_name << "\n";

  MhdPayload out;
  out.header = h.str();
  out.raw.resize(v.size() * 2);
  const auto vox = v.voxels();
  for (std::size_t i = 0; i < vox.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(vox[i]);
    out.raw[2 * i] = static_cast<std::byte>(u & 0xffu);
    out.raw[2 * i + 1] = static_cast<std::byte>(u >> 8);
  }
  return out;
}

namespace {

struct HeaderSplit {
  std::size_t header_end = 0;
  std::string data_file;
};

// The header ends at the ElementDataFile line (MetaImage convention).
HeaderSplit split_mhd(std::string_view all, const std::filesystem::path& mhd_path)
{
  HeaderSplit h;
  h.header_end = all.size();
  std::size_t pos = 0;
  while (pos < all.size()) {
    auto nl = all.find('\n', pos);
    const std::size_t next = nl == std::string_view::npos ? all.size() : nl + 1;
    const auto line = text::trim(all.substr(pos, next - pos));
    const auto eq = line.find('=');
    if (eq != std::string_view::npos && text::trim(line.substr(0, eq)) == "ElementDataFile") {
      h.data_file = std::string(text::trim(line.substr(eq + 1)));
      h.header_end = next;
      break;
    }
    pos = next;
  }
  if (h.data_file.empty())
    fail(ErrorKind::Parse, "'" + mhd_path.string() + "' has no ElementDataFile entry");
  return h;
}

} // namespace

VolumeFrame load_mhd_frame(const std::filesystem::path& mhd_path)
{
  const auto bytes = read_file(mhd_path);
  const std::string_view all(bytes.data(), bytes.size());
  const auto split = split_mhd(all, mhd_path);
  const auto g = interpret_header(parse_mhd_header(all.substr(0, split.header_end)));
  return {g.dims, g.spacing, g.origin};
}

CtVolume load_mhd(const std::filesystem::path& mhd_path)
{
  const auto bytes = read_file(mhd_path);
  const std::string_view all(bytes.data(), bytes.size());
  const auto [header_end, data_file] = split_mhd(all, mhd_path);

  const auto header = all.substr(0, header_end);
  if (data_file == "LOCAL") {
    const auto* p = reinterpret_cast<const std::byte*>(bytes.data() + header_end);
    return parse_mhd(header, std::span<const std::byte>(p, bytes.size() - header_end));
  }
  std::filesystem::path raw_path(data_file);
  if (raw_path.is_relative())
    raw_path = mhd_path.parent_path() / raw_path;
  const auto raw = read_file(raw_path);
  return parse_mhd(header, std::as_bytes(std::span<const char>(raw)));
}

void save_mhd(const CtVolume& volume, const std::filesystem::path& mhd_path)
{
  auto raw_path = mhd_path;
  raw_path.replace_extension(".raw");
  const auto payload = write_mhd(volume, raw_path.filename().string());
  {
    std::ofstream h(mhd_path, std::ios::binary);
    if (!h)
      fail(ErrorKind::Io, "cannot write '" + mhd_path.string() + "'");
    h << payload.header;
    if (!h)
      fail(ErrorKind::Io, "failed writing '" + mhd_path.string() + "'");
  }
  std::ofstream r(raw_path, std::ios::binary);
  if (!r)
    fail(ErrorKind::Io, "cannot write '" + raw_path.string() + "'");
  r.write(reinterpret_cast<const char*>(payload.raw.data()), static_cast<std::streamsize>(payload.raw.size()));
  if (!r)
    fail(ErrorKind::Io, "failed writing '" + raw_path.string() + "'");
}

CtVolume resample_isotropic(const CtVolume& v, double target)
{
  if (!(target > 0.0) || !std::isfinite(target))
    fail(ErrorKind::InvalidArgument, "target spacing must be > 0");
  Index3 out_dims{};
  Vec3 step{};
  for (int a = 0; a < 3; ++a) {
    const double n = std::round(v.dims()[a] * v.spacing()[a] / target);
    if (n < 1.0)
      fail(ErrorKind::DegenerateSize, "target spacing " + text::format_double(target) + " collapses axis " +
                                          std::to_string(a) + " to zero voxels");
    out_dims[a] = static_cast<int>(n);
    step[a] = target / v.spacing()[a];
  }

  const auto& d = v.dims();
  // Per-axis lower index and weight, clamped to the last voxel at the far edge.
  struct Tap {
    int i0, i1;
    double w;
  };
  const auto taps = [&](int axis) {
    std::vector<Tap> t(out_dims[axis]);
    for (int o = 0; o < out_dims[axis]; ++o) {
      const double pos = std::min(o * step[axis], static_cast<double>(d[axis] - 1));
      const int i0 = static_cast<int>(std::floor(pos));
      const int i1 = std::min(i0 + 1, d[axis] - 1);
      t[o] = {i0, i1, pos - i0};
    }
    return t;
  };
  const auto tx = taps(0), ty = taps(1), tz = taps(2);

  std::vector<std::int16_t> out(static_cast<std::size_t>(out_dims[0]) * out_dims[1] * out_dims[2]);
  std::size_t k = 0;
  for (int z = 0; z < out_dims[2]; ++z)
    for (int y = 0; y < out_dims[1]; ++y)
      for (int x = 0; x < out_dims[0]; ++x) {
        const auto& a = tx[x];
        const auto& b = ty[y];
        const auto& c = tz[z];
        const auto lerp_x = [&](int yy, int zz) {
          return (1.0 - a.w) * v.at(a.i0, yy, zz) + a.w * v.at(a.i1, yy, zz);
        };
        const double v0 = (1.0 - b.w) * lerp_x(b.i0, c.i0) + b.w * lerp_x(b.i1, c.i0);
        const double v1 = (1.0 - b.w) * lerp_x(b.i0, c.i1) + b.w * lerp_x(b.i1, c.i1);
        const double val = (1.0 - c.w) * v0 + c.w * v1;
        out[k++] = static_cast<std::int16_t>(std::clamp(std::round(val), -32768.0, 32767.0));
      }
  return CtVolume(out_dims, {target, target, target}, v.origin(), std::move(out));
}

CtVolume flip_volume(const CtVolume& v, unsigned axes)
{
  const auto& d = v.dims();
  const bool fx = axes & AxisX, fy = axes & AxisY, fz = axes & AxisZ;
  std::vector<std::int16_t> out(v.size());
  std::size_t k = 0;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        out[k++] = v.at(fx ? d[0] - 1 - x : x, fy ? d[1] - 1 - y : y, fz ? d[2] - 1 - z : z);
  return CtVolume(d, v.spacing(), v.origin(), std::move(out));
}

Vec3 flip_point(const CtVolume& v, unsigned axes, const Vec3& p)
{
  Vec3 out = p;
  for (int a = 0; a < 3; ++a) {
    if (!(axes & (1u << a)))
      continue;
    const double extent = (v.dims()[a] - 1) * v.spacing()[a];
    out[a] = v.origin()[a] + extent - (p[a] - v.origin()[a]);
  }
  return out;
}

VolumeStats volume_stats(const CtVolume& v)
{
  const auto vox = v.voxels();
  const auto [mn, mx] = std::minmax_element(vox.begin(), vox.end());
  double sum = 0.0;
  for (auto x : vox)
    sum += x;
  return {*mn, *mx, sum / static_cast<double>(vox.size())};
}

} // namespace lungfpr
