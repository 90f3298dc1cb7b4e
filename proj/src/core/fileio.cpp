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

#include "fileio.hpp"

#include "error.hpp"

#include <fstream>
#include <iterator>

namespace lungfpr {

namespace {

template <typename Byte>
std::vector<Byte> slurp(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in)
    fail(ErrorKind::Io, "cannot open '" + p.string() + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    fail(ErrorKind::Io, "failed reading '" + p.string() + "'");
  const auto* b = reinterpret_cast<const Byte*>(data.data());
  return std::vector<Byte>(b, b + data.size());
}

void dump(const std::filesystem::path& p, const char* data, std::size_t size)
{
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorKind::Io, "cannot write '" + p.string() + "'");
  out.write(data, static_cast<std::streamsize>(size));
  if (!out)
    fail(ErrorKind::Io, "failed writing '" + p.string() + "'");
}

} // namespace

std::string read_text_file(const std::filesystem::path& path)
{
  const auto v = slurp<char>(path);
  return std::string(v.begin(), v.end());
}

std::vector<std::byte> read_binary_file(const std::filesystem::path& path)
{
  return slurp<std::byte>(path);
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
  dump(path, text.data(), text.size());
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::byte> data)
{
  dump(path, reinterpret_cast<const char*>(data.data()), data.size());
}

void ensure_directory(const std::filesystem::path& dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

} // namespace lungfpr
