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

#include <stdexcept>
#include <string>

namespace lungfpr {

/// Failure categories raised by the core library. The C API maps each one
/// onto an lfpr_status code, so the numbering is part of the ABI.
enum class ErrorKind {
  InvalidArgument = 1,
  Parse,
  Size,
  Unsupported,
  DegenerateSize,
  Tiling,
  Validation,
  Frame,
  Bounds,
  Shape,
  Numeric,
  Config,
  Domain,
  Format,
  UndefinedMetric,
  Identity,
  Spec,
  Io,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
  throw Error(kind, message);
}

} // namespace lungfpr
