/*
 * Copyright 2026 The dmogpm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace dmo {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable name used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define DMO_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

DMO_DEFINE_ERROR(DegenerateConfiguration);
DMO_DEFINE_ERROR(BranchCut);
DMO_DEFINE_ERROR(DomainMismatch);
DMO_DEFINE_ERROR(EmptySelection);
DMO_DEFINE_ERROR(RankDeficient);
DMO_DEFINE_ERROR(InvalidParams);
DMO_DEFINE_ERROR(EmptyMesh);
DMO_DEFINE_ERROR(UnsupportedFeature);
DMO_DEFINE_ERROR(ChecksumMismatch);
DMO_DEFINE_ERROR(VersionMismatch);
DMO_DEFINE_ERROR(IoError);

#undef DMO_DEFINE_ERROR

/// Malformed input file. `position` is a 1-based line number for text
/// formats and a byte offset for binary ones.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error("ParseError", message + " (at " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace dmo
