/*
 * Copyright 2026 The imrel Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imrel {

// Malformed input record. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// No edge survived graph thresholding.
class EmptyGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Artifact header missing or carrying an unexpected version tag.
class ArtifactVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stored artifact dimensions disagree with the requested configuration.
class ShapeMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric update produced NaN or infinity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace imrel
