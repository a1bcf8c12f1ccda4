// Copyright 2026 The lid-crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace lid {

// Base class for every error raised by the library. Callers that only care
// about "something went wrong" catch this; the CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed RIFF/WAVE data. The message names the offending chunk.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Well-formed container carrying an encoding we do not handle.
class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

// Tensor or image dimensions that do not fit an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or schema violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with datasets and manifests (missing labels, unreadable files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Image or container with the wrong dimensions, bit depth or layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training (non-finite loss and the like).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lid
