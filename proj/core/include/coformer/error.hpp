// Copyright 2026 The CoFormer-GSR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace coformer {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented invariant (ontology, annotations,
// configuration, checkpoint contents).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed gradient checks, diverged training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autograd tape (second backward, detached loss, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Filesystem / IO failure.
class IoError : public Error {
 public:
  using Error::Error;
};

[[noreturn]] void throw_validation(const std::string& message);
[[noreturn]] void throw_io(const std::string& message);

}  // namespace coformer
