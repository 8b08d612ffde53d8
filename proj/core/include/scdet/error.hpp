// Copyright 2026 The scdet Authors
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

namespace scdet {

// Base of every error thrown by the library. The CLI maps the subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared in a tensor.
class NumericError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ExperimentError : public Error {
 public:
  using Error::Error;
};

class CalibrationFailed : public Error {
 public:
  using Error::Error;
};

// Query budget ran out in the middle of an NES batch.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace scdet
