// Copyright 2026 The mpstat-twin Authors
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

namespace mpstat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Raised when a command needs an idle device but a protocol is executing.
class BusyError : public Error {
 public:
  using Error::Error;
};

class AbortError : public Error {
 public:
  using Error::Error;
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public Error {
 public:
  using Error::Error;
};

/// Protocol CSV syntax error, 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& reason)
      : Error("line " + std::to_string(line) + ": " + reason), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Protocol semantic error on a given step index.
class ValidationError : public Error {
 public:
  ValidationError(int step, const std::string& reason)
      : Error("step " + std::to_string(step) + ": " + reason), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace mpstat
