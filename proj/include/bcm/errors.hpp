// Copyright 2026 The BCM Authors.
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

#ifndef BCM_ERRORS_HPP_
#define BCM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace bcm {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int position)
      : std::runtime_error(what), position_(position) {}
  int position() const { return position_; }

 private:
  int position_;
};

// Invalid configuration or infeasible request; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage ran before the stage that produces its inputs.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, long line)
      : std::runtime_error(what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace bcm

#endif  // BCM_ERRORS_HPP_
