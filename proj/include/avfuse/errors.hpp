// Copyright 2026 The avfuse Authors.
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

#ifndef AVFUSE_ERRORS_HPP_
#define AVFUSE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace avfuse {

/// Broad failure classes; the CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorKind { kConfig, kData, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class IoError : public DataError {
 public:
  IoError(const std::string& path, const std::string& what)
      : DataError(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class NonFiniteError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

/// CSV parse failure; row and column are 1-based positions in the file.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t col)
      : DataError(what), row_(row), col_(col) {}
  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class DegenerateFrameError : public DataError {
 public:
  DegenerateFrameError(const std::string& what, std::size_t frame)
      : DataError(what), frame_(frame) {}
  std::size_t frame() const { return frame_; }

 private:
  std::size_t frame_;
};

}  // namespace avfuse

#endif  // AVFUSE_ERRORS_HPP_
