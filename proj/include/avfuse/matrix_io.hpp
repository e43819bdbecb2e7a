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

// AVSF binary matrices and CSV tables.
//
// AVSF layout (all little-endian):
//   bytes 0-3    magic "AVSF"
//   bytes 4-7    rows, uint32
//   bytes 8-11   cols, uint32
//   bytes 12-15  reserved, zero
//   then rows*cols IEEE-754 doubles, row-major.

#ifndef AVFUSE_MATRIX_IO_HPP_
#define AVFUSE_MATRIX_IO_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "avfuse/core.hpp"

namespace avfuse {

inline constexpr std::size_t kAvsfHeaderBytes = 16;

void write_matrix(const FeatureMatrix& m, const std::string& path);
FeatureMatrix read_matrix(const std::string& path);

/// In-memory variants used by the file functions and by tests.
std::string encode_avsf(const FeatureMatrix& m);
FeatureMatrix decode_avsf(const std::string& bytes,
                          const std::string& source = "<memory>");

/// Reads a numeric CSV. A first row containing a non-numeric cell is taken
/// as a header and its names are returned through `header` when non-null.
FeatureMatrix read_csv_matrix(const std::string& path,
                              std::vector<std::string>* header = nullptr);
FeatureMatrix parse_csv_matrix(const std::string& text,
                               std::vector<std::string>* header = nullptr);

/// Writes with 17 significant digits so values survive the round trip.
void write_csv_matrix(const FeatureMatrix& m, const std::string& path,
                      const std::vector<std::string>& header = {});
std::string format_csv_matrix(const FeatureMatrix& m,
                              const std::vector<std::string>& header = {});

/// Whole-file helpers shared by the other readers.
std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace avfuse

#endif  // AVFUSE_MATRIX_IO_HPP_
