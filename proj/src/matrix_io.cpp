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

#include "avfuse/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace avfuse {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits one CSV record. Quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

}  // namespace

std::string encode_avsf(const FeatureMatrix& m) {
  m.check_finite();
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("matrix too large for AVSF");
  }
  std::string out;
  out.reserve(kAvsfHeaderBytes + 8 * m.data().size());
  out.append("AVSF");
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u32(out, 0);
  for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

FeatureMatrix decode_avsf(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "AVSF") != 0) {
    throw BadMagicError(source + ": bad magic, expected \"AVSF\"");
  }
  if (bytes.size() < kAvsfHeaderBytes) {
    throw TruncatedError(source + ": truncated header");
  }
  const std::uint32_t rows = get_u32(bytes, 4);
  const std::uint32_t cols = get_u32(bytes, 8);
  if (cols == 0) throw FormatError(source + ": zero columns");
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  const std::uint64_t need = kAvsfHeaderBytes + 8 * count;
  if (bytes.size() < need) {
    std::ostringstream os;
    os << source << ": truncated payload, header declares " << rows << "x"
       << cols << " (" << count << " values) but only "
       << (bytes.size() - kAvsfHeaderBytes) / 8 << " present";
    throw TruncatedError(os.str());
  }
  if (bytes.size() > need) {
    throw FormatError(source + ": trailing bytes after payload");
  }
  std::vector<double> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<double>(get_u64(bytes, kAvsfHeaderBytes + 8 * i));
    if (!std::isfinite(data[i])) {
      std::ostringstream os;
      os << source << ": non-finite value at row " << i / cols << ", col "
         << i % cols;
      throw NonFiniteError(os.str());
    }
  }
  return FeatureMatrix(rows, cols, std::move(data));
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path, "read failed");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

void write_matrix(const FeatureMatrix& m, const std::string& path) {
  write_file_bytes(path, encode_avsf(m));
}

FeatureMatrix read_matrix(const std::string& path) {
  return decode_avsf(read_file_bytes(path), path);
}

FeatureMatrix parse_csv_matrix(const std::string& text,
                               std::vector<std::string>* header) {
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_record(line);
    std::vector<double> values(cells.size());
    std::size_t bad = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_double(cells[c], values[c])) {
        bad = c + 1;
        break;
      }
    }
    if (first) {
      first = false;
      cols = cells.size();
      if (bad != 0) {
        if (header != nullptr) {
          header->clear();
          for (auto& c : cells) header->emplace_back(trim(c));
        }
        continue;
      }
    }
    if (cells.size() != cols) {
      throw ParseError("ragged row " + std::to_string(line_no) + ": " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(cols),
                       line_no, cells.size());
    }
    if (bad != 0) {
      throw ParseError("non-numeric cell at row " + std::to_string(line_no) +
                           ", column " + std::to_string(bad),
                       line_no, bad);
    }
    for (std::size_t c = 0; c < values.size(); ++c) {
      if (!std::isfinite(values[c])) {
        throw ParseError("non-finite cell at row " + std::to_string(line_no) +
                             ", column " + std::to_string(c + 1),
                         line_no, c + 1);
      }
    }
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }
  if (cols == 0) cols = 1;
  return FeatureMatrix(rows, cols, std::move(data));
}

FeatureMatrix read_csv_matrix(const std::string& path,
                              std::vector<std::string>* header) {
  try {
    return parse_csv_matrix(read_file_bytes(path), header);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.row(), e.col());
  }
}

std::string format_csv_matrix(const FeatureMatrix& m,
                              const std::vector<std::string>& header) {
  std::string out;
  if (!header.empty()) {
    if (header.size() != m.cols()) {
      throw DimensionError("CSV header width does not match matrix");
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c) out.push_back(',');
      out += header[c];
    }
    out.push_back('\n');
  }
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out.push_back(',');
      int n = std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out.append(buf, static_cast<std::size_t>(n));
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv_matrix(const FeatureMatrix& m, const std::string& path,
                      const std::vector<std::string>& header) {
  m.check_finite();
  write_file_bytes(path, format_csv_matrix(m, header));
}

}  // namespace avfuse
