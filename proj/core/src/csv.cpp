// Copyright 2026 The lgdumap Authors
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

#include "lgdumap/csv.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lgdumap {

CsvWriter::CsvWriter(const std::string& path, const std::string& header)
    : out_(path) {
  if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  out_ << header << "\n";
}

CsvWriter& CsvWriter::field(const std::string& v) {
  if (row_open_) out_ << ",";
  out_ << v;
  row_open_ = true;
  return *this;
}

CsvWriter& CsvWriter::field(double v) {
  char buf[64];
  if (std::isinf(v)) {
    std::snprintf(buf, sizeof(buf), v > 0 ? "inf" : "-inf");
  } else if (std::isnan(v)) {
    std::snprintf(buf, sizeof(buf), "nan");
  } else {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
  }
  return field(std::string(buf));
}

CsvWriter& CsvWriter::field(int v) { return field(std::to_string(v)); }
CsvWriter& CsvWriter::field(long v) { return field(std::to_string(v)); }
CsvWriter& CsvWriter::field(unsigned long v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  out_ << "\n";
  row_open_ = false;
}

int CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

}  // namespace lgdumap
