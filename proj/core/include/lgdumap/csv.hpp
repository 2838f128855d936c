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

#ifndef LGDUMAP_CSV_HPP
#define LGDUMAP_CSV_HPP

#include <fstream>
#include <string>
#include <vector>

namespace lgdumap {

// Append-only CSV writer with deterministic float formatting.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header);

  CsvWriter& field(const std::string& v);
  CsvWriter& field(const char* v) { return field(std::string(v)); }
  CsvWriter& field(double v);
  CsvWriter& field(int v);
  CsvWriter& field(long v);
  CsvWriter& field(unsigned long v);
  void end_row();

 private:
  std::ofstream out_;
  bool row_open_ = false;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

}  // namespace lgdumap

#endif  // LGDUMAP_CSV_HPP
