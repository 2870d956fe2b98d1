#pragma once
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace skpo {

// Formats doubles with enough digits to round-trip, so repeated runs of the
// same binary produce byte-identical files.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Every CSV starts with a schema-version row, then a column-header row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema,
            const std::vector<std::string>& columns)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open output file: " + path);
    out_ << "schema_version," << schema << "\n";
    write_row_strings(columns);
  }

  void write_row_strings(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  // Convenience for mixed rows built up cell by cell.
  CsvWriter& cell(const std::string& s) { row_.push_back(s); return *this; }
  CsvWriter& cell(double v) { row_.push_back(fmt_double(v)); return *this; }
  CsvWriter& cell(long long v) { row_.push_back(std::to_string(v)); return *this; }
  CsvWriter& cell(int v) { row_.push_back(std::to_string(v)); return *this; }
  CsvWriter& cell(size_t v) { row_.push_back(std::to_string(v)); return *this; }
  void end_row() {
    write_row_strings(row_);
    row_.clear();
  }

 private:
  std::ofstream out_;
  std::vector<std::string> row_;
};

}  // namespace skpo
