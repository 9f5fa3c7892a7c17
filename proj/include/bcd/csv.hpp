#pragma once

// Comma-separated numeric I/O: dataset ingestion with optional header
// auto-detection and column centering, plus matrix export.

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "bcd/types.hpp"

namespace bcd {

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has no header row
  Eigen::MatrixXd values;
};

struct CsvOptions {
  bool center = true;  // subtract column means on ingest
};

// Parses comma-separated numeric text.  The first row becomes the header when
// at least one of its cells fails to parse as a number.  Throws
// std::runtime_error naming 1-based row/column coordinates for ragged rows or
// non-numeric cells, and for empty input.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// Reads a CSV file into a Dataset (source = path, truth empty).
Dataset ingest_csv(const std::string& path, const CsvOptions& options = {});

// Writes values in full round-trip precision; header row emitted when given.
void write_csv(std::ostream& os, const Eigen::MatrixXd& values,
               const std::vector<std::string>& header = {});
void write_csv_file(const std::string& path, const Eigen::MatrixXd& values,
                    const std::vector<std::string>& header = {});

}  // namespace bcd
