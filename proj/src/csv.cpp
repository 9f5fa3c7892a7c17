#include "bcd/csv.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace bcd {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_number(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno == 0;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    rows.push_back(split_row(line));
  }
  if (rows.empty()) throw std::runtime_error("csv: input contains no data");

  const std::size_t cols = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != cols)
      throw std::runtime_error("csv: ragged row " + std::to_string(r + 1) + " has " +
                               std::to_string(rows[r].size()) + " cells, expected " +
                               std::to_string(cols));

  CsvTable table;
  std::size_t first_data = 0;
  double ignored;
  for (const std::string& cell : rows.front()) {
    if (!parse_number(cell, ignored)) {  // header row detected
      for (const std::string& h : rows.front()) table.header.push_back(trim(h));
      first_data = 1;
      break;
    }
  }
  if (first_data == rows.size()) throw std::runtime_error("csv: header row but no data rows");

  const std::size_t n = rows.size() - first_data;
  table.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!parse_number(rows[r + first_data][c], v))
        throw std::runtime_error("csv: non-numeric cell at row " +
                                 std::to_string(r + first_data + 1) + ", column " +
                                 std::to_string(c + 1) + ": '" +
                                 trim(rows[r + first_data][c]) + "'");
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  return read_csv(in);
}

Dataset ingest_csv(const std::string& path, const CsvOptions& options) {
  CsvTable table = read_csv_file(path);
  Dataset ds;
  ds.x = std::move(table.values);
  ds.source = path;
  if (options.center) {
    const Eigen::RowVectorXd means = ds.x.colwise().mean();
    ds.x.rowwise() -= means;
    ds.centered = true;
  }
  return ds;
}

void write_csv(std::ostream& os, const Eigen::MatrixXd& values,
               const std::vector<std::string>& header) {
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != values.cols())
      throw std::invalid_argument("csv: header width does not match value columns");
    for (std::size_t c = 0; c < header.size(); ++c)
      os << (c ? "," : "") << header[c];
    os << '\n';
  }
  std::ostringstream cell;
  cell.precision(17);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      cell.str({});
      cell << values(r, c);
      os << (c ? "," : "") << cell.str();
    }
    os << '\n';
  }
}

void write_csv_file(const std::string& path, const Eigen::MatrixXd& values,
                    const std::vector<std::string>& header) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("csv: cannot open " + path + " for writing");
  write_csv(os, values, header);
  if (!os) throw std::runtime_error("csv: write failed for " + path);
}

}  // namespace bcd
