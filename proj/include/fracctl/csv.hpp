#pragma once

// Small CSV helpers. Numbers are written with 17 significant digits so that
// a write/read round trip reproduces every double exactly.

#include <fracctl/frac_kernel.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fracctl::csv {

inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// One row per node: t, then the columns of `values` (rows of the matrix).
inline void write_nodal(std::ostream& os, const TimeGrid& grid, const Mat& values,
                        const std::string& prefix) {
  os << 't';
  for (Index i = 0; i < values.rows(); ++i) os << ',' << prefix << i;
  os << '\n';
  for (Index j = 0; j < values.cols(); ++j) {
    os << num(grid.node(static_cast<int>(j)));
    for (Index i = 0; i < values.rows(); ++i) os << ',' << num(values(i, j));
    os << '\n';
  }
}

/// Inverse of write_nodal: returns the value columns (without t) as rows x nodes.
inline Mat read_nodal(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv: empty file");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("csv: bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::invalid_argument("csv: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() < 2) throw std::invalid_argument("csv: no data");
  Mat out(static_cast<Index>(rows.front().size()) - 1, static_cast<Index>(rows.size()));
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) out(i, j) = rows[j][i + 1];
  }
  return out;
}

inline Mat read_nodal_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  return read_nodal(in);
}

}  // namespace fracctl::csv
