// Text round-trip helpers shared by instance, trace, and weight files.
//
// Doubles are printed with %.17g so that files replay bit-exactly.
#ifndef TWOSCALE_IO_HPP
#define TWOSCALE_IO_HPP

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "twoscale/types.hpp"

namespace twoscale {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

inline void save_matrix_csv(std::ostream& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ",";
      out << format_double(m(i, j));
    }
    out << "\n";
  }
}

inline void save_vector_csv(std::ostream& out, const Vec& v) {
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (j > 0) out << ",";
    out << format_double(v(j));
  }
  out << "\n";
}

inline std::vector<double> parse_csv_row(const std::string& line) {
  std::vector<double> row;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
  return row;
}

inline Mat load_matrix_csv(std::istream& in, int rows, int cols) {
  Mat m(rows, cols);
  std::string line;
  for (int i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("load_matrix_csv: truncated matrix block");
    const auto row = parse_csv_row(line);
    if (static_cast<int>(row.size()) != cols)
      throw std::runtime_error("load_matrix_csv: wrong column count");
    for (int j = 0; j < cols; ++j) m(i, j) = row[j];
  }
  return m;
}

inline Vec load_vector_csv(std::istream& in, int size) {
  Mat m = load_matrix_csv(in, 1, size);
  return m.row(0).transpose();
}

}  // namespace twoscale

#endif  // TWOSCALE_IO_HPP
