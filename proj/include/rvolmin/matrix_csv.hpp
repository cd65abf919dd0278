#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rvolmin/core.hpp"

namespace rvolmin {

// CSV parse failure with 1-based line/column position.
struct CsvError : std::runtime_error {
  int line;
  int column;
  CsvError(const std::string& msg, int line_, int column_)
      : std::runtime_error(msg + " (line " + std::to_string(line_) + ", column " +
                           std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
};

/// Parse a plain comma-separated numeric matrix: no header, one matrix row
/// per line. Empty trailing lines are ignored.
inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    int column = 1;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                           : comma - pos);
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || errno == ERANGE) {
        throw CsvError("invalid numeric field '" + cell + "' in " + path, lineno, column);
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
      ++column;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw CsvError("inconsistent column count in " + path, lineno, column);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CsvError("empty matrix in " + path, lineno, 1);

  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Write a string to a file atomically (temp file + rename).
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/// Serialize with 17 significant digits so read(write(m)) round-trips
/// numeric content exactly.
inline std::string matrix_to_csv(const Matrix& m) {
  std::ostringstream out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  return out.str();
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  write_file_atomic(path, matrix_to_csv(m));
}

}  // namespace rvolmin
