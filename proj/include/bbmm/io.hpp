#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/kernels.hpp"

namespace bbmm {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Comma-separated file with a header row; the last column is the target.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");

  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      width = detail::split_commas(line).size();
      break;
    }
  }
  if (width == 0) throw DataError("load_csv: '" + path + "' is empty");
  if (width < 2) throw DataError("load_csv: need at least one feature column and a target");

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != width) {
      throw DataError("load_csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw DataError("load_csv: line " + std::to_string(line_no) + ", column " +
                        std::to_string(c + 1) + ": '" + std::string(cell) + "' is not a number");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError("load_csv: '" + path + "' has a header but no data rows");

  const std::size_t d = width - 1;
  DenseMatrix x(rows, d);
  Vector y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = values[i * width + j];
    y[i] = values[i * width + d];
  }
  return Dataset(std::move(x), std::move(y));
}

inline void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open '" + path + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t j = 0; j < data.d(); ++j) out << 'x' << j << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < data.d(); ++j) out << data.x()(i, j) << ',';
    out << data.y()[i] << '\n';
  }
}

}  // namespace bbmm
