#pragma once

// CSV reading and writing for panels, adjacency matrices and covariates.

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pnar/error.hpp"

namespace pnar::io {

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Eigen::MatrixXd values;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

}  // namespace detail

/// Reads a numeric CSV. A first row containing a non-numeric field is taken as a header.
inline CsvTable parse_csv(std::istream& in, const std::string& source = "<csv>") {
  std::vector<std::vector<double>> rows;
  CsvTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size() && numeric; ++c) numeric = detail::parse_number(cells[c], row[c]);
    if (!numeric) {
      if (rows.empty() && table.header.empty()) {
        table.header = cells;
        continue;
      }
      for (std::size_t c = 0; c < cells.size(); ++c) {
        double v = 0.0;
        if (!detail::parse_number(cells[c], v))
          throw ValidationError(source + ": line " + std::to_string(lineno) + ", column " + std::to_string(c + 1) +
                                ": '" + cells[c] + "' is not a number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                            " fields, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(source + ": no numeric rows");
  if (!table.header.empty() && table.header.size() != rows.front().size())
    throw ValidationError(source + ": header has " + std::to_string(table.header.size()) + " fields but rows have " +
                          std::to_string(rows.front().size()));
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) table.values(r, c) = rows[r][c];
  return table;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

/// Shortest decimal form that reads back to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::ostringstream os;
    os << static_cast<long long>(v);
    return os.str();
  }
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// T x N panel with header node_1..node_N from an N x T count matrix.
inline void write_panel_csv(std::ostream& out, const Eigen::MatrixXd& counts) {
  for (Eigen::Index i = 0; i < counts.rows(); ++i) out << (i ? "," : "") << "node_" << i + 1;
  out << '\n';
  for (Eigen::Index t = 0; t < counts.cols(); ++t) {
    for (Eigen::Index i = 0; i < counts.rows(); ++i) out << (i ? "," : "") << format_number(counts(i, t));
    out << '\n';
  }
}

inline void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_number(m(r, c));
    out << '\n';
  }
}

}  // namespace pnar::io
