#include "riot/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace riot::csv {
namespace {

std::string where(const std::string& source, std::size_t line, std::size_t column) {
  return source + ":" + std::to_string(line) + ":" + std::to_string(column);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Matrix parse_matrix(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::string_view rest(line);
    std::size_t column = 0;
    while (true) {
      ++column;
      const auto comma = rest.find(',');
      const std::string_view field = trim(rest.substr(0, comma));
      if (field.empty()) throw InvalidInput("empty field at " + where(source, line_no, column));
      const char* first = field.data();
      if (*first == '+') ++first;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
        throw InvalidInput("not a finite number '" + std::string(field) + "' at " + where(source, line_no, column));
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidInput("ragged row with " + std::to_string(row.size()) + " fields (expected " +
                         std::to_string(rows.front().size()) + ") at " + where(source, line_no, 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("no data in " + source);
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return parse_matrix(in, path.string());
}

CountMatrix read_counts(const std::filesystem::path& path) {
  const Matrix m = read_matrix(path);
  CountMatrix counts(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (v < 0.0) {
        throw InvalidInput("negative count at row " + std::to_string(i + 1) + ", column " + std::to_string(j + 1) +
                           " of " + path.string());
      }
      if (v != std::floor(v) || v > 9.0e15) {
        throw InvalidInput("non-integer count at row " + std::to_string(i + 1) + ", column " +
                           std::to_string(j + 1) + " of " + path.string());
      }
      counts(i, j) = static_cast<std::int64_t>(v);
    }
  }
  return counts;
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  write_matrix(out, m);
}

void write_vector(const std::filesystem::path& path, const Vector& v) {
  Matrix column = v;
  write_matrix(path, column);
}

}  // namespace riot::csv
