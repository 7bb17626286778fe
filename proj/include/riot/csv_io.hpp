#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "riot/core_types.hpp"

namespace riot::csv {

/// Parses a headerless numeric CSV. Ragged rows, empty fields and
/// non-numeric tokens raise InvalidInput naming line and column (1-based).
Matrix parse_matrix(std::istream& in, const std::string& source = "<stream>");
Matrix read_matrix(const std::filesystem::path& path);

/// Like read_matrix but every entry must be a nonnegative integer.
CountMatrix read_counts(const std::filesystem::path& path);

/// Writes one row per line with 17 significant digits (lossless for double).
void write_matrix(std::ostream& out, const Matrix& m);
void write_matrix(const std::filesystem::path& path, const Matrix& m);
void write_vector(const std::filesystem::path& path, const Vector& v);

/// Shortest-round-trip-safe decimal rendering used by every numeric output.
std::string format_double(double value);

}  // namespace riot::csv
