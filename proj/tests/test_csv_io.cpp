#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "riot/csv_io.hpp"

using namespace riot;
namespace fs = std::filesystem;

namespace {

std::string parse_error(const std::string& text) {
  std::istringstream in(text);
  try {
    csv::parse_matrix(in, "m.csv");
  } catch (const InvalidInput& e) {
    return e.what();
  }
  return {};
}

fs::path temp_file(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "riot_csv_test";
  fs::create_directories(dir);
  const fs::path path = dir / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("parse plain numeric CSV") {
  std::istringstream in("1, 2.5,-3\n4,5e-3, +6\r\n\n");
  const Matrix m = csv::parse_matrix(in);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 3);
  CHECK(m(0, 1) == 2.5);
  CHECK(m(0, 2) == -3.0);
  CHECK(m(1, 1) == 5e-3);
  CHECK(m(1, 2) == 6.0);
}

TEST_CASE("malformed CSV names line and column") {
  CHECK(parse_error("1,2\n3,,4\n") == "empty field at m.csv:2:2");
  CHECK(parse_error("1,2\n3,x\n") == "not a finite number 'x' at m.csv:2:2");
  CHECK(parse_error("1,nan\n") == "not a finite number 'nan' at m.csv:1:2");
  CHECK(parse_error("1,2\n3,4,5\n") == "ragged row with 3 fields (expected 2) at m.csv:2:1");
  CHECK(parse_error("\n\n") == "no data in m.csv");
}

TEST_CASE("counts must be nonnegative integers") {
  CHECK(csv::read_counts(temp_file("ok.csv", "1,2\n0,3\n"))(1, 1) == 3);
  const fs::path neg = temp_file("neg.csv", "1,2\n0,-3\n");
  try {
    csv::read_counts(neg);
    FAIL("expected an error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()) == "negative count at row 2, column 2 of " + neg.string());
  }
  CHECK_THROWS_WITH_AS(csv::read_counts(temp_file("frac.csv", "1.5\n")),
                       doctest::Contains("non-integer count at row 1, column 1"), InvalidInput);
  CHECK_THROWS_AS(csv::read_matrix("/nonexistent/riot.csv"), InvalidInput);
}

TEST_CASE("write then read is lossless") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = oracle::gaussian_matrix(4, 5, rng, std::pow(10.0, trial % 7 - 3));
    m(0, 0) = 1.0 / 3.0;
    std::stringstream buf;
    csv::write_matrix(buf, m);
    const Matrix back = csv::parse_matrix(buf);
    CHECK(back == m);
  }
  CHECK(csv::format_double(0.1) == "0.10000000000000001");
  CHECK(csv::format_double(2.0) == "2");
}
