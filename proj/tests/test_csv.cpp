#include <filesystem>
#include <string>

#include "doctest.h"

#include "gridtherm/csv.hpp"
#include "gridtherm/errors.hpp"

using namespace gridtherm;

TEST_SUITE("csv") {

TEST_CASE("doubles print with nine significant digits") {
  CHECK(csv::format_double(0.1) == "0.1");
  CHECK(csv::format_double(1.0) == "1");
  CHECK(csv::format_double(1.0 / 3.0) == "0.333333333");
  CHECK(csv::format_double(-2.5e-7) == "-2.5e-07");
  CHECK(csv::format_double(314.910376123) == "314.910376");
  CHECK(csv::format_double(0.0) == "0");
}

TEST_CASE("writer and parser round-trip plain tables") {
  csv::Writer writer({"alpha", "beta"});
  writer.row({1.0, 2.5});
  writer.row({-3.0, 1.0 / 3.0});
  const std::string text = writer.str();
  CHECK(text == "alpha,beta\n1,2.5\n-3,0.333333333\n");

  const csv::Table table = csv::parse(text, "inline");
  REQUIRE(table.rows.size() == 2);
  CHECK(table.column("alpha") == 0);
  CHECK(table.column("beta") == 1);
  CHECK(table.number(0, 1) == 2.5);
  CHECK(table.number(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  const auto betas = table.numbers("beta");
  REQUIRE(betas.size() == 2);
  CHECK(betas[0] == 2.5);
}

TEST_CASE("cells with separators survive quoting") {
  csv::Writer writer({"name", "note"});
  writer.row(std::vector<std::string>{"a,b", "say \"hi\""});
  writer.row(std::vector<std::string>{"line\nbreak", "plain"});
  const csv::Table table = csv::parse(writer.str(), "inline");
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0][0] == "a,b");
  CHECK(table.rows[0][1] == "say \"hi\"");
  CHECK(table.rows[1][0] == "line\nbreak");
  CHECK(table.rows[1][1] == "plain");
}

TEST_CASE("malformed input names the offending position") {
  CHECK_THROWS_WITH_AS(csv::parse("a,b\n1\n", "bad.csv"), doctest::Contains("bad.csv"),
                       ValidationError);
  CHECK_THROWS_AS(csv::parse("", "empty.csv"), ValidationError);

  const csv::Table table = csv::parse("x\nnope\n", "inline");
  CHECK_THROWS_AS(table.number(0, 0), ValidationError);
  CHECK_THROWS_AS(table.column("missing"), ValidationError);
}

TEST_CASE("arity of appended rows is enforced") {
  csv::Writer writer({"one", "two"});
  CHECK_THROWS_AS(writer.row(std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(writer.row(std::vector<std::string>{"a", "b", "c"}), ValidationError);
}

TEST_CASE("files round-trip through save and load") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "gridtherm-csv-roundtrip.csv";
  csv::Writer writer({"v"});
  writer.row(std::vector<double>{42.0});
  writer.save(path);
  const csv::Table table = csv::load(path);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.number(0, 0) == 42.0);
  fs::remove(path);

  CHECK_THROWS_AS(csv::load(fs::temp_directory_path() / "gridtherm-does-not-exist.csv"),
                  Error);
}

} // TEST_SUITE
