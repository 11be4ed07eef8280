#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridtherm/errors.hpp"

namespace gridtherm::csv {

/// Shortest round-trippable rendering at 9 significant digits (printf %.9g);
/// the one float format used in every file this toolkit writes.
std::string format_double(double value);

/// Header-first CSV assembly with RFC-4180 quoting for cells that need it.
/// Output bytes are a pure function of the cells pushed.
class Writer {
public:
  explicit Writer(std::vector<std::string> header);

  Writer& row(const std::vector<std::string>& cells);
  Writer& row(const std::vector<double>& values);

  std::string str() const;
  void save(const std::filesystem::path& path) const;

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws when the name is absent
  double number(std::size_t row, int col) const;
  std::vector<double> numbers(const std::string& name) const;
};

/// Parses header + rows; understands quoted cells and tolerates CRLF input.
Table parse(const std::string& text, const std::string& source_name = "<string>");
Table load(const std::filesystem::path& path);

} // namespace gridtherm::csv
