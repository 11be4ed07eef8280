#include "gridtherm/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gridtherm::csv {

namespace {

bool needs_quoting(const std::string& cell) {
  return cell.find_first_of(",\"\n\r") != std::string::npos;
}

std::string escape(const std::string& cell) {
  if (!needs_quoting(cell)) return cell;
  std::string quoted = "\"";
  for (const char c : cell) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void append_line(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += ',';
    out += escape(cells[i]);
  }
  out += '\n';
}

} // namespace

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.9g", value);
  return buffer;
}

Writer::Writer(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw ValidationError("csv: header must not be empty");
}

Writer& Writer::row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) {
    std::ostringstream msg;
    msg << "csv: row has " << cells.size() << " cells, header has " << header_.size();
    throw ValidationError(msg.str());
  }
  rows_.push_back(cells);
  return *this;
}

Writer& Writer::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (const double value : values) cells.push_back(format_double(value));
  return row(cells);
}

std::string Writer::str() const {
  std::string out;
  append_line(out, header_);
  for (const auto& cells : rows_) append_line(out, cells);
  return out;
}

void Writer::save(const std::filesystem::path& path) const {
  std::ofstream stream(path, std::ios::binary);
  if (!stream) throw Error("csv: cannot open " + path.string() + " for writing");
  const std::string text = str();
  stream.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!stream) throw Error("csv: write to " + path.string() + " failed");
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw ValidationError("csv: no column named '" + name + "'");
}

double Table::number(std::size_t row, int col) const {
  const std::string& cell = rows.at(row).at(static_cast<std::size_t>(col));
  char* end = nullptr;
  const double value = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') {
    throw ValidationError("csv: cell '" + cell + "' is not a number");
  }
  return value;
}

std::vector<double> Table::numbers(const std::string& name) const {
  const int col = column(name);
  std::vector<double> values;
  values.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) values.push_back(number(r, col));
  return values;
}

Table parse(const std::string& text, const std::string& source_name) {
  Table table;
  std::vector<std::string> cells;
  std::string cell;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;

  auto end_cell = [&] {
    cells.push_back(cell);
    cell.clear();
  };
  auto end_row = [&] {
    if (!row_has_content && cells.empty()) return;
    end_cell();
    if (table.header.empty()) {
      table.header = cells;
    } else {
      if (cells.size() != table.header.size()) {
        std::ostringstream msg;
        msg << source_name << ":" << line << ": row has " << cells.size()
            << " cells, header has " << table.header.size();
        throw ValidationError(msg.str());
      }
      table.rows.push_back(cells);
    }
    cells.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        end_cell();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        cell += c;
        row_has_content = true;
    }
  }
  if (in_quotes) {
    throw ValidationError(source_name + ": unterminated quoted cell");
  }
  end_row();  // final line without trailing newline
  if (table.header.empty()) {
    throw ValidationError(source_name + ": empty table");
  }
  return table;
}

Table load(const std::filesystem::path& path) {
  std::ifstream stream(path, std::ios::binary);
  if (!stream) throw ValidationError("csv: cannot open " + path.string());
  std::ostringstream buffer;
  buffer << stream.rdbuf();
  return parse(buffer.str(), path.string());
}

} // namespace gridtherm::csv
