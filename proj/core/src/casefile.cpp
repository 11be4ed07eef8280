#include "gridtherm/casefile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gridtherm/csv.hpp"

namespace gridtherm {

std::vector<double> SweepSpec::default_weights() {
  std::vector<double> weights;
  weights.reserve(20);
  for (int i = 1; i <= 20; ++i) weights.push_back((i * 5) / 100.0);
  return weights;
}

void SweepSpec::validate() const {
  if (target_scalings.empty()) throw ValidationError("sweep: target_scalings is empty");
  if (weights.empty()) throw ValidationError("sweep: weights is empty");
  for (const double s : target_scalings) {
    if (!(s > 0.0) || s > 1.0) {
      std::ostringstream msg;
      msg << "sweep: target scaling " << s
          << " outside (0, 1]; targets must stay at/below the current profile and above ambient";
      throw ValidationError(msg.str());
    }
  }
  for (const double c : weights) {
    if (!(c > 0.0)) {
      std::ostringstream msg;
      msg << "sweep: weight " << c << " must be positive";
      throw ValidationError(msg.str());
    }
  }
}

void MixedSpec::validate(double ambient_k) const {
  if (fan_grid_rpm.empty()) throw ValidationError("mixed: fan_grid is empty");
  if (current_grid_a.empty()) throw ValidationError("mixed: current_grid is empty");
  for (const double current : current_grid_a) {
    if (current < 0.0) {
      throw ValidationError("mixed: negative current magnitude in current_grid");
    }
  }
  if (!(temp_max_k > ambient_k)) {
    std::ostringstream msg;
    msg << "mixed: temp_max " << temp_max_k << " K does not exceed ambient " << ambient_k
        << " K: empty feasible set";
    throw ValidationError(msg.str());
  }
}

void CaseBundle::validate() const {
  geometry.validate();
  params.validate();
  grid.validate();
  if (ess) ess->validate();
  if (initial_current_a < 0.0) {
    throw ValidationError("thermal: initial_current_a must be non-negative");
  }
  if (!(params.convection_coeff(initial_fan_rpm) > 0.0)) {
    std::ostringstream msg;
    msg << "thermal: initial fan speed " << initial_fan_rpm
        << " rpm drives the convection coefficient non-positive";
    throw ValidationError(msg.str());
  }
  if (!(default_weight > 0.0)) {
    throw ValidationError("control: weight must be positive");
  }
  sweep.validate();
  mixed.validate(params.ambient_k);
}

namespace casefile {
namespace {

struct RawValue {
  std::string text;      // value with comments stripped, possibly multi-line
  std::size_t line = 0;  // 1-based line of the key
};

struct Section {
  std::map<std::string, RawValue> values;  // ordered for deterministic reporting
  std::size_t line = 0;
};

std::string strip_comment(const std::string& line) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quotes = !in_quotes;
    if (line[i] == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t");
  if (begin == std::string::npos) return {};
  const auto end = text.find_last_not_of(" \t");
  return text.substr(begin, end - begin + 1);
}

int bracket_depth_delta(const std::string& text) {
  int delta = 0;
  bool in_quotes = false;
  for (const char c : text) {
    if (c == '"') in_quotes = !in_quotes;
    if (in_quotes) continue;
    if (c == '[' || c == '(') ++delta;
    if (c == ']' || c == ')') --delta;
  }
  return delta;
}

class Diagnostics {
public:
  Diagnostics(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(std::size_t line, const std::string& what) const {
    std::ostringstream msg;
    msg << source_ << ":" << line << ": " << what;
    throw ValidationError(msg.str());
  }
  const std::string& source() const { return source_; }

private:
  std::string source_;
};

double parse_number(const Diagnostics& diag, const RawValue& raw, const std::string& key) {
  const std::string text = trim(raw.text);
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    diag.fail(raw.line, "value '" + text + "' for key '" + key + "' is not a number");
  }
  return value;
}

int parse_integer(const Diagnostics& diag, const RawValue& raw, const std::string& key) {
  const double value = parse_number(diag, raw, key);
  const double rounded = std::round(value);
  if (std::abs(value - rounded) > 1e-9) {
    diag.fail(raw.line, "value for key '" + key + "' must be an integer");
  }
  return static_cast<int>(rounded);
}

bool parse_boolean(const Diagnostics& diag, const RawValue& raw, const std::string& key) {
  const std::string text = trim(raw.text);
  if (text == "true") return true;
  if (text == "false") return false;
  diag.fail(raw.line, "value for key '" + key + "' must be true or false");
}

std::string parse_string(const Diagnostics& diag, const RawValue& raw, const std::string& key) {
  std::string text = trim(raw.text);
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    return text.substr(1, text.size() - 2);
  }
  if (text.empty()) diag.fail(raw.line, "empty value for key '" + key + "'");
  return text;
}

/// Splits "[a, b, (c, d)]" into top-level comma-separated element strings.
std::vector<std::string> split_list(const Diagnostics& diag, const RawValue& raw,
                                    const std::string& key) {
  const std::string text = trim(raw.text);
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    diag.fail(raw.line, "value for key '" + key + "' must be a [...] list");
  }
  std::vector<std::string> elements;
  std::string current;
  int depth = 0;
  for (std::size_t i = 1; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (c == ',' && depth == 0) {
      const std::string element = trim(current);
      if (!element.empty()) elements.push_back(element);
      current.clear();
    } else if (c == '\n') {
      current += ' ';
    } else {
      current += c;
    }
  }
  const std::string last = trim(current);
  if (!last.empty()) elements.push_back(last);
  return elements;
}

std::vector<double> parse_number_list(const Diagnostics& diag, const RawValue& raw,
                                      const std::string& key) {
  std::vector<double> values;
  for (const std::string& element : split_list(diag, raw, key)) {
    char* end = nullptr;
    const double value = std::strtod(element.c_str(), &end);
    if (end != element.c_str() + element.size()) {
      diag.fail(raw.line, "list entry '" + element + "' for key '" + key + "' is not a number");
    }
    values.push_back(value);
  }
  if (values.empty()) diag.fail(raw.line, "list for key '" + key + "' is empty");
  return values;
}

std::vector<std::vector<double>> parse_tuple_list(const Diagnostics& diag, const RawValue& raw,
                                                  const std::string& key, std::size_t arity) {
  std::vector<std::vector<double>> tuples;
  for (const std::string& element : split_list(diag, raw, key)) {
    if (element.size() < 2 || element.front() != '(' || element.back() != ')') {
      diag.fail(raw.line, "list entry '" + element + "' for key '" + key +
                              "' must be a (...) tuple");
    }
    std::vector<double> tuple;
    std::istringstream body(element.substr(1, element.size() - 2));
    std::string cell;
    while (std::getline(body, cell, ',')) {
      const std::string token = trim(cell);
      char* end = nullptr;
      const double value = std::strtod(token.c_str(), &end);
      if (token.empty() || end != token.c_str() + token.size()) {
        diag.fail(raw.line,
                  "tuple entry '" + token + "' for key '" + key + "' is not a number");
      }
      tuple.push_back(value);
    }
    if (tuple.size() != arity) {
      std::ostringstream msg;
      msg << "tuple " << element << " for key '" << key << "' has " << tuple.size()
          << " entries, expected " << arity;
      diag.fail(raw.line, msg.str());
    }
    tuples.push_back(std::move(tuple));
  }
  if (tuples.empty()) diag.fail(raw.line, "list for key '" + key + "' is empty");
  return tuples;
}

/// Pulls the section/key/value structure out of the raw text, joining
/// bracketed multi-line values and rejecting anything malformed.
std::map<std::string, Section> tokenize(const Diagnostics& diag, std::string_view text) {
  static const std::set<std::string> known_sections = {"network", "ess",     "thermal",
                                                       "control", "sweep",  "mixed"};
  std::map<std::string, Section> sections;
  std::string current_section;

  std::istringstream stream{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string content = trim(strip_comment(line));
    if (content.empty()) continue;

    if (content.front() == '[' && content.back() == ']' &&
        bracket_depth_delta(content) == 0 && content.find('=') == std::string::npos) {
      const std::string name = trim(content.substr(1, content.size() - 2));
      if (known_sections.find(name) == known_sections.end()) {
        diag.fail(line_number, "unknown section [" + name + "]");
      }
      if (sections.find(name) != sections.end()) {
        diag.fail(line_number, "section [" + name + "] appears twice");
      }
      current_section = name;
      sections[name].line = line_number;
      continue;
    }

    const auto equals = content.find('=');
    if (equals == std::string::npos) {
      diag.fail(line_number, "expected 'key = value', got '" + content + "'");
    }
    if (current_section.empty()) {
      diag.fail(line_number, "key outside any [section]");
    }
    const std::string key = trim(content.substr(0, equals));
    if (key.empty()) diag.fail(line_number, "empty key");
    std::string value = trim(content.substr(equals + 1));

    const std::size_t key_line = line_number;
    int depth = bracket_depth_delta(value);
    while (depth > 0 && std::getline(stream, line)) {
      ++line_number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string more = trim(strip_comment(line));
      value += '\n';
      value += more;
      depth += bracket_depth_delta(more);
    }
    if (depth != 0) diag.fail(key_line, "unbalanced brackets in value for key '" + key + "'");

    auto& section = sections[current_section];
    if (!section.values.emplace(key, RawValue{value, key_line}).second) {
      diag.fail(key_line, "key '" + key + "' appears twice in [" + current_section + "]");
    }
  }
  return sections;
}

/// Takes each handled key out of the section map; whatever remains at the end
/// is unknown and reported with its line number.
class SectionReader {
public:
  SectionReader(const Diagnostics& diag, Section* section, std::string name)
      : diag_(diag), section_(section), name_(std::move(name)) {}

  bool has(const std::string& key) const {
    return section_ != nullptr && section_->values.find(key) != section_->values.end();
  }

  std::optional<RawValue> take(const std::string& key) {
    if (section_ == nullptr) return std::nullopt;
    const auto it = section_->values.find(key);
    if (it == section_->values.end()) return std::nullopt;
    RawValue raw = it->second;
    section_->values.erase(it);
    return raw;
  }

  void number(const std::string& key, double* out) {
    if (auto raw = take(key)) *out = parse_number(diag_, *raw, key);
  }
  void integer(const std::string& key, int* out) {
    if (auto raw = take(key)) *out = parse_integer(diag_, *raw, key);
  }
  void boolean(const std::string& key, bool* out) {
    if (auto raw = take(key)) *out = parse_boolean(diag_, *raw, key);
  }
  void number_list(const std::string& key, std::vector<double>* out) {
    if (auto raw = take(key)) *out = parse_number_list(diag_, *raw, key);
  }

  void finish() const {
    if (section_ == nullptr || section_->values.empty()) return;
    const auto& [key, raw] = *section_->values.begin();
    diag_.fail(raw.line, "unknown key '" + key + "' in [" + name_ + "]");
  }

private:
  const Diagnostics& diag_;
  Section* section_;
  std::string name_;
};

std::vector<std::vector<double>> load_table(const Diagnostics& diag, const RawValue& raw,
                                            const std::string& key,
                                            const std::filesystem::path& base_dir,
                                            const std::vector<std::string>& columns) {
  const std::string name = parse_string(diag, raw, key);
  std::filesystem::path path(name);
  if (path.is_relative()) path = base_dir / path;
  const csv::Table table = csv::load(path);
  if (table.header != columns) {
    std::ostringstream expected;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i > 0) expected << ",";
      expected << columns[i];
    }
    diag.fail(raw.line, "table " + path.string() + " must have header '" + expected.str() + "'");
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<double> row;
    row.reserve(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      row.push_back(table.number(r, static_cast<int>(c)));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace

CaseBundle parse_case(std::string_view text, const std::string& source_name,
                      const std::filesystem::path& base_dir) {
  const Diagnostics diag(source_name);
  auto sections = tokenize(diag, text);
  auto section_of = [&](const char* name) -> Section* {
    const auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
  };

  CaseBundle bundle;
  bundle.source = source_name;

  // --- [network] ------------------------------------------------------------
  {
    Section* section = section_of("network");
    if (section == nullptr) {
      throw ValidationError(source_name + ": missing required section [network]");
    }
    SectionReader reader(diag, section, "network");

    double base_kv = 12.66;
    double base_mva = 1.0;
    double v_min = 0.9;
    double v_max = 1.1;
    double dt_minutes = 5.0;
    reader.number("base_kv", &base_kv);
    reader.number("base_mva", &base_mva);
    reader.integer("slack_bus", &bundle.grid.slack_bus);
    reader.number("v_min", &v_min);
    reader.number("v_max", &v_max);
    reader.integer("horizon", &bundle.grid.horizon);
    reader.number("dt_minutes", &dt_minutes);
    reader.number("grid_buy", &bundle.grid.tariffs.grid_buy);
    reader.number("grid_sell", &bundle.grid.tariffs.grid_sell);
    reader.number("ess_discharge", &bundle.grid.tariffs.ess_discharge);
    reader.number("ess_charge", &bundle.grid.tariffs.ess_charge);

    if (!(base_kv > 0.0) || !(base_mva > 0.0)) {
      diag.fail(section->line, "base_kv and base_mva must be positive");
    }
    bundle.grid.v_min_sq = v_min * v_min;
    bundle.grid.v_max_sq = v_max * v_max;
    bundle.grid.dt_hours = dt_minutes / 60.0;

    const std::vector<std::string> line_columns = {"from", "to", "r_ohm", "x_ohm"};
    const std::vector<std::string> load_columns = {"bus", "p_kw", "q_kvar"};
    std::vector<std::vector<double>> line_rows;
    std::vector<std::vector<double>> load_rows;
    const auto inline_lines = reader.take("lines");
    const auto file_lines = reader.take("lines_file");
    if (inline_lines && file_lines) {
      diag.fail(file_lines->line, "give either 'lines' or 'lines_file', not both");
    }
    if (inline_lines) line_rows = parse_tuple_list(diag, *inline_lines, "lines", 4);
    if (file_lines) line_rows = load_table(diag, *file_lines, "lines_file", base_dir, line_columns);
    const auto inline_loads = reader.take("loads");
    const auto file_loads = reader.take("loads_file");
    if (inline_loads && file_loads) {
      diag.fail(file_loads->line, "give either 'loads' or 'loads_file', not both");
    }
    if (inline_loads) load_rows = parse_tuple_list(diag, *inline_loads, "loads", 3);
    if (file_loads) load_rows = load_table(diag, *file_loads, "loads_file", base_dir, load_columns);
    if (line_rows.empty()) {
      diag.fail(section->line, "section [network] needs 'lines' or 'lines_file'");
    }
    reader.finish();

    const double z_base = base_kv * base_kv / base_mva;
    std::set<int> bus_ids{bundle.grid.slack_bus};
    for (const auto& row : line_rows) {
      network::Line line;
      line.from = static_cast<int>(std::llround(row[0]));
      line.to = static_cast<int>(std::llround(row[1]));
      line.r_pu = row[2] / z_base;
      line.x_pu = row[3] / z_base;
      bus_ids.insert(line.from);
      bus_ids.insert(line.to);
      bundle.grid.lines.push_back(line);
    }
    for (const auto& row : load_rows) bus_ids.insert(static_cast<int>(std::llround(row[0])));
    for (const int id : bus_ids) bundle.grid.buses.push_back(network::Bus{id, 0.0, 0.0});
    for (const auto& row : load_rows) {
      const int id = static_cast<int>(std::llround(row[0]));
      network::Bus& bus = bundle.grid.buses[static_cast<std::size_t>(
          bundle.grid.bus_index(id))];
      bus.p_load_mw += row[1] / 1000.0;
      bus.q_load_mvar += row[2] / 1000.0;
    }
  }

  // --- [ess] ----------------------------------------------------------------
  if (Section* section = section_of("ess")) {
    network::EssConfig ess;
    SectionReader reader(diag, section, "ess");
    reader.integer("bus", &ess.bus);
    reader.number("capacity_kwh", &ess.capacity_kwh);
    reader.number("soc_min_kwh", &ess.soc_min_kwh);
    reader.number("soc_max_kwh", &ess.soc_max_kwh);
    reader.number("initial_soc_kwh", &ess.initial_soc_kwh);
    reader.number("eta_charge", &ess.eta_charge);
    reader.number("eta_discharge", &ess.eta_discharge);
    reader.number("p_charge_max_kw", &ess.p_charge_max_kw);
    reader.number("p_discharge_max_kw", &ess.p_discharge_max_kw);
    reader.number("rated_voltage_v", &ess.rated_voltage_v);
    reader.integer("series_modules", &ess.series_modules);
    reader.integer("parallel_strings", &ess.parallel_strings);
    reader.finish();
    bundle.ess = ess;
  }

  // --- [thermal] ------------------------------------------------------------
  if (Section* section = section_of("thermal")) {
    SectionReader reader(diag, section, "thermal");
    reader.integer("n_modules", &bundle.geometry.n_modules);
    reader.number("length", &bundle.geometry.module_depth_m);
    reader.number("contact_face_area", &bundle.geometry.contact_face_area_m2);
    reader.number("side_face_area", &bundle.geometry.side_face_area_m2);
    reader.number("k_b", &bundle.params.casing_conductivity);
    reader.number("h0", &bundle.params.base_convection);
    reader.number("lambda", &bundle.params.fan_sensitivity);
    reader.number("u_f0", &bundle.params.reference_fan_speed);
    reader.number("ambient", &bundle.params.ambient_k);
    reader.number("r_ref", &bundle.params.reference_resistance);
    reader.number("alpha_T", &bundle.params.resistance_temp_coeff);
    reader.number("t_ref", &bundle.params.reference_temperature_k);
    reader.number("initial_fan_rpm", &bundle.initial_fan_rpm);
    reader.number("initial_current_a", &bundle.initial_current_a);
    reader.finish();
  }

  // --- [control] ------------------------------------------------------------
  if (Section* section = section_of("control")) {
    SectionReader reader(diag, section, "control");
    if (auto raw = reader.take("reduction")) {
      const std::string mode = parse_string(diag, *raw, "reduction");
      try {
        bundle.reduction = control::Reduction::parse(mode);
      } catch (const ValidationError& error) {
        diag.fail(raw->line, error.what());
      }
    }
    reader.number("weight", &bundle.default_weight);
    reader.boolean("raw_targets", &bundle.sweep.raw_targets);
    reader.finish();
  }
  bundle.sweep.reduction = bundle.reduction;
  bundle.sweep.reference_weight = bundle.default_weight;

  // --- [sweep] --------------------------------------------------------------
  if (Section* section = section_of("sweep")) {
    SectionReader reader(diag, section, "sweep");
    reader.number_list("target_scalings", &bundle.sweep.target_scalings);
    reader.number_list("weights", &bundle.sweep.weights);
    reader.number("reference_scale", &bundle.sweep.reference_scale);
    reader.number("reference_weight", &bundle.sweep.reference_weight);
    reader.finish();
  }

  // --- [mixed] --------------------------------------------------------------
  if (Section* section = section_of("mixed")) {
    SectionReader reader(diag, section, "mixed");
    reader.number_list("fan_grid", &bundle.mixed.fan_grid_rpm);
    reader.number_list("current_grid", &bundle.mixed.current_grid_a);
    reader.number("temp_max", &bundle.mixed.temp_max_k);
    reader.finish();
  }

  bundle.validate();
  return bundle;
}

CaseBundle load_case(const std::filesystem::path& path) {
  std::ifstream stream(path, std::ios::binary);
  if (!stream) {
    throw ValidationError("case: cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << stream.rdbuf();
  return parse_case(buffer.str(), path.string(), path.parent_path());
}

} // namespace casefile
} // namespace gridtherm
