#include "lgcps/columnar.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lgcps {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    // trim surrounding whitespace
    size_t a = field.find_first_not_of(" \t\r");
    size_t b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string() : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail(const std::string& path, long line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

double parse_cell(const std::string& token, const std::string& path, long line) {
  if (token == "NA") return std::numeric_limits<double>::quiet_NaN();
  try {
    size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) fail(path, line, "malformed number '" + token + "'");
    return v;
  } catch (const std::invalid_argument&) {
    fail(path, line, "malformed number '" + token + "'");
  } catch (const std::out_of_range&) {
    fail(path, line, "number out of range '" + token + "'");
  }
}

}  // namespace

std::string ColumnSpec::header_token() const {
  if (!level_mb) return variable;
  return variable + "@level=" + format_value(*level_mb);
}

ColumnSpec ColumnSpec::parse(const std::string& token) {
  ColumnSpec spec;
  const size_t at = token.find("@level=");
  if (at == std::string::npos) {
    spec.variable = token;
    return spec;
  }
  spec.variable = token.substr(0, at);
  const std::string level = token.substr(at + 7);
  try {
    spec.level_mb = std::stod(level);
  } catch (...) {
    throw std::runtime_error("bad level suffix in column '" + token + "'");
  }
  return spec;
}

Eigen::Index ColumnarTable::find_column(const std::string& variable,
                                        std::optional<double> level_mb) const {
  for (size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].variable != variable) continue;
    if (!level_mb) return static_cast<Eigen::Index>(c);
    if (columns[c].level_mb && std::abs(*columns[c].level_mb - *level_mb) < 1e-9)
      return static_cast<Eigen::Index>(c);
  }
  return -1;
}

ColumnarTable read_columnar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");

  ColumnarTable table;
  std::string line;
  long lineno = 0;

  // header
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    break;
  }
  if (line.empty()) throw std::runtime_error(path + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "lon" || header[1] != "lat")
    fail(path, lineno, "header must start with lon,lat and have at least one value column");
  for (size_t c = 2; c < header.size(); ++c) table.columns.push_back(ColumnSpec::parse(header[c]));

  std::vector<std::array<double, 2>> coords;
  std::vector<double> flat;
  const size_t ncols = table.columns.size();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tokens = split_csv(line);
    if (tokens.size() != ncols + 2)
      fail(path, lineno,
           "expected " + std::to_string(ncols + 2) + " fields, got " +
               std::to_string(tokens.size()));
    const double lon = parse_cell(tokens[0], path, lineno);
    const double lat = parse_cell(tokens[1], path, lineno);
    if (!std::isfinite(lon) || !std::isfinite(lat)) fail(path, lineno, "missing coordinates");
    coords.push_back({lon, lat});
    for (size_t c = 0; c < ncols; ++c) flat.push_back(parse_cell(tokens[c + 2], path, lineno));
  }
  if (coords.empty()) throw std::runtime_error(path + ": no data rows");

  table.coords.reserve(coords.size());
  for (const auto& c : coords) table.coords.emplace_back(c[0], c[1]);
  table.values.resize(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(ncols));
  for (Eigen::Index r = 0; r < table.values.rows(); ++r)
    for (Eigen::Index c = 0; c < table.values.cols(); ++c)
      table.values(r, c) = flat[static_cast<size_t>(r) * ncols + static_cast<size_t>(c)];
  return table;
}

void write_columnar(const std::string& path, const ColumnarTable& table) {
  if (table.values.rows() != table.rows() ||
      table.values.cols() != static_cast<Eigen::Index>(table.columns.size()))
    throw std::invalid_argument("write_columnar: inconsistent table shape");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "lon,lat";
  for (const auto& col : table.columns) out << "," << col.header_token();
  out << "\n";
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    out << format_value(table.coords[r].lon) << "," << format_value(table.coords[r].lat);
    for (Eigen::Index c = 0; c < table.values.cols(); ++c)
      out << "," << format_value(table.values(r, c));
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string format_value(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace lgcps
