#include "ivdr/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ivdr/errors.hpp"

namespace ivdr::csv {

int Table::col_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return static_cast<int>(j);
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& col) {
  const std::string s = trim(raw);
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw SpecError("cannot parse '" + s + "' as a number at row " +
                    std::to_string(row) + ", column '" + col + "'");
  return v;
}

}  // namespace

RawTable parse_raw(const std::string& text) {
  RawTable t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  std::size_t rownum = 0;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto cells = split_line(line);
    if (!have_header) {
      for (auto& c : cells) t.columns.push_back(trim(c));
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size())
      throw SpecError("row " + std::to_string(rownum) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(t.columns.size()));
    for (auto& c : cells) c = trim(c);
    t.rows.push_back(std::move(cells));
    ++rownum;
  }
  if (!have_header) throw SpecError("empty CSV input");
  return t;
}

int RawTable::col_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return static_cast<int>(j);
  return -1;
}

RawTable read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_raw(buf.str());
}

Table parse(const std::string& text) {
  const RawTable raw = parse_raw(text);
  Table t;
  t.columns = raw.columns;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    std::vector<double> row(raw.rows[i].size());
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = parse_cell(raw.rows[i][j], i, t.columns[j]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_file(const std::string& path, const std::vector<std::string>& columns,
                const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < columns.size(); ++j)
    out << (j ? "," : "") << columns[j];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j)
      out << (j ? "," : "") << format_value(r[j]);
    out << "\n";
  }
}

}  // namespace ivdr::csv
