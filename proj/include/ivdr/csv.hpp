#pragma once

#include <string>
#include <vector>

namespace ivdr::csv {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // row-major, rows[i].size() == columns.size()

  int col_index(const std::string& name) const;  // -1 when absent
};

// lines starting with '#' are skipped (manifest references)
Table read_file(const std::string& path);
Table parse(const std::string& text);

// string-valued variant for tables with non-numeric columns
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int col_index(const std::string& name) const;
};

RawTable read_raw(const std::string& path);
RawTable parse_raw(const std::string& text);

// 12 significant digits, comma separated, header row
std::string format_value(double v);
void write_file(const std::string& path, const std::vector<std::string>& columns,
                const std::vector<std::vector<double>>& rows);

}  // namespace ivdr::csv
