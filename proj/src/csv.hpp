#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "imbal/error.hpp"

namespace imbal::detail {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

// Unquoted comma-separated values; blank lines are skipped.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (!have_header) {
      table.header = split_csv_line(line);
      have_header = true;
    } else {
      table.rows.push_back(split_csv_line(line));
    }
  }
  if (in.bad()) fail(ErrorKind::kIo, "read failed for '" + path.string() + "'");
  if (!have_header) fail(ErrorKind::kData, "'" + path.string() + "' is empty");
  return table;
}

}  // namespace imbal::detail
