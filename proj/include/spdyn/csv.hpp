#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spdyn::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  // Column position by name; throws ParseError if absent.
  std::size_t column(std::string_view name) const;
};

// RFC-4180-ish reader: quoted fields, CRLF, optional UTF-8 BOM. Header required.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

double to_double(std::string_view field, std::size_t line);
long long to_int(std::string_view field, std::size_t line);

// Shortest round-trip representation.
std::string format_double(double v);
std::string quote_if_needed(std::string_view field);

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows);

}  // namespace spdyn::csv
