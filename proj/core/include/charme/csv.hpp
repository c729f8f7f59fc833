#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace charme {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by header name; throws ParseError when absent.
  [[nodiscard]] std::size_t column(std::string_view name) const;
};

/// RFC 4180 output: CRLF line endings, fields quoted only when needed.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string to_csv_string(const CsvTable& table);

/// Accepts CRLF or LF line endings and quoted fields. Header row required.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

double parse_double(std::string_view field);

}  // namespace charme
