// Minimal CSV writing and reading with fixed number formatting.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace drnwm::csv {

/// Shortest round-trip representation ("%.17g" trimmed), locale independent.
std::string format_number(double v);
/// Empty string for nullopt.
std::string format_optional(const std::optional<double>& v);

std::string join_row(const std::vector<std::string>& fields);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws FormatError when absent.
  std::size_t column(const std::string& name) const;
};

std::string format_table(const Table& t);
Table parse_table(const std::string& text);
Table read_table(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace drnwm::csv
