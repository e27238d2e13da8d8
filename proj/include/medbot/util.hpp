#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace medbot {

std::string read_file(const std::filesystem::path& path);

// Lines of a UTF-8 data file with '#' comments and surrounding blanks removed.
// Empty lines are dropped; the returned pairs carry the 1-based line number.
struct DataLine {
  std::size_t line_no;
  std::string text;
};
std::vector<DataLine> read_data_lines(const std::filesystem::path& path);

// ASCII-only case folding; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// One CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_csv_line(std::string_view line);

// Whole CSV document; quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

bool contains_ci(std::string_view haystack, std::string_view needle_lower);

std::uint64_t fnv1a(std::string_view s);

// Write-then-rename with fsync on the file; throws PersistenceError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace medbot
