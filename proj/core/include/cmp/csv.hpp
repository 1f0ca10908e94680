#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cmp {

/// Shortest decimal text that parses back to exactly `v`. Non-finite values
/// print as "nan", "inf" or "-inf".
std::string format_double(double v);
void append_double(std::string& out, double v);

/// Strict numeric parsing; throws std::invalid_argument on trailing garbage.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// Splits on commas; surrounding spaces of each field are trimmed.
std::vector<std::string_view> split_csv_line(std::string_view line);
/// Splits on runs of spaces and tabs.
std::vector<std::string_view> split_whitespace(std::string_view line);
std::string_view trim(std::string_view s);

/// Writes `content` to `path` (creating parent directories), replacing any
/// existing file.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cmp
